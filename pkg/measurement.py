import time
import json
import logging
from pathlib import Path
from collections import defaultdict
from typing import DefaultDict, Dict, List, Callable
from functools import wraps


logger = logging.getLogger(__name__)


def _empty_timings(): return defaultdict(list)


_measurement_active: bool = False


timings: DefaultDict[str, List[Dict[str, int]]] = _empty_timings()


def is_active() -> bool:
    return _measurement_active


def begin_measurement() -> None:
    global _measurement_active

    assert not _measurement_active

    _measurement_active = True


def end_measurement(filename: str = None) -> Dict[str, List[Dict[str, int]]]:
    """
    Stops the active measurement and returns the recorded timings.
    If a filename is given, the timings are merged with those already stored in that file and written back.
    :param filename: Optionally, the path of the timings file.
    :return: The recorded (and possibly merged) timings.
    """
    global _measurement_active
    global timings

    assert _measurement_active

    result = dict(timings)

    if filename:
        # merge with old timings, if they exist on disk
        if Path(filename).is_file():
            with open(filename, mode="r") as fp:
                existing = json.load(fp)
            # convert to defaultdict to avoid KeyErrors
            existing = defaultdict(list, existing)
            keys = set.union(set(timings.keys()), set(existing.keys()))
            result = {key: existing[key] + timings[key] for key in keys}
            logger.info(f"Merged with existing measurements.")

        logger.info(f"Saving measurements to {filename}.")
        with open(filename, mode="w+") as fp:
            json.dump(result, fp)

    timings = _empty_timings()
    _measurement_active = False
    return result


def total_duration(recorded: Dict[str, List[Dict[str, int]]], name: str) -> int:
    """
    Sums the durations (ns) recorded for one stage.
    :param recorded: Timings as returned by end_measurement().
    :param name: Name of the stage.
    :return: Total duration in nanoseconds (0 if the stage never ran).
    """
    return sum(entry["duration"] for entry in recorded.get(name, []))


def measure(name: str) -> Callable[[Callable], Callable]:
    def measure_decorator(func: Callable) -> Callable:
        @wraps(func)
        def wrapper(*args, **kwargs):
            if not _measurement_active:
                return func(*args, **kwargs)

            start = time.time_ns()
            result = func(*args, **kwargs)
            stop = time.time_ns()
            timings[name].append({
                "start": start,
                "stop": stop,
                "duration": (stop-start)
            })

            return result

        return wrapper

    return measure_decorator
