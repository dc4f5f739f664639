"""Collects one verdict line per acceptance criterion for the terminal summary."""

import contextlib
import time

LINES = []


@contextlib.contextmanager
def criterion(number, title):
    detail = {}
    start = time.perf_counter()
    try:
        yield detail
    except BaseException as exc:
        info = "; ".join(f"{k}={v}" for k, v in detail.items())
        LINES.append((number, f"criterion {number:>2} FAIL  {title} [{info}] {type(exc).__name__}: {exc}"
                      .replace("\n", " ")[:600]))
        raise
    info = "; ".join(f"{k}={v}" for k, v in detail.items())
    LINES.append((number, f"criterion {number:>2} PASS  {title} [{info}] "
                          f"({time.perf_counter() - start:.1f} s)"))
