"""Shared test helpers and the acceptance-report hook.

Acceptance tests register one line per criterion through record_criterion;
the terminal-summary hook re-emits the collected lines so they stay
visible in captured pytest runs.
"""

import numpy as np

ACCEPTANCE_LINES: list[str] = []


def record_criterion(num: int, name: str, passed: bool) -> bool:
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {num}: {name}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.write_line("")
    terminalreporter.write_line("acceptance criteria")
    def key(line):
        return int(line.split("criterion ")[1].split(":")[0])
    for line in sorted(ACCEPTANCE_LINES, key=key):
        terminalreporter.write_line(line)


def cgauss(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard complex Gaussian array (unit variance per entry)."""
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
