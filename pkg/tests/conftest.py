"""Shared pytest hooks: acceptance verdicts are echoed in the terminal summary."""
import os

# single-threaded BLAS keeps timings and results reproducible
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")

ACCEPTANCE = []


def record(criterion, passed, detail):
    """Store and print one acceptance verdict."""
    line = f"ACCEPTANCE {'PASS' if passed else 'FAIL'} | {criterion} | {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE:
        terminalreporter.write_line(line)
