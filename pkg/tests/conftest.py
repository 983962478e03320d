import sys
from pathlib import Path

# make the sibling oracle helpers importable as a plain module
sys.path.insert(0, str(Path(__file__).parent))

# (criterion number, title, "PASS"/"FAIL", detail) tuples collected by the
# acceptance tests and echoed as one line per criterion after the run
ACCEPTANCE_RESULTS: list[tuple[int, str, str, str]] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num, title, status, detail in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"criterion {num} [{status}] {title}: {detail}")
