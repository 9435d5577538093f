import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

import acceptance_log  # noqa: E402


def pytest_terminal_summary(terminalreporter):
    if not acceptance_log.LINES:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(acceptance_log.LINES, key=lambda c: int(c[1:])):
        terminalreporter.write_line(acceptance_log.LINES[cid])
