"""Collects acceptance verdicts and prints one line per criterion at the end of the run."""

ACCEPTANCE: dict = {}


def record(key: str, title: str, passed: bool, details) -> None:
    ACCEPTANCE[key] = (title, passed, list(details))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k[1:])):
        title, passed, details = ACCEPTANCE[key]
        tr.write_line(f"{'PASS' if passed else 'FAIL'} {key} {title}")
        for d in details:
            tr.write_line(f"    {d}")
