"""Collects one summary line per acceptance criterion for the terminal report."""

LINES = []


def record(name: str, ok, detail: str) -> str:
    status = {True: "PASS", False: "FAIL", None: "WAIVED"}[ok]
    line = f"[{status}] {name}: {detail}"
    LINES.append(line)
    print(line)
    return line
