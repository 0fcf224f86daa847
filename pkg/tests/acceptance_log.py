"""Collects one verdict line per acceptance criterion for the terminal summary."""

LINES: list[str] = []


def record(criterion: str, passed: bool, detail: str) -> bool:
    LINES.append(f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {detail}")
    return passed
