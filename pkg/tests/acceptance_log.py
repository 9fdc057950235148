"""Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""
import sys

LINES: list[str] = []


def record(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {number:2d} {title}: {detail}"
    LINES.append(line)
    print(line, file=sys.__stdout__, flush=True)
    assert ok, line
