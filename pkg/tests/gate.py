"""Verdict collection for the acceptance suite."""

VERDICTS: dict[int, str] = {}


def verdict(k: int, ok: bool, detail: str) -> bool:
    line = f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}"
    VERDICTS[k] = line
    print(line)
    return ok
