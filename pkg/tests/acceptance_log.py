"""Shared record of acceptance outcomes, printed by the terminal summary hook."""

RESULTS: dict[str, tuple[bool, str]] = {}


def record(key: str, ok: bool, detail: str) -> bool:
    RESULTS[key] = (bool(ok), detail)
    return bool(ok)
