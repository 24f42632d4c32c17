"""
Typed value filters for configuration keys
Each factory returns a callable that parses one raw string or raises ValueError
"""

from typing import Any, Callable

Filter = Callable[[Any], Any]

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _describe(func: Filter, text: str) -> Filter:
    func.describe = text
    return func


def positive_float() -> Filter:
    """Strictly positive real number"""
    def func(raw):
        value = float(raw)
        if not value > 0:
            raise ValueError(f"must be positive (got {raw!r})")
        return value

    return _describe(func, "positive number")


def non_negative_float() -> Filter:
    def func(raw):
        value = float(raw)
        if not value >= 0:
            raise ValueError(f"must be non-negative (got {raw!r})")
        return value

    return _describe(func, "number >= 0")


def real() -> Filter:
    return _describe(lambda raw: float(raw), "number")


def fraction(upper: float = 1.0) -> Filter:
    """Number in [0, upper)"""
    def func(raw):
        value = float(raw)
        if not 0.0 <= value < upper:
            raise ValueError(f"must lie in [0, {upper:g}) (got {raw!r})")
        return value

    return _describe(func, f"number in [0, {upper:g})")


def integer(minimum: int = 0) -> Filter:
    def func(raw):
        text = str(raw).strip()
        value = int(text)
        if value < minimum:
            raise ValueError(f"must be at least {minimum} (got {raw!r})")
        return value

    return _describe(func, f"integer >= {minimum}")


def boolean() -> Filter:
    def func(raw):
        if isinstance(raw, bool):
            return raw
        text = str(raw).strip().lower()
        if text in _TRUE:
            return True
        if text in _FALSE:
            return False
        raise ValueError(f"must be a boolean (got {raw!r})")

    return _describe(func, "true/false")


def choice(*options: str) -> Filter:
    def func(raw):
        text = str(raw).strip()
        if text not in options:
            raise ValueError(f"must be one of {', '.join(options)} (got {raw!r})")
        return text

    return _describe(func, "|".join(options))


def optional(inner: Filter) -> Filter:
    """Empty string or 'none' maps to None, anything else goes through inner"""
    def func(raw):
        if raw is None or str(raw).strip().lower() in ("", "none", "auto"):
            return None
        return inner(raw)

    return _describe(func, f"{inner.describe} or auto")
