from typing import Iterable, Optional, Sequence, Tuple
import math
import re

from .exceptions import ConfigurationError, DataError, RecordError

_LANG_ID_PATTERN = re.compile(r'^\S+$')


def validate_lang_id(code: str, valid_codes: Optional[Iterable[str]] = None) -> bool:
    """Validate a language identifier token against the declared closed set."""
    if not code or not isinstance(code, str):
        raise ConfigurationError("LangId code must be a non-empty string")
    if not _LANG_ID_PATTERN.match(code):
        raise ConfigurationError(f"LangId code must be a single whitespace-free token: {code!r}")
    if valid_codes is not None:
        valid = set(valid_codes)
        if code not in valid:
            raise ConfigurationError(
                f"Unknown LangId: {code}. Valid codes are: {', '.join(sorted(valid))}"
            )
    return True


def validate_tokens(tokens: Sequence[str], field: str, line_number: Optional[int] = None) -> bool:
    """Validate that a token sequence is non-empty."""
    if not tokens:
        raise RecordError(f"Empty {field} sequence", line_number=line_number)
    return True


def validate_da_score(score: float, da_range: Tuple[float, float], index: Optional[int] = None) -> bool:
    """Validate a DA score against the declared dataset range."""
    low, high = da_range
    if score is None or not isinstance(score, (int, float)) or math.isnan(score):
        raise RecordError(f"DA score must be a number, got {score!r}", line_number=index)
    if score < low or score > high:
        raise RecordError(
            f"DA score {score} outside declared range [{low}, {high}]", line_number=index
        )
    return True


def validate_reserved_token(tokens: Sequence[str], reserved: str, field: str) -> bool:
    """Ensure a reserved symbol does not already occur in data."""
    if reserved in tokens:
        raise DataError(f"Reserved token {reserved!r} occurs in {field}: {' '.join(tokens)}")
    return True


def validate_probability(value: float, name: str) -> bool:
    """Validate a fraction in [0, 1)."""
    if not 0.0 <= value < 1.0:
        raise ConfigurationError(f"{name} must be in [0, 1), got {value}")
    return True
