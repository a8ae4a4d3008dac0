"""Reference token counting for prompt and observation budgets.

The rule is deliberately simple and implementation-independent: split on
whitespace, then count every maximal alphanumeric run and every single
punctuation character as one token. A production tokenizer can be plugged in
anywhere a `count_tokens` callable is accepted, as long as it keeps the same
signature.
"""

from __future__ import annotations

import re

_PIECE = re.compile(r"[A-Za-z0-9_]+|[^\sA-Za-z0-9_]")


def tokenize(text: str) -> list[str]:
    """Split text into reference tokens."""
    return _PIECE.findall(text)


def count_tokens(text: str) -> int:
    """Number of reference tokens in `text`."""
    return len(_PIECE.findall(text))
