"""Diacritic folding shared by name normalization and affiliation tokenizing."""

from __future__ import annotations

import unicodedata

# Letters that NFKD does not decompose into a base letter plus marks.
_TRANSLIT = str.maketrans({
    "ß": "ss", "ẞ": "SS",
    "æ": "ae", "Æ": "AE",
    "œ": "oe", "Œ": "OE",
    "ø": "o", "Ø": "O",
    "ł": "l", "Ł": "L",
    "đ": "d", "Đ": "D",
    "ð": "d", "Ð": "D",
    "þ": "th", "Þ": "TH",
    "ı": "i",
    "ħ": "h", "Ħ": "H",
    "ŧ": "t", "Ŧ": "T",
    "ŋ": "n", "Ŋ": "N",
    "ĸ": "k",
    "ſ": "s",
})


def fold(text: str) -> str:
    """Strip diacritics: ``"Müller-Łódź"`` -> ``"Muller-Lodz"``."""
    text = unicodedata.normalize("NFKD", text.translate(_TRANSLIT))
    return "".join(c for c in text if not unicodedata.combining(c))
