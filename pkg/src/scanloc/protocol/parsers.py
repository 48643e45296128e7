"""Tolerant extraction of structured fields from free-form agent replies.

Every parser either returns a value (possibly with warnings) or raises
:class:`ParseError`; nothing else escapes, whatever the input text.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

from scanloc.geometry import PointPx, ZoneId


class ParseError(ValueError):
    """The reply does not contain the field the caller asked for."""


@dataclass(frozen=True)
class RegionScores:
    scores: dict[int, int]
    warnings: tuple[str, ...] = ()

    def ranked(self) -> list[int]:
        """Region indices by descending score, ties broken by lower index."""
        return sorted(self.scores, key=lambda i: (-self.scores[i], i))


@dataclass(frozen=True)
class Verdict:
    value: bool
    raw_reasoning: str = ""
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class CellZoneChoice:
    index: int
    zone: ZoneId


@dataclass(frozen=True)
class ParsedPoint:
    point: PointPx
    warnings: tuple[str, ...] = field(default=())


_NUM = r"[-+]?\d+(?:\.\d+)?"
_MARKDOWN = re.compile(r"\*\*|__|`|#+(?=\s)")
_REGION = re.compile(
    rf"region\s*#?\s*(\d+)\s*[\)\]]?\s*(?:\([^)\n]{{0,40}}\)\s*)?(?:[:=\-\u2013\u2014]|is)\s*"
    rf"(?:score\s*(?:of|[:=])?\s*)?({_NUM})",
    re.IGNORECASE,
)


def _to_int(token: str) -> int:
    if "." not in token:
        return int(token)
    value = float(token)
    if not math.isfinite(value):
        raise ParseError(f"number out of range: {token[:20]}...")
    return math.floor(value)


def parse_region_scores(text: str, regions: int = 9) -> RegionScores:
    """Read ``Region <n>: <score>`` lines for regions ``1..regions``.

    Markdown emphasis and trailing explanations are ignored. The first score
    seen for a region wins. Missing regions score 0 and scores outside
    ``[0, 100]`` are clamped; both add a warning.

    Raises:
        ParseError: if no region line is recognised at all.
    """
    cleaned = _MARKDOWN.sub("", text)
    scores: dict[int, int] = {}
    warnings: list[str] = []
    for match in _REGION.finditer(cleaned):
        index, raw = int(match.group(1)), match.group(2)
        if not 1 <= index <= regions:
            warnings.append(f"ignored out-of-range region {index}")
            continue
        if index in scores:
            warnings.append(f"duplicate score for region {index} ignored")
            continue
        value = _to_int(raw)
        if not 0 <= value <= 100:
            warnings.append(f"region {index} score {raw} clamped")
            value = min(max(value, 0), 100)
        scores[index] = value
    if not scores:
        raise ParseError("no region scores found")
    missing = [i for i in range(1, regions + 1) if i not in scores]
    if missing:
        warnings.append(f"regions {missing} missing; scored 0")
        for i in missing:
            scores[i] = 0
    return RegionScores(dict(sorted(scores.items())), tuple(warnings))


_YES_NO = re.compile(r"\b(yes|no)\b", re.IGNORECASE)


def parse_tagged_yes_no(text: str, tag: str) -> Verdict:
    """Read ``<tag>yes</tag>`` / ``<tag>no</tag>``; the last tagged answer wins.

    Without a tag, the last standalone yes/no word is used (with a warning).
    With neither, the verdict is ``False`` with a warning.
    """
    if tag not in ("answer", "relevance"):
        raise ValueError(f"unsupported tag {tag!r}")
    tagged = re.findall(
        rf"<\s*{tag}\s*>\s*\W*(yes|no)\b.*?<\s*/\s*{tag}\s*>", text, re.IGNORECASE | re.DOTALL
    )
    reasoning = re.search(r"<\s*reasoning\s*>(.*?)<\s*/\s*reasoning\s*>", text, re.IGNORECASE | re.DOTALL)
    raw = reasoning.group(1).strip() if reasoning else re.sub(
        rf"<\s*/?\s*{tag}\s*>", "", text
    ).strip()
    if tagged:
        return Verdict(tagged[-1].lower() == "yes", raw)
    loose = _YES_NO.findall(text)
    if loose:
        return Verdict(loose[-1].lower() == "yes", raw, (f"no <{tag}> tag; used bare '{loose[-1]}'",))
    return Verdict(False, raw, (f"no <{tag}> tag and no yes/no; defaulted to no",))


_VERTICAL = {"top": "top", "upper": "top", "bottom": "bottom", "lower": "bottom"}
_HORIZONTAL = {"left": "left", "right": "right"}
_CENTRAL = {"center", "centre", "middle", "central", "centered", "centred"}


def parse_zone(phrase: str) -> ZoneId:
    """Map a zone phrase like ``"Top-Left"`` or ``"middle right"`` to a :class:`ZoneId`."""
    words = re.findall(r"[a-z]+", phrase.lower())
    vertical = [_VERTICAL[w] for w in words if w in _VERTICAL]
    horizontal = [_HORIZONTAL[w] for w in words if w in _HORIZONTAL]
    central = [w for w in words if w in _CENTRAL]
    known = len(vertical) + len(horizontal) + len(central)
    if known == 0 or known != len(words) or len(set(vertical)) > 1 or len(set(horizontal)) > 1:
        raise ParseError(f"unrecognised zone {phrase!r}")
    row = {"top": 0, "bottom": 2}.get(vertical[0], 1) if vertical else 1
    col = {"left": 0, "right": 2}.get(horizontal[0], 1) if horizontal else 1
    return ZoneId.from_row_col(row, col)


def _tag_content(text: str, tag: str) -> str | None:
    found = re.findall(rf"<\s*{tag}\s*>(.*?)<\s*/\s*{tag}\s*>", text, re.IGNORECASE | re.DOTALL)
    return found[-1].strip() if found else None


def parse_tagged_index(text: str, upper: int, tag: str = "index") -> int:
    """Integer inside ``<tag>...</tag>`` (last occurrence), required in ``1..upper``."""
    content = _tag_content(text, tag)
    if content is None:
        raise ParseError(f"missing <{tag}> tag")
    number = re.search(r"\d+", content)
    if number is None:
        raise ParseError(f"<{tag}> holds no integer: {content[:40]!r}")
    value = int(number.group())
    if not 1 <= value <= upper:
        raise ParseError(f"<{tag}> value {value} outside 1..{upper}")
    return value


def parse_index_location(text: str, cells: int = 25) -> CellZoneChoice:
    """Read ``<index>`` (``1..cells``) and ``<location>`` (one of nine zones), in any order.

    Raises:
        ParseError: if either tag is missing or its value is invalid.
    """
    index = parse_tagged_index(text, cells, "index")
    location = _tag_content(text, "location")
    if location is None:
        raise ParseError("missing <location> tag")
    return CellZoneChoice(index, parse_zone(location))


_OPEN, _CLOSE = r"[\(\[]?\s*", r"\s*[\)\]]?"
_PAIR = re.compile(rf"({_NUM})\s*,\s*({_NUM})")
_BOX = re.compile(
    rf"({_NUM})\s*,\s*({_NUM}){_CLOSE}\s*,\s*{_OPEN}({_NUM})\s*,\s*({_NUM})"
)
_XY = re.compile(rf"\bx\s*[:=]\s*({_NUM}).{{0,20}}?\by\s*[:=]\s*({_NUM})", re.IGNORECASE | re.DOTALL)


def parse_point_detailed(text: str) -> ParsedPoint:
    """Like :func:`parse_point` but reports whether a box form was collapsed."""
    pair = _PAIR.search(text)
    if pair is not None:
        box = _BOX.match(text, pair.start())
        if box is not None:
            x1, y1, x2, y2 = (_to_int(g) for g in box.groups())
            center = PointPx((x1 + x2) // 2, (y1 + y2) // 2)
            return ParsedPoint(center, ("box reply collapsed to its center",))
        return ParsedPoint(PointPx(_to_int(pair.group(1)), _to_int(pair.group(2))))
    xy = _XY.search(text)
    if xy is not None:
        return ParsedPoint(PointPx(_to_int(xy.group(1)), _to_int(xy.group(2))))
    raise ParseError("no coordinate pair found")


def parse_point(text: str) -> PointPx:
    """First ``x, y`` integer pair in ``text``, optionally bracketed.

    A four-number box (``[x1, y1, x2, y2]`` or ``(x1, y1), (x2, y2)``) is
    collapsed to its floor center. Decimals are floored.
    """
    return parse_point_detailed(text).point
