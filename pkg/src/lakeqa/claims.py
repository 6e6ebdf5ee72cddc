"""Parse positional claims out of free-text answers and check them against mask-derived lakes.

The parser is rule-based over the closed vocabulary the templates use
(counts, ordinals, quadrant phrases, near/far phrases). Anything outside
that vocabulary is left absent rather than guessed, and shows up as a
lower ``parse_coverage``.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .instances import AnalysisConfig, LakeInstance, Proximity, Quadrant, analyze
from .raster import load_mask, resolve_mask

log = logging.getLogger(__name__)

_NUMBER_WORDS = {
    w: i
    for i, w in enumerate(
        "zero one two three four five six seven eight nine ten eleven twelve thirteen "
        "fourteen fifteen sixteen seventeen eighteen nineteen twenty".split()
    )
}
_ORDINAL_WORDS = {
    w: i
    for i, w in enumerate(
        "first second third fourth fifth sixth seventh eighth ninth tenth".split(), start=1
    )
}

_NUM = r"\d+|" + "|".join(_NUMBER_WORDS)
_COUNT_BEFORE = re.compile(
    rf"\b(?P<n>{_NUM}|single|only)\s+(?:(?:distinct|separate|visible)\s+)?glacial\s+lakes?\b"
)
_COUNT_AFTER = re.compile(rf"\bglacial\s+lakes?\b(?:\s+\w+){{0,5}}?\s*(?::|\bis\b|\bare\b|=)\s*(?P<n>{_NUM})\b")
_IMPLIED_SINGLE = re.compile(r"\b(?:the|a)\s+glacial\s+lake\b(?!s)")
_PLURAL = re.compile(r"\bglacial\s+lakes\b")

_ORDINAL = re.compile(r"\b(?:(?P<num>\d+)(?:st|nd|rd|th)|(?P<word>" + "|".join(_ORDINAL_WORDS) + r"))\b")
_PROXIMITY = re.compile(r"\b(?:(?P<near>near(?:\s+to)?\s+the\s+cent(?:er|re))|(?P<far>far\s+(?:away\s+)?from\s+the\s+cent(?:er|re)))\b")
_QUADRANT = re.compile(r"\b(?:(?P<v>top|bottom)\s+(?P<h>left|right)|(?P<c>cent(?:er|re)))\b")


def normalize(text: str) -> str:
    text = text.lower().replace("\u2013", " ").replace("\u2014", " ").replace("-", " ")
    return " ".join(text.split())


@dataclass(frozen=True)
class Claim:
    ordinal: int | None = None
    quadrant: Quadrant | None = None
    proximity: Proximity | None = None


@dataclass(frozen=True)
class ClaimSet:
    stated_count: int | None = None
    claims: tuple[Claim, ...] = ()
    parse_coverage: float = 0.0

    def __post_init__(self) -> None:
        if self.stated_count is not None and self.stated_count < 1:
            raise ValueError(f"stated_count must be >= 1, got {self.stated_count}")
        ordinals = [c.ordinal for c in self.claims if c.ordinal is not None]
        if len(ordinals) != len(set(ordinals)):
            raise ValueError(f"duplicate ordinals in claims: {ordinals}")
        ordered = sorted(self.claims, key=lambda c: (c.ordinal is None, c.ordinal or 0))
        object.__setattr__(self, "claims", tuple(ordered))

    @property
    def is_empty(self) -> bool:
        return self.stated_count is None and not self.claims


def _parse_count(s: str) -> int | None:
    best: tuple[int, int] | None = None
    for pattern in (_COUNT_BEFORE, _COUNT_AFTER):
        for m in pattern.finditer(s):
            word = m.group("n")
            if word in ("single", "only"):
                value = 1
            elif word.isdigit():
                value = int(word)
            else:
                value = _NUMBER_WORDS[word]
            if value < 1:
                continue
            if best is None or m.start() < best[0]:
                best = (m.start(), value)
            break
    if best is not None:
        return best[1]
    if _IMPLIED_SINGLE.search(s) and not _PLURAL.search(s):
        return 1
    return None


def _events(s: str) -> list[tuple[int, str, object]]:
    events: list[tuple[int, str, object]] = []
    masked = list(s)
    for m in _PROXIMITY.finditer(s):
        events.append((m.start(), "prox", Proximity.NEAR if m.group("near") else Proximity.FAR))
        masked[m.start() : m.end()] = " " * (m.end() - m.start())
    hidden = "".join(masked)
    for m in _QUADRANT.finditer(hidden):
        if m.group("c"):
            quad = Quadrant.CENTER
        else:
            quad = Quadrant(f"{m.group('v')}_{m.group('h')}")
        events.append((m.start(), "quad", quad))
    for m in _ORDINAL.finditer(hidden):
        value = int(m.group("num")) if m.group("num") else _ORDINAL_WORDS[m.group("word")]
        if value >= 1:
            events.append((m.start(), "ord", value))
    events.sort(key=lambda e: e[0])
    return events


def parse_answer(text: str) -> ClaimSet:
    """Extract the stated lake count and per-lake (ordinal, quadrant, proximity) claims."""
    s = normalize(text)
    count = _parse_count(s)

    drafts: list[dict] = []
    current: dict | None = None
    pending: int | None = None
    for _, kind, value in _events(s):
        if kind == "ord":
            current = None
            pending = value
            continue
        slot = "quadrant" if kind == "quad" else "proximity"
        if current is None or current[slot] is not None:
            current = {"ordinal": pending, "quadrant": None, "proximity": None}
            pending = None
            drafts.append(current)
        current[slot] = value

    seen: set[int] = set()
    claims = []
    for d in drafts:
        ordinal = d["ordinal"]
        if ordinal in seen:
            ordinal = None
        elif ordinal is not None:
            seen.add(ordinal)
        proximity = d["proximity"]
        # A center label is always near; the phrase "center" fixes both fields.
        if d["quadrant"] is Quadrant.CENTER and proximity is None:
            proximity = Proximity.NEAR
        claims.append(Claim(ordinal, d["quadrant"], proximity))

    if count is None and not claims:
        return ClaimSet()
    lakes_expected = max(len(claims), count or 0)
    expected = 1 + 2 * lakes_expected
    recovered = (count is not None) + sum(
        (c.quadrant is not None) + (c.proximity is not None) for c in claims
    )
    return ClaimSet(count, tuple(claims), recovered / expected)


@dataclass(frozen=True)
class LakeCheck:
    ordinal: int
    quadrant_match: bool
    proximity_match: bool


@dataclass
class VerificationReport:
    image_id: str
    count_match: bool
    per_lake: list[LakeCheck] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def exact_match(self) -> bool:
        return self.count_match and all(c.quadrant_match and c.proximity_match for c in self.per_lake)

    def to_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "count_match": self.count_match,
            "per_lake": [
                {"ordinal": c.ordinal, "quadrant_match": c.quadrant_match, "proximity_match": c.proximity_match}
                for c in self.per_lake
            ],
            "exact_match": self.exact_match,
            "notes": list(self.notes),
        }


def _pair(claims: Sequence[Claim], truth: Sequence[LakeInstance], notes: list[str]) -> dict[int, Claim]:
    by_ordinal = {lake.ordinal_index: lake for lake in truth}
    paired: dict[int, Claim] = {}
    loose: list[Claim] = []
    for claim in claims:
        if claim.ordinal is None:
            loose.append(claim)
        elif claim.ordinal in by_ordinal:
            paired[claim.ordinal] = claim
        else:
            notes.append(f"extra claim for lake {claim.ordinal} (only {len(truth)} in mask)")

    # Ordinal-free claims: greedy unique assignment, truth in ordinal order,
    # first on quadrant+proximity, then quadrant alone, then whatever is left.
    free = [lake for lake in truth if lake.ordinal_index not in paired]
    passes = (
        lambda c, lake: c.quadrant is lake.position.quadrant and c.proximity is lake.position.proximity,
        lambda c, lake: c.quadrant is lake.position.quadrant,
        lambda c, lake: True,
    )
    for accept in passes:
        for lake in free:
            if lake.ordinal_index in paired:
                continue
            for i, claim in enumerate(loose):
                if accept(claim, lake):
                    paired[lake.ordinal_index] = loose.pop(i)
                    break
    for claim in loose:
        notes.append(f"unpaired claim without ordinal ({_describe(claim)})")
    return paired


def _describe(claim: Claim) -> str:
    quad = claim.quadrant.value if claim.quadrant else "?"
    prox = claim.proximity.value if claim.proximity else "?"
    return f"{quad}/{prox}"


def verify(claims: ClaimSet, truth: Sequence[LakeInstance], image_id: str = "") -> VerificationReport:
    """Compare parsed claims with ground-truth lakes (in ordinal order)."""
    notes: list[str] = []
    if claims.stated_count is None:
        notes.append("no lake count stated")
        count_match = False
    else:
        count_match = claims.stated_count == len(truth)
        if not count_match:
            notes.append(f"stated count {claims.stated_count} != {len(truth)} lakes in mask")

    paired = _pair(claims.claims, truth, notes)
    checks = []
    for lake in truth:
        claim = paired.get(lake.ordinal_index)
        if claim is None:
            notes.append(f"lake {lake.ordinal_index}: no claim")
            checks.append(LakeCheck(lake.ordinal_index, False, False))
            continue
        if claim.quadrant is None:
            notes.append(f"lake {lake.ordinal_index}: quadrant not stated")
        if claim.proximity is None:
            notes.append(f"lake {lake.ordinal_index}: proximity not stated")
        checks.append(
            LakeCheck(
                lake.ordinal_index,
                claim.quadrant is lake.position.quadrant,
                claim.proximity is lake.position.proximity,
            )
        )
    return VerificationReport(image_id, count_match, checks, notes)


def _rate(hits: int, total: int) -> float | None:
    return hits / total if total else None


def batch_verify(
    records: Iterable[dict],
    masks: str | Path,
    config: AnalysisConfig | None = None,
) -> tuple[list[VerificationReport], dict]:
    """Verify many answers against their masks.

    Each record needs ``image_id`` and ``answer`` (or ``text``). When a record
    carries a ``config_echo`` the mask is analysed with that configuration,
    otherwise with ``config``. Records whose mask is missing are listed in
    the aggregate and excluded from every rate.
    """
    config = config or AnalysisConfig()
    reports: list[VerificationReport] = []
    missing: list[str] = []
    total = 0
    for rec in records:
        total += 1
        image_id = rec["image_id"]
        path = resolve_mask(masks, image_id)
        if path is None:
            log.warning("no mask for %s", image_id)
            missing.append(image_id)
            continue
        echo = rec.get("config_echo")
        analysis = AnalysisConfig.from_echo(echo) if echo else config
        truth = analyze(load_mask(path), analysis)
        text = rec.get("answer", rec.get("text", ""))
        reports.append(verify(parse_answer(text), truth, image_id))

    reports.sort(key=lambda r: r.image_id)
    n = len(reports)
    lakes = [c for r in reports for c in r.per_lake]
    with_lakes = [r for r in reports if r.per_lake]
    aggregate = {
        "metric": "positional consistency (diagnostic; not a published benchmark metric)",
        "records": total,
        "evaluated": n,
        "missing_masks": len(missing),
        "missing_ids": sorted(missing),
        "exact_match_rate": _rate(sum(r.exact_match for r in reports), n),
        "count_accuracy": _rate(sum(r.count_match for r in reports), n),
        "quadrant_accuracy": _rate(sum(all(c.quadrant_match for c in r.per_lake) for r in with_lakes), len(with_lakes)),
        "proximity_accuracy": _rate(sum(all(c.proximity_match for c in r.per_lake) for r in with_lakes), len(with_lakes)),
        "lake_quadrant_accuracy": _rate(sum(c.quadrant_match for c in lakes), len(lakes)),
        "lake_proximity_accuracy": _rate(sum(c.proximity_match for c in lakes), len(lakes)),
    }
    return reports, aggregate
