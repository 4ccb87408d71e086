"""TIMIT-style phone annotations and voiced/unvoiced classification.

Tiers are sample-indexed (.PHN convention): one segment per line as
"begin end label", segments contiguous, first segment starting at 0.
The voiced/unvoiced grouping and the 61->39 scoring reduction are data,
not code; both ship as CSV files under ``uvswap/data/``.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

from .errors import UvswapError

MAJOR_VOICED = "V"
MAJOR_UNVOICED = "U"

VOICED_SUBS = frozenset({"Vowel", "Semivowel", "Nasal"})
UNVOICED_SUBS = frozenset(
    {"Stop", "Closure", "Affricate", "Fricative", "Silence", "Other"}
)
# The "SSt" subset: spans swapped by the silence-and-stops mix mode.
SILENCE_STOP_SUBS = frozenset({"Silence", "Stop", "Closure"})


class MalformedLine(UvswapError):
    code = "malformed_line"

    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no


class EmptyTier(UvswapError):
    code = "empty_tier"


class NonContiguous(UvswapError):
    code = "non_contiguous"

    def __init__(self, boundary: int):
        super().__init__(f"non-contiguous at {boundary}")
        self.boundary = boundary


class UnknownPhone(UvswapError):
    code = "unknown_phone"

    def __init__(self, label: str):
        super().__init__(f"unknown phone {label!r}")
        self.label = label


@dataclass(frozen=True)
class PhoneSegment:
    label: str
    start: int
    end: int

    @property
    def duration(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class PhoneTier:
    segments: tuple[PhoneSegment, ...]
    sample_rate: int

    @property
    def n_samples(self) -> int:
        return self.segments[-1].end if self.segments else 0

    def labels(self) -> list[str]:
        return [s.label for s in self.segments]


@dataclass(frozen=True)
class VUClass:
    major: str  # "V" or "U"
    sub: str


class ClassificationTable:
    """Phone -> VUClass lookup plus the scoring-set folding map.

    Both maps cover the same inventory; ``fold`` is additionally defined
    (as identity) on symbols already in the scoring set, so folding is
    idempotent.
    """

    def __init__(self, vu_map: dict[str, VUClass], fold_map: dict[str, str]):
        if set(vu_map) != set(fold_map):
            missing = set(vu_map) ^ set(fold_map)
            raise ValueError(f"classification and fold tables disagree on: {sorted(missing)}")
        for phone, cls in vu_map.items():
            voiced = cls.sub in VOICED_SUBS
            if (cls.major == MAJOR_VOICED) != voiced:
                raise ValueError(f"inconsistent class for {phone!r}: {cls}")
        self.vu_map = dict(vu_map)
        self.fold_map = dict(fold_map)
        self.scoring_set = frozenset(fold_map.values())

    def __contains__(self, label: str) -> bool:
        return label in self.vu_map

    @property
    def inventory(self) -> tuple[str, ...]:
        return tuple(sorted(self.vu_map))

    def classify(self, label: str) -> VUClass:
        try:
            return self.vu_map[label]
        except KeyError:
            raise UnknownPhone(label) from None

    def fold(self, label: str) -> str:
        folded = self.fold_map.get(label)
        if folded is not None:
            return folded
        if label in self.scoring_set:
            return label
        raise UnknownPhone(label)

    @classmethod
    def from_csv_strings(cls, vu_text: str, fold_text: str) -> "ClassificationTable":
        vu_map = {}
        for phone, fields in _iter_csv(vu_text, 3):
            vu_map[phone] = VUClass(major=fields[0], sub=fields[1])
        fold_map = {phone: fields[0] for phone, fields in _iter_csv(fold_text, 2)}
        return cls(vu_map, fold_map)

    @classmethod
    def from_files(cls, vu_path, fold_path) -> "ClassificationTable":
        with open(vu_path, encoding="utf-8") as f:
            vu_text = f.read()
        with open(fold_path, encoding="utf-8") as f:
            fold_text = f.read()
        return cls.from_csv_strings(vu_text, fold_text)

    @classmethod
    def load_default(cls) -> "ClassificationTable":
        global _DEFAULT_TABLE
        if _DEFAULT_TABLE is None:
            data = resources.files("uvswap.data")
            _DEFAULT_TABLE = cls.from_csv_strings(
                (data / "phones_vu.csv").read_text(encoding="utf-8"),
                (data / "fold39.csv").read_text(encoding="utf-8"),
            )
        return _DEFAULT_TABLE


_DEFAULT_TABLE: ClassificationTable | None = None


def _iter_csv(text: str, n_fields: int):
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = [f.strip() for f in line.split(",")]
        if len(fields) != n_fields:
            raise ValueError(f"expected {n_fields} comma-separated fields: {raw!r}")
        yield fields[0], fields[1:]


def parse_phn(text: str, sample_rate: int, table: ClassificationTable | None = None) -> PhoneTier:
    """Parse .PHN file contents into a PhoneTier.

    Whitespace-tolerant; blank lines and a trailing newline are ignored.
    When ``table`` is given, labels are validated against its inventory.
    """
    segments = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise MalformedLine(line_no, f"expected 'begin end label', got {raw!r}")
        try:
            start, end = int(parts[0]), int(parts[1])
        except ValueError:
            raise MalformedLine(line_no, f"non-integer boundary in {raw!r}") from None
        if start < 0:
            raise MalformedLine(line_no, f"negative sample index in {raw!r}")
        if start >= end:
            raise MalformedLine(line_no, f"zero-length or inverted segment in {raw!r}")
        label = parts[2]
        if table is not None and label not in table:
            raise UnknownPhone(label)
        segments.append(PhoneSegment(label, start, end))
    if not segments:
        raise EmptyTier("annotation file contains no segments")
    if segments[0].start != 0:
        raise NonContiguous(0)
    for prev, cur in zip(segments, segments[1:]):
        if cur.start != prev.end:
            raise NonContiguous(prev.end)
    return PhoneTier(tuple(segments), sample_rate)


def format_phn(tier: PhoneTier) -> str:
    """Inverse of parse_phn: render a tier back to .PHN text."""
    return "".join(f"{s.start} {s.end} {s.label}\n" for s in tier.segments)


def classify(label: str, table: ClassificationTable) -> VUClass:
    return table.classify(label)


def fold(label: str, table: ClassificationTable) -> str:
    return table.fold(label)


def validate_tier(tier: PhoneTier, n_samples: int) -> list[str]:
    """Check a tier against a waveform length; returns all violations.

    Unlike parse_phn this never raises: it is meant for auditing tiers
    built by other means.
    """
    violations = []
    if not tier.segments:
        return ["tier is empty"]
    if tier.segments[0].start != 0:
        violations.append(f"tier starts at {tier.segments[0].start}, expected 0")
    for seg in tier.segments:
        if seg.start >= seg.end:
            violations.append(f"zero-length segment {seg.label!r} at {seg.start}")
    for prev, cur in zip(tier.segments, tier.segments[1:]):
        if cur.start != prev.end:
            violations.append(f"non-contiguous at {prev.end}")
    if tier.segments[-1].end > n_samples:
        violations.append(
            f"tier exceeds waveform: {tier.segments[-1].end} > {n_samples}"
        )
    return violations
