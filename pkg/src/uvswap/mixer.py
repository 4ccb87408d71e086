"""Plan and render mixed (chimera) utterances.

A mix takes V segments from the source signal and selected segments from
the target signal, per the run mapping, and stitches them with an
equal-gain raised-cosine crossfade at every junction. Output timelines
are not warped: V pieces keep source durations, swapped pieces keep
target durations.

Modes:
  swap-u    every paired unvoiced run comes from the target
  swap-vu   swap-u plus a block of consecutive paired voiced runs
  swap-sst  within paired unvoiced runs, only silence/stop/closure phone
            spans come from the target (boundaries mapped proportionally
            into the paired target run)
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .annotations import (SILENCE_STOP_SUBS, ClassificationTable, MAJOR_UNVOICED,
                          MAJOR_VOICED, PhoneTier)
from .dsp import Waveform
from .errors import UvswapError
from .vu_align import MappingTable, RunSequence

ORIGIN_SOURCE = "source"
ORIGIN_TARGET = "target"

SWAP_U = "swap-u"
SWAP_VU = "swap-vu"
SWAP_SST = "swap-sst"
MIX_MODES = (SWAP_SST, SWAP_U, SWAP_VU)

DEFAULT_CROSSFADE = 80  # 5 ms at 16 kHz


class NoPairedRun(UvswapError):
    code = "no_paired_run"


class ModeUnsatisfiable(UvswapError):
    code = "mode_unsatisfiable"


class SampleRateMismatch(UvswapError):
    code = "sample_rate_mismatch"


class RangeOutOfBounds(UvswapError):
    code = "range_out_of_bounds"


class InsufficientOverlap(UvswapError):
    code = "insufficient_overlap"


@dataclass(frozen=True)
class MixMode:
    kind: str
    v_swap_start_run: int | None = None  # index among the source's voiced runs
    v_swap_count: int = 2

    def __post_init__(self):
        if self.kind not in MIX_MODES:
            raise ValueError(f"unknown mix mode {self.kind!r}")
        if self.kind == SWAP_VU and self.v_swap_count < 1:
            raise ValueError("v_swap_count must be >= 1 for swap-vu")


@dataclass(frozen=True)
class Piece:
    origin: str  # "source" or "target"
    start: int
    end: int

    @property
    def length(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class MixRecipe:
    pieces: tuple[Piece, ...]
    crossfade_len: int = DEFAULT_CROSSFADE
    target_gain: float = 1.0

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_dict(self) -> dict:
        return {
            "crossfade_len": self.crossfade_len,
            "target_gain": self.target_gain,
            "pieces": [
                {"origin": p.origin, "start": p.start, "end": p.end}
                for p in self.pieces
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MixRecipe":
        pieces = tuple(
            Piece(p["origin"], int(p["start"]), int(p["end"])) for p in doc["pieces"]
        )
        return cls(pieces, int(doc["crossfade_len"]), float(doc.get("target_gain", 1.0)))

    @classmethod
    def from_json(cls, text: str) -> "MixRecipe":
        return cls.from_dict(json.loads(text))


def _append_piece(pieces: list[Piece], piece: Piece) -> None:
    # merge abutting same-origin ranges so junctions only occur at real cuts
    if piece.end <= piece.start:
        return
    if pieces and pieces[-1].origin == piece.origin and pieces[-1].end == piece.start:
        pieces[-1] = Piece(piece.origin, pieces[-1].start, piece.end)
    else:
        pieces.append(piece)


def plan_mix(src_runs: RunSequence, tgt_runs: RunSequence, mapping: MappingTable,
             mode: MixMode, src_tier: PhoneTier, tgt_tier: PhoneTier,
             table: ClassificationTable | None = None,
             crossfade_len: int = DEFAULT_CROSSFADE,
             target_gain: float = 1.0) -> MixRecipe:
    """Build the declarative piece list for one mixed utterance.

    Unpaired source runs always keep source audio; unpaired target runs
    are skipped. swap-sst needs ``table`` to subclassify phones.
    """
    paired = mapping.paired()
    swap_v = _select_voiced_runs(src_runs, paired, mode) if mode.kind == SWAP_VU else set()
    if mode.kind == SWAP_SST and table is None:
        table = ClassificationTable.load_default()

    pieces: list[Piece] = []
    for i, run in enumerate(src_runs.runs):
        j = paired.get(i)
        if run.cls == MAJOR_VOICED:
            if i in swap_v:
                tgt = tgt_runs.runs[j]
                _append_piece(pieces, Piece(ORIGIN_TARGET, tgt.start, tgt.end))
            else:
                _append_piece(pieces, Piece(ORIGIN_SOURCE, run.start, run.end))
            continue
        # unvoiced run
        if j is None:
            _append_piece(pieces, Piece(ORIGIN_SOURCE, run.start, run.end))
        elif mode.kind in (SWAP_U, SWAP_VU):
            tgt = tgt_runs.runs[j]
            _append_piece(pieces, Piece(ORIGIN_TARGET, tgt.start, tgt.end))
        else:  # swap-sst: split at phone boundaries, map proportionally
            tgt = tgt_runs.runs[j]
            scale = tgt.duration / run.duration
            for seg in run.phones:
                sub = table.classify(seg.label).sub
                if sub in SILENCE_STOP_SUBS:
                    t0 = tgt.start + round((seg.start - run.start) * scale)
                    t1 = tgt.start + round((seg.end - run.start) * scale)
                    _append_piece(pieces, Piece(ORIGIN_TARGET, t0, t1))
                else:
                    _append_piece(pieces, Piece(ORIGIN_SOURCE, seg.start, seg.end))
    if not pieces:
        raise ModeUnsatisfiable("mix produced no pieces")
    return MixRecipe(tuple(pieces), crossfade_len, target_gain)


def _select_voiced_runs(src_runs: RunSequence, paired: dict[int, int],
                        mode: MixMode) -> set[int]:
    voiced = [i for i, r in enumerate(src_runs.runs) if r.cls == MAJOR_VOICED]
    count = mode.v_swap_count
    if mode.v_swap_start_run is not None:
        start = mode.v_swap_start_run
        if start < 0 or start + count > len(voiced):
            raise ModeUnsatisfiable(
                f"requested voiced runs {start}..{start + count - 1}, "
                f"only {len(voiced)} voiced runs exist")
        chosen = voiced[start:start + count]
        unpaired = [i for i in chosen if i not in paired]
        if unpaired:
            raise NoPairedRun(f"voiced runs at {unpaired} have no paired target run")
        return set(chosen)
    # default: the middle window of `count` consecutive voiced runs that
    # are all paired
    windows = [
        voiced[k:k + count]
        for k in range(len(voiced) - count + 1)
        if all(i in paired for i in voiced[k:k + count])
    ]
    if not windows:
        raise ModeUnsatisfiable(
            f"no {count} consecutive paired voiced runs available")
    return set(windows[(len(windows) - 1) // 2])


def crossfade(tail: np.ndarray, head: np.ndarray, n: int) -> np.ndarray:
    """Equal-gain raised-cosine blend of the first n samples of each side.

    out[k] = w(k) * tail[k] + (1 - w(k)) * head[k] with
    w(k) = 0.5 * (1 + cos(pi * k / (n - 1))), so w runs from 1 to 0.
    """
    if n < 2:
        raise ValueError("crossfade length must be >= 2")
    if len(tail) < n or len(head) < n:
        raise InsufficientOverlap(
            f"need {n} samples on both sides, have {len(tail)} and {len(head)}")
    w = 0.5 * (1.0 + np.cos(np.pi * np.arange(n) / (n - 1)))
    tail = np.asarray(tail)[:n]
    head = np.asarray(head)[:n]
    # head + w*(tail-head) == w*tail + (1-w)*head, but is exact when the
    # two sides are identical, which keeps self-mixes bit-transparent
    return head + w * (tail - head)


def _fetch(origin: str, start: int, end: int, src: Waveform, tgt: Waveform,
           gain: float) -> np.ndarray:
    wave = src if origin == ORIGIN_SOURCE else tgt
    out = wave.samples[start:end]
    if origin == ORIGIN_TARGET and gain != 1.0:
        out = out * gain
    return out


def render(recipe: MixRecipe, src: Waveform, tgt: Waveform) -> Waveform:
    wave, _ = render_with_junctions(recipe, src, tgt)
    return wave


def render_with_junctions(recipe: MixRecipe, src: Waveform,
                          tgt: Waveform) -> tuple[Waveform, list[tuple[int, int]]]:
    """Render a recipe; also return the output spans overwritten by fades.

    Outside the returned spans every output sample is bit-identical to its
    origin waveform (times target_gain for target pieces). At each junction
    the overlap is taken symmetrically around the cut, extending each piece
    into its origin waveform, and shrunk when a piece or its origin is too
    short; a zero overlap degrades to a hard cut.
    """
    if src.sample_rate != tgt.sample_rate:
        raise SampleRateMismatch(f"{src.sample_rate} != {tgt.sample_rate}")
    lengths = {ORIGIN_SOURCE: len(src), ORIGIN_TARGET: len(tgt)}
    for p in recipe.pieces:
        if p.start < 0 or p.end > lengths[p.origin] or p.start >= p.end:
            raise RangeOutOfBounds(
                f"{p.origin} range [{p.start}, {p.end}) invalid for "
                f"{lengths[p.origin]} samples")

    gain = recipe.target_gain
    out = np.concatenate(
        [_fetch(p.origin, p.start, p.end, src, tgt, gain) for p in recipe.pieces])

    junctions: list[tuple[int, int]] = []
    pos = 0
    for left, right in zip(recipe.pieces, recipe.pieces[1:]):
        pos += left.length
        half = min(
            recipe.crossfade_len // 2,
            left.length // 2,
            right.length // 2,
            lengths[left.origin] - left.end,  # room to extend the tail
            right.start,  # room to extend the head
        )
        if half < 1:
            continue
        tail = _fetch(left.origin, left.end - half, left.end + half, src, tgt, gain)
        head = _fetch(right.origin, right.start - half, right.start + half, src, tgt, gain)
        out[pos - half:pos + half] = crossfade(tail, head, 2 * half)
        junctions.append((pos - half, pos + half))
    return Waveform(out, src.sample_rate), junctions


def rms_gain(src: Waveform, tgt: Waveform) -> float:
    """Gain that matches the target's RMS level to the source's."""
    src_rms = float(np.sqrt(np.mean(np.square(src.samples))))
    tgt_rms = float(np.sqrt(np.mean(np.square(tgt.samples))))
    if tgt_rms == 0.0:
        return 1.0
    return src_rms / tgt_rms


def unvoiced_fraction(tier: PhoneTier, table: ClassificationTable) -> float:
    """Fraction of the tier's duration covered by unvoiced phones."""
    total = sum(s.duration for s in tier.segments)
    unvoiced = sum(
        s.duration for s in tier.segments
        if table.classify(s.label).major == MAJOR_UNVOICED)
    return unvoiced / total if total else 0.0


def replaced_duration(recipe: MixRecipe) -> int:
    """Total output samples taken from the target waveform."""
    return sum(p.length for p in recipe.pieces if p.origin == ORIGIN_TARGET)
