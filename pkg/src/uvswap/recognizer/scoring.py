"""Phone error rate: Levenshtein alignment after scoring-set folding.

Both sequences are folded (and consecutive duplicates collapsed, since
folding can merge neighbours into e.g. sil sil) before alignment with
unit substitution/deletion/insertion costs.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import UvswapError


class EmptyReference(UvswapError):
    code = "empty_reference"


@dataclass(frozen=True)
class PerBreakdown:
    substitutions: int
    deletions: int
    insertions: int
    ref_length: int

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    @property
    def per(self) -> float:
        return 100.0 * self.errors / self.ref_length

    def merge(self, other: "PerBreakdown") -> "PerBreakdown":
        return PerBreakdown(
            self.substitutions + other.substitutions,
            self.deletions + other.deletions,
            self.insertions + other.insertions,
            self.ref_length + other.ref_length,
        )


def _prepare(seq: list[str], fold_map: dict[str, str] | None,
             collapse: bool) -> list[str]:
    folded = [fold_map.get(x, x) for x in seq] if fold_map else list(seq)
    if not collapse:
        return folded
    out: list[str] = []
    for x in folded:
        if not out or out[-1] != x:
            out.append(x)
    return out


def edit_distance(ref: list[str], hyp: list[str]) -> tuple[int, int, int]:
    """(substitutions, deletions, insertions) of a minimal edit script.

    Backtrace tie-break: match/substitution, then deletion, then insertion.
    """
    m, n = len(ref), len(hyp)
    d = [[0] * (n + 1) for _ in range(m + 1)]
    for i in range(1, m + 1):
        d[i][0] = i
    for j in range(1, n + 1):
        d[0][j] = j
    for i in range(1, m + 1):
        for j in range(1, n + 1):
            sub = 0 if ref[i - 1] == hyp[j - 1] else 1
            d[i][j] = min(d[i - 1][j - 1] + sub, d[i - 1][j] + 1, d[i][j - 1] + 1)
    subs = dels = ins = 0
    i, j = m, n
    while i > 0 or j > 0:
        if i > 0 and j > 0:
            sub = 0 if ref[i - 1] == hyp[j - 1] else 1
            if d[i - 1][j - 1] + sub == d[i][j]:
                subs += sub
                i, j = i - 1, j - 1
                continue
        if i > 0 and d[i - 1][j] + 1 == d[i][j]:
            dels += 1
            i -= 1
            continue
        ins += 1
        j -= 1
    return subs, dels, ins


def phone_error_rate(ref: list[str], hyp: list[str],
                     fold_map: dict[str, str] | None = None,
                     collapse_repeats: bool = True) -> PerBreakdown:
    ref_f = _prepare(ref, fold_map, collapse_repeats)
    hyp_f = _prepare(hyp, fold_map, collapse_repeats)
    if not ref_f:
        raise EmptyReference("reference transcription is empty")
    subs, dels, ins = edit_distance(ref_f, hyp_f)
    return PerBreakdown(subs, dels, ins, len(ref_f))
