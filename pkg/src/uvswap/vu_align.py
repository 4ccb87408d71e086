"""Voiced/unvoiced run extraction and dynamic-programming run alignment.

A run is a maximal span of consecutive same-major-class phones; run
boundaries are the V<->U transition instants. Two run sequences are
aligned by an edit-distance DP over their class labels, and the optimal
path yields a monotone mapping between source and target transition
instants.
"""

from __future__ import annotations

from dataclasses import dataclass

from .annotations import ClassificationTable, PhoneSegment, PhoneTier
from .errors import UvswapError

DIAG = "diag"
UP = "up"  # consumes a run of A (gap in B)
LEFT = "left"  # consumes a run of B (gap in A)


class EmptySequence(UvswapError):
    code = "empty_sequence"


class InconsistentPath(UvswapError):
    code = "inconsistent_path"


@dataclass(frozen=True)
class Run:
    cls: str  # "V" or "U"
    start: int
    end: int
    phones: tuple[PhoneSegment, ...]

    @property
    def duration(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class RunSequence:
    runs: tuple[Run, ...]
    sample_rate: int

    def boundaries(self) -> list[int]:
        """Transition instants: run starts plus the final end."""
        if not self.runs:
            return []
        return [r.start for r in self.runs] + [self.runs[-1].end]

    def labels(self) -> list[str]:
        return [r.cls for r in self.runs]


@dataclass(frozen=True)
class AlignCosts:
    match: float = 0.0
    mismatch: float = 1.0
    gap: float = 1.0


@dataclass(frozen=True)
class AlignmentPath:
    """Ordered DP moves from the (0,0) pre-cell to (|A|,|B|).

    Each step is (i, j, move) where i and j count consumed runs of A and
    B after the move.
    """

    steps: tuple[tuple[int, int, str], ...]
    total_cost: float


@dataclass(frozen=True)
class MappingTable:
    """Source-run pairing and the transition-instant correspondence.

    ``pairs`` lists every source run index exactly once with its paired
    target run index (None for gapped source runs). ``instant_map`` is
    strictly increasing in both coordinates.
    """

    pairs: tuple[tuple[int, int | None], ...]
    instant_map: tuple[tuple[int, int], ...]

    def paired(self) -> dict[int, int]:
        return {i: j for i, j in self.pairs if j is not None}


def extract_runs(tier: PhoneTier, table: ClassificationTable) -> RunSequence:
    """Collapse a tier into strictly alternating V/U runs."""
    runs: list[Run] = []
    cur: list[PhoneSegment] = []
    cur_cls = None
    for seg in tier.segments:
        cls = table.classify(seg.label).major
        if cls == cur_cls:
            cur.append(seg)
        else:
            if cur:
                runs.append(Run(cur_cls, cur[0].start, cur[-1].end, tuple(cur)))
            cur = [seg]
            cur_cls = cls
    if cur:
        runs.append(Run(cur_cls, cur[0].start, cur[-1].end, tuple(cur)))
    return RunSequence(tuple(runs), tier.sample_rate)


def align_labels(a: list[str], b: list[str], costs: AlignCosts = AlignCosts()) -> AlignmentPath:
    """Edit-distance alignment of two label sequences with backtracking.

    Deterministic tie-break: reading the path forward, diagonal pairings
    happen as early as possible and gaps fall late (backtracking prefers
    left, then up, then diag).
    """
    if not a or not b:
        raise EmptySequence("cannot align an empty run sequence")
    m, n = len(a), len(b)
    d = [[0.0] * (n + 1) for _ in range(m + 1)]
    for i in range(1, m + 1):
        d[i][0] = i * costs.gap
    for j in range(1, n + 1):
        d[0][j] = j * costs.gap
    for i in range(1, m + 1):
        row, prev = d[i], d[i - 1]
        ai = a[i - 1]
        for j in range(1, n + 1):
            sub = costs.match if ai == b[j - 1] else costs.mismatch
            row[j] = min(prev[j - 1] + sub, prev[j] + costs.gap, row[j - 1] + costs.gap)

    steps: list[tuple[int, int, str]] = []
    i, j = m, n
    while i > 0 or j > 0:
        cell = d[i][j]
        if j > 0 and d[i][j - 1] + costs.gap == cell:
            steps.append((i, j, LEFT))
            j -= 1
            continue
        if i > 0 and d[i - 1][j] + costs.gap == cell:
            steps.append((i, j, UP))
            i -= 1
            continue
        steps.append((i, j, DIAG))
        i, j = i - 1, j - 1
    steps.reverse()
    return AlignmentPath(tuple(steps), d[m][n])


def align(a: RunSequence, b: RunSequence, costs: AlignCosts = AlignCosts()) -> AlignmentPath:
    return align_labels(a.labels(), b.labels(), costs)


def _check_path(path: AlignmentPath, n_a: int, n_b: int) -> None:
    i = j = 0
    for si, sj, move in path.steps:
        if move == DIAG:
            i, j = i + 1, j + 1
        elif move == UP:
            i += 1
        elif move == LEFT:
            j += 1
        else:
            raise InconsistentPath(f"unknown move {move!r}")
        if (si, sj) != (i, j):
            raise InconsistentPath(f"step ({si},{sj},{move}) does not follow from predecessor")
    if (i, j) != (n_a, n_b):
        raise InconsistentPath(f"path ends at ({i},{j}), expected ({n_a},{n_b})")


def mapping_table(path: AlignmentPath, a: RunSequence, b: RunSequence) -> MappingTable:
    """Build the run pairing and transition-instant map from a DP path.

    Diag steps pair runs; up steps leave source runs unpaired; left steps
    skip target runs. When a gap makes two source instants land on the
    same target instant, only the first is kept so the instant map stays
    strictly increasing in both coordinates.
    """
    _check_path(path, len(a.runs), len(b.runs))
    paired: dict[int, int] = {}
    for i, j, move in path.steps:
        if move == DIAG:
            paired[i - 1] = j - 1
    pairs = tuple((i, paired.get(i)) for i in range(len(a.runs)))

    instants: list[tuple[int, int]] = []
    for i, j in sorted(paired.items()):
        ra, rb = a.runs[i], b.runs[j]
        for cand in ((ra.start, rb.start), (ra.end, rb.end)):
            if not instants:
                instants.append(cand)
            elif cand[0] > instants[-1][0] and cand[1] > instants[-1][1]:
                instants.append(cand)
    return MappingTable(pairs, tuple(instants))


def format_dp_debug(a: RunSequence, b: RunSequence, costs: AlignCosts = AlignCosts()) -> str:
    """Tabular dump of the DP matrix and the chosen path, for inspection."""
    la, lb = a.labels(), b.labels()
    path = align_labels(la, lb, costs)
    m, n = len(la), len(lb)
    d = [[0.0] * (n + 1) for _ in range(m + 1)]
    for i in range(1, m + 1):
        d[i][0] = i * costs.gap
    for j in range(1, n + 1):
        d[0][j] = j * costs.gap
    for i in range(1, m + 1):
        for j in range(1, n + 1):
            sub = costs.match if la[i - 1] == lb[j - 1] else costs.mismatch
            d[i][j] = min(d[i - 1][j - 1] + sub, d[i - 1][j] + costs.gap, d[i][j - 1] + costs.gap)
    on_path = {(i, j) for i, j, _ in path.steps} | {(0, 0)}
    lines = ["      " + "".join(f"{s:>7}" for s in ["-"] + lb)]
    for i in range(m + 1):
        row_label = "-" if i == 0 else la[i - 1]
        cells = []
        for j in range(n + 1):
            mark = "*" if (i, j) in on_path else " "
            cells.append(f"{d[i][j]:>6.1f}{mark}")
        lines.append(f"{row_label:>5} " + "".join(cells))
    lines.append(f"path cost: {path.total_cost}")
    lines.append("path: " + " ".join(f"({i},{j},{mv})" for i, j, mv in path.steps))
    return "\n".join(lines) + "\n"
