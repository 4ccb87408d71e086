"""Monophone 3-state left-to-right GMM-HMMs: flat start and EM training.

Training is segmental: each iteration force-aligns every utterance
against its reference phone sequence (Viterbi over the concatenated
phone chain), then re-estimates mixtures from the hard state assignment
with soft within-state component responsibilities. At a fixed mixture
count the total alignment log-likelihood is non-decreasing.

Parameters are tied per phone: every occurrence of a phone shares one
3-state model. Mixtures grow by splitting the heaviest component until
a per-state target (bounded by the global Gaussian budget) is reached.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..annotations import PhoneTier
from ..errors import UvswapError

NEG_INF = -np.inf
TRANS_FLOOR = 1e-8
MIN_STATE_OCC = 1e-2  # below this a state keeps its previous parameters
MIN_COMP_OCC = 2.0  # components thinner than this are dropped


@dataclass
class GmmState:
    """Diagonal-covariance Gaussian mixture for one HMM state."""

    weights: np.ndarray  # (M,)
    means: np.ndarray  # (M, D)
    variances: np.ndarray  # (M, D)

    @property
    def n_components(self) -> int:
        return len(self.weights)

    def component_logliks(self, x: np.ndarray) -> np.ndarray:
        """Per-component log w_m + log N(x; mu_m, diag var_m); x is (T, D)."""
        gconst = (self.means.shape[1] * math.log(2.0 * math.pi)
                  + np.log(self.variances).sum(axis=1))  # (M,)
        diff = x[:, None, :] - self.means[None, :, :]
        mahal = (diff * diff / self.variances[None, :, :]).sum(axis=2)  # (T, M)
        return np.log(self.weights)[None, :] - 0.5 * (gconst[None, :] + mahal)

    def loglik(self, x: np.ndarray) -> np.ndarray:
        """Mixture log-likelihood per frame; x is (T, D)."""
        return _logsumexp(self.component_logliks(x), axis=1)


@dataclass
class PhoneHmm:
    phone: str
    states: list[GmmState]
    trans: np.ndarray  # (n_states, 2): [stay, advance] probabilities

    @property
    def n_states(self) -> int:
        return len(self.states)


@dataclass
class AcousticModel:
    hmms: dict[str, PhoneHmm]
    feature_dim: int
    total_gaussians: int  # component budget
    variance_floor: np.ndarray  # (D,)
    unseen_phones: tuple[str, ...] = ()

    @property
    def phones(self) -> list[str]:
        return sorted(self.hmms)

    def n_components(self) -> int:
        return sum(st.n_components for hmm in self.hmms.values() for st in hmm.states)

    def n_states(self) -> int:
        return sum(h.n_states for h in self.hmms.values())


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    return np.squeeze(m, axis) + np.log(np.exp(a - m).sum(axis=axis))


def tier_frame_segments(tier: PhoneTier, n_frames: int, hop: int,
                        frame_len: int) -> list[tuple[str, int, int]]:
    """Assign frames to phones by window center; returns (phone, t0, t1) spans.

    Phones too short to capture any frame center drop out; trailing frames
    past the tier's end attach to the last phone.
    """
    ends = np.array([s.end for s in tier.segments])
    centers = hop * np.arange(n_frames) + frame_len // 2
    idx = np.minimum(np.searchsorted(ends, centers, side="right"), len(ends) - 1)
    segs: list[tuple[str, int, int]] = []
    t0 = 0
    for t in range(1, n_frames + 1):
        if t == n_frames or idx[t] != idx[t - 1]:
            segs.append((tier.segments[idx[t0]].label, t0, t))
            t0 = t
    return segs


# Corpus entries are (features (T, D), frame segments [(phone, t0, t1), ...]).
Corpus = list[tuple[np.ndarray, list[tuple[str, int, int]]]]


def flat_start(corpus: Corpus, budget: int, inventory: list[str] | None = None,
               n_states: int = 3, var_floor_frac: float = 1e-3,
               self_loop: float = 0.5) -> AcousticModel:
    """Single-Gaussian initialization from uniform 3-way phone splits.

    Phones in ``inventory`` absent from the corpus are initialized from
    global statistics and listed in the model's ``unseen_phones``.
    """
    if not corpus:
        raise UvswapError("flat start needs a non-empty corpus")
    all_frames = np.vstack([feats for feats, _ in corpus])
    dim = all_frames.shape[1]
    global_mean = all_frames.mean(axis=0)
    global_var = np.maximum(all_frames.var(axis=0), 1e-8)
    floor = var_floor_frac * global_var

    acc: dict[tuple[str, int], list] = {}
    for feats, segs in corpus:
        for phone, t0, t1 in segs:
            parts = np.array_split(np.arange(t0, t1), n_states)
            for s, part in enumerate(parts):
                if len(part) == 0:
                    continue
                frames = feats[part]
                entry = acc.setdefault((phone, s), [0.0, np.zeros(dim), np.zeros(dim)])
                entry[0] += len(frames)
                entry[1] += frames.sum(axis=0)
                entry[2] += (frames * frames).sum(axis=0)

    seen = sorted({phone for phone, _ in acc})
    phones = sorted(inventory) if inventory is not None else seen
    unseen = tuple(p for p in phones if p not in set(seen))

    hmms = {}
    trans = np.tile([self_loop, 1.0 - self_loop], (n_states, 1))
    for phone in phones:
        states = []
        for s in range(n_states):
            entry = acc.get((phone, s))
            if entry is None or entry[0] < 1:
                mean, var = global_mean.copy(), global_var.copy()
            else:
                count, total, sq = entry
                mean = total / count
                var = sq / count - mean * mean
            states.append(GmmState(
                weights=np.array([1.0]),
                means=mean[None, :].copy(),
                variances=np.maximum(var, floor)[None, :].copy(),
            ))
        hmms[phone] = PhoneHmm(phone, states, trans.copy())
    return AcousticModel(hmms, dim, budget, floor, unseen)


def force_align(model: AcousticModel, feats: np.ndarray,
                phones: list[str]) -> tuple[np.ndarray, float] | None:
    """Viterbi alignment of features against a fixed phone sequence.

    Returns (state_path, log_likelihood) where state_path[t] indexes the
    concatenated chain of 3-state phone models; None when the utterance
    is too short to traverse the chain.
    """
    emis, log_stay, log_adv = _chain_tables(model, feats, phones)
    t_len, s_len = emis.shape
    if t_len < 1 or s_len < 1:
        return None
    delta = np.full(s_len, NEG_INF)
    delta[0] = emis[0, 0]
    bp = np.zeros((t_len, s_len), dtype=np.int8)
    for t in range(1, t_len):
        stay = delta + log_stay
        adv = np.concatenate(([NEG_INF], delta[:-1] + log_adv[:-1]))
        take_adv = adv > stay
        delta = emis[t] + np.where(take_adv, adv, stay)
        bp[t] = take_adv
    final = delta[-1] + log_adv[-1]
    if not np.isfinite(final):
        return None
    path = np.zeros(t_len, dtype=np.int64)
    s = s_len - 1
    for t in range(t_len - 1, 0, -1):
        path[t] = s
        if bp[t, s]:
            s -= 1
    path[0] = s
    return path, float(final)


def _chain_tables(model: AcousticModel, feats: np.ndarray, phones: list[str]):
    cache: dict[str, np.ndarray] = {}
    emis_cols, stay, adv = [], [], []
    for phone in phones:
        hmm = model.hmms[phone]
        if phone not in cache:
            cache[phone] = np.column_stack([st.loglik(feats) for st in hmm.states])
        emis_cols.append(cache[phone])
        with np.errstate(divide="ignore"):
            stay.append(np.log(hmm.trans[:, 0]))
            adv.append(np.log(hmm.trans[:, 1]))
    emis = np.hstack(emis_cols) if emis_cols else np.zeros((len(feats), 0))
    return emis, np.concatenate(stay), np.concatenate(adv)


def train_em(model: AcousticModel, corpus: Corpus, iterations: int,
             mixup_schedule: dict[int, int] | None = None,
             ) -> tuple[AcousticModel, list[float]]:
    """Segmental EM; returns the new model and per-iteration log-likelihoods.

    ``mixup_schedule`` maps iteration index -> per-state component target;
    splits happen at the start of the iteration, so likelihoods are only
    guaranteed non-decreasing between iterations at a fixed mixture count.
    """
    logliks: list[float] = []
    for it in range(iterations):
        if mixup_schedule and it in mixup_schedule:
            model = mixup(model, mixup_schedule[it])
        model, total_ll = _em_iteration(model, corpus)
        logliks.append(total_ll)
    return model, logliks


def _em_iteration(model: AcousticModel, corpus: Corpus) -> tuple[AcousticModel, float]:
    dim = model.feature_dim
    gaussian_acc: dict[tuple[str, int], list] = {}
    trans_acc: dict[tuple[str, int], np.ndarray] = {}
    occupancy: dict[tuple[str, int], float] = {}
    total_ll = 0.0
    n_aligned = 0

    for feats, segs in corpus:
        phones = [p for p, _, _ in segs]
        result = force_align(model, feats, phones)
        if result is None:
            continue
        path, ll = result
        total_ll += ll
        n_aligned += 1
        _accumulate(model, feats, phones, path, gaussian_acc, trans_acc, occupancy)

    if n_aligned == 0:
        raise UvswapError("no utterance could be force-aligned")

    hmms = {}
    for phone, hmm in model.hmms.items():
        states = []
        trans = hmm.trans.copy()
        for s, old in enumerate(hmm.states):
            key = (phone, s)
            occ = occupancy.get(key, 0.0)
            if occ < MIN_STATE_OCC or key not in gaussian_acc:
                states.append(old)  # empty occupancy: keep previous parameters
            else:
                states.append(_reestimate_state(old, gaussian_acc[key],
                                                model.variance_floor))
            counts = trans_acc.get(key)
            if counts is not None and counts.sum() > 0:
                row = np.maximum(counts / counts.sum(), TRANS_FLOOR)
                trans[s] = row / row.sum()
        hmms[phone] = PhoneHmm(phone, states, trans)
    new_model = AcousticModel(hmms, dim, model.total_gaussians,
                              model.variance_floor, model.unseen_phones)
    new_model._state_occupancy = occupancy  # kept for mixup caps
    return new_model, total_ll


def _accumulate(model, feats, phones, path, gaussian_acc, trans_acc, occupancy):
    n_states = 3
    # state occupancy and within-state component responsibilities
    boundaries = np.flatnonzero(np.diff(path)) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [len(path)]))
    for t0, t1 in zip(starts, ends):
        chain_idx = path[t0]
        phone = phones[chain_idx // n_states]
        s = int(chain_idx % n_states)
        state = model.hmms[phone].states[s]
        frames = feats[t0:t1]
        comp_ll = state.component_logliks(frames)
        resp = np.exp(comp_ll - _logsumexp(comp_ll, axis=1)[:, None])
        entry = gaussian_acc.setdefault(
            (phone, s),
            [np.zeros(state.n_components),
             np.zeros((state.n_components, feats.shape[1])),
             np.zeros((state.n_components, feats.shape[1]))])
        entry[0] += resp.sum(axis=0)
        entry[1] += resp.T @ frames
        entry[2] += resp.T @ (frames * frames)
        occupancy[(phone, s)] = occupancy.get((phone, s), 0.0) + (t1 - t0)
        # transitions: within the span, (t1-t0-1) stays, then one advance/exit
        counts = trans_acc.setdefault((phone, s), np.zeros(2))
        counts[0] += (t1 - t0) - 1
        counts[1] += 1


def _reestimate_state(old: GmmState, acc: list, floor: np.ndarray) -> GmmState:
    occ, mean_sum, sq_sum = acc
    keep = occ >= MIN_COMP_OCC
    if not np.any(keep):
        keep = occ >= max(occ.max(), 1e-10)  # keep at least the heaviest
    occ, mean_sum, sq_sum = occ[keep], mean_sum[keep], sq_sum[keep]
    weights = occ / occ.sum()
    means = mean_sum / occ[:, None]
    variances = np.maximum(sq_sum / occ[:, None] - means * means, floor[None, :])
    return GmmState(weights, means, variances)


def mixup(model: AcousticModel, per_state_target: int) -> AcousticModel:
    """Split heaviest components until each state reaches the target count.

    The target is capped by the global budget and by half the state's last
    observed occupancy, so starved states stay small.
    """
    n_states = model.n_states()
    budget_per_state = max(1, model.total_gaussians // max(n_states, 1))
    target = min(per_state_target, budget_per_state)
    occupancy = getattr(model, "_state_occupancy", {})

    hmms = {}
    for phone, hmm in model.hmms.items():
        states = []
        for s, state in enumerate(hmm.states):
            occ = occupancy.get((phone, s), float("inf"))
            cap = max(1, int(occ // 2)) if math.isfinite(occ) else target
            states.append(_split_state(state, min(target, cap)))
        hmms[phone] = PhoneHmm(phone, states, hmm.trans.copy())
    out = AcousticModel(hmms, model.feature_dim, model.total_gaussians,
                        model.variance_floor, model.unseen_phones)
    out._state_occupancy = occupancy
    return out


def _split_state(state: GmmState, target: int) -> GmmState:
    weights = list(state.weights)
    means = list(state.means)
    variances = list(state.variances)
    while len(weights) < target:
        i = int(np.argmax(weights))
        w, mu, var = weights[i], means[i], variances[i]
        offset = 0.2 * np.sqrt(var)
        weights[i] = w / 2.0
        means[i] = mu + offset
        weights.append(w / 2.0)
        means.append(mu - offset)
        variances.append(var.copy())
    return GmmState(np.array(weights), np.array(means), np.array(variances))


# ---------------------------------------------------------------------------
# Serialization

def model_to_dict(model: AcousticModel) -> dict:
    return {
        "feature_dim": model.feature_dim,
        "total_gaussians": model.total_gaussians,
        "variance_floor": model.variance_floor.tolist(),
        "unseen_phones": list(model.unseen_phones),
        "phones": {
            phone: {
                "trans": hmm.trans.tolist(),
                "states": [
                    {
                        "weights": st.weights.tolist(),
                        "means": st.means.tolist(),
                        "variances": st.variances.tolist(),
                    }
                    for st in hmm.states
                ],
            }
            for phone, hmm in model.hmms.items()
        },
    }


def model_from_dict(doc: dict) -> AcousticModel:
    hmms = {}
    for phone, spec in doc["phones"].items():
        states = [
            GmmState(np.array(st["weights"]), np.array(st["means"]),
                     np.array(st["variances"]))
            for st in spec["states"]
        ]
        hmms[phone] = PhoneHmm(phone, states, np.array(spec["trans"]))
    return AcousticModel(
        hmms,
        int(doc["feature_dim"]),
        int(doc["total_gaussians"]),
        np.array(doc["variance_floor"]),
        tuple(doc.get("unseen_phones", [])),
    )
