"""Phone-loop Viterbi decoding with an n-gram language model.

Token passing over all phone HMMs in parallel. Bigram (and unigram)
decoding keeps one token per HMM state; trigram decoding expands each
state with the previous-phone context, which is exact but costs a factor
of |phones|+1 in time and memory -- fine at desk scale.

Tie-breaking is deterministic: on equal scores the lowest phone index
(alphabetical order) wins.
"""

from __future__ import annotations

import numpy as np

from ..errors import UvswapError
from .hmm import AcousticModel, NEG_INF
from .lm import BOS, EOS, PhoneLM


class EmptyFeatureMatrix(UvswapError):
    code = "empty_feature_matrix"


class Decoder:
    """Precomputed decoding tables for one (model, lm, weight) triple."""

    def __init__(self, model: AcousticModel, lm: PhoneLM, lm_weight: float = 1.0,
                 early_exit: bool | None = None):
        self.model = model
        self.lm = lm
        self.lm_weight = lm_weight
        self.early_exit = early_exit
        self.phones = model.phones
        self.n_states = max(h.n_states for h in model.hmms.values())
        p = len(self.phones)
        with np.errstate(divide="ignore"):
            self.log_stay = np.vstack([np.log(model.hmms[ph].trans[:, 0])
                                       for ph in self.phones])
            self.log_adv = np.vstack([np.log(model.hmms[ph].trans[:, 1])
                                      for ph in self.phones])
        w = lm_weight
        if lm.order <= 2:
            self.init = np.array([w * lm.logprob(q, (BOS,)) for q in self.phones])
            self.trans = np.array([[w * lm.logprob(q, (ph,)) for q in self.phones]
                                   for ph in self.phones])
            self.final = np.array([w * lm.logprob(EOS, (ph,)) for ph in self.phones])
        elif lm.order == 3:
            ctx = [BOS] + self.phones  # context 0 is sentence-begin
            self.init = np.array([w * lm.logprob(q, (BOS, BOS)) for q in self.phones])
            self.tri = np.array([[[w * lm.logprob(q, (g, h)) for q in self.phones]
                                  for h in self.phones] for g in ctx])
            self.final3 = np.array([[w * lm.logprob(EOS, (g, h)) for h in self.phones]
                                    for g in ctx])
        else:
            raise ValueError(f"unsupported LM order {lm.order}")

    def emissions(self, feats: np.ndarray) -> np.ndarray:
        """(T, P, n_states) state log-likelihoods."""
        cols = [
            np.column_stack([st.loglik(feats) for st in self.model.hmms[ph].states])
            for ph in self.phones
        ]
        return np.stack(cols, axis=1)

    def decode(self, feats: np.ndarray) -> list[str]:
        feats = np.asarray(feats, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] == 0:
            raise EmptyFeatureMatrix("no frames to decode")
        if feats.shape[1] != self.model.feature_dim:
            raise UvswapError(f"feature dim {feats.shape[1]}, "
                              f"model expects {self.model.feature_dim}")
        early = self.early_exit
        if early is None:
            early = feats.shape[0] < self.n_states
        if self.lm.order <= 2:
            return self._decode_bigram(feats, early)
        return self._decode_trigram(feats, early)

    def _exit_scores(self, delta: np.ndarray, early: bool):
        """Best phone-exit score per context row; delta is (..., P, S)."""
        scored = delta + self.log_adv
        if early:
            exit_state = np.argmax(scored, axis=-1)
            return np.take_along_axis(scored, exit_state[..., None], -1)[..., 0], exit_state
        s_last = delta.shape[-1] - 1
        return scored[..., s_last], np.full(delta.shape[:-1], s_last, dtype=np.int64)

    def _decode_bigram(self, feats: np.ndarray, early: bool) -> list[str]:
        emis = self.emissions(feats)
        t_len, p, s = emis.shape
        delta = np.full((p, s), NEG_INF)
        delta[:, 0] = self.init + emis[0, :, 0]
        bp = np.zeros((t_len, p, s), dtype=np.int64)  # predecessor flat id p*s+state
        flat = np.arange(p * s).reshape(p, s)
        for t in range(1, t_len):
            exit_score, exit_state = self._exit_scores(delta, early)
            # entry into phone q: best over predecessors p of exit + lm(p->q)
            entry_all = exit_score[:, None] + self.trans
            entry_from = np.argmax(entry_all, axis=0)
            entry_score = entry_all[entry_from, np.arange(p)]

            stay = delta + self.log_stay
            new = np.empty_like(delta)
            newbp = np.empty((p, s), dtype=np.int64)
            # state 0: self-loop vs phone entry
            use_entry = entry_score > stay[:, 0]
            new[:, 0] = np.where(use_entry, entry_score, stay[:, 0])
            entry_pred = entry_from * s + exit_state[entry_from]
            newbp[:, 0] = np.where(use_entry, entry_pred, flat[:, 0])
            # states 1..s-1: self-loop vs advance from the left neighbor
            adv = delta[:, :-1] + self.log_adv[:, :-1]
            use_adv = adv > stay[:, 1:]
            new[:, 1:] = np.where(use_adv, adv, stay[:, 1:])
            newbp[:, 1:] = np.where(use_adv, flat[:, :-1], flat[:, 1:])
            delta = new + emis[t]
            bp[t] = newbp
        exit_score, exit_state = self._exit_scores(delta, early)
        totals = exit_score + self.final
        best_p = int(np.argmax(totals))
        if not np.isfinite(totals[best_p]):
            raise UvswapError("no complete decoding path (utterance too short?)")
        state = best_p * s + int(exit_state[best_p])
        return self._traceback(bp, state, t_len, s)

    def _decode_trigram(self, feats: np.ndarray, early: bool) -> list[str]:
        emis = self.emissions(feats)
        t_len, p, s = emis.shape
        c = p + 1  # contexts: BOS + each phone
        delta = np.full((c, p, s), NEG_INF)
        delta[0, :, 0] = self.init + emis[0, :, 0]
        bp = np.zeros((t_len, c, p, s), dtype=np.int64)
        flat = np.arange(c * p * s).reshape(c, p, s)
        for t in range(1, t_len):
            exit_score, exit_state = self._exit_scores(delta, early)  # (c, p)
            # entry into (h, q) from exit of (g, h): maximize over g
            entry_all = exit_score[:, :, None] + self.tri  # (g, h, q)
            entry_from_g = np.argmax(entry_all, axis=0)  # (h, q)
            entry_score = np.take_along_axis(entry_all, entry_from_g[None], 0)[0]

            stay = delta + self.log_stay[None]
            new = np.empty_like(delta)
            newbp = np.empty((c, p, s), dtype=np.int64)
            new[:, :, 0] = stay[:, :, 0]
            newbp[:, :, 0] = flat[:, :, 0]
            # context rows 1..p correspond to previous phone h = row-1
            h_idx = np.arange(p)
            use_entry = entry_score > stay[1:, :, 0]
            new[1:, :, 0] = np.where(use_entry, entry_score, stay[1:, :, 0])
            g_best = entry_from_g  # (h, q)
            exit_state_for = exit_state[g_best, h_idx[:, None]]  # (h, q)
            pred = (g_best * p + h_idx[:, None]) * s + exit_state_for
            newbp[1:, :, 0] = np.where(use_entry, pred, flat[1:, :, 0])

            adv = delta[:, :, :-1] + self.log_adv[None, :, :-1]
            use_adv = adv > stay[:, :, 1:]
            new[:, :, 1:] = np.where(use_adv, adv, stay[:, :, 1:])
            newbp[:, :, 1:] = np.where(use_adv, flat[:, :, :-1], flat[:, :, 1:])
            delta = new + emis[t][None]
            bp[t] = newbp
        exit_score, exit_state = self._exit_scores(delta, early)
        totals = exit_score + self.final3
        best = int(np.argmax(totals))
        if not np.isfinite(totals.flat[best]):
            raise UvswapError("no complete decoding path (utterance too short?)")
        g, h = divmod(best, p)
        state = (g * p + h) * s + int(exit_state[g, h])
        return self._traceback(bp.reshape(t_len, c * p * s), state, t_len, s,
                               phone_of=lambda sid: (sid // s) % p)

    def _traceback(self, bp: np.ndarray, last_state: int, t_len: int, s: int,
                   phone_of=None) -> list[str]:
        if phone_of is None:
            phone_of = lambda sid: sid // s
        bp2 = bp.reshape(t_len, -1)
        states = np.zeros(t_len, dtype=np.int64)
        states[-1] = last_state
        for t in range(t_len - 1, 0, -1):
            states[t - 1] = bp2[t, states[t]]
        phones_out = [self.phones[phone_of(int(states[0]))]]
        for t in range(1, t_len):
            if states[t] % s == 0 and states[t] != states[t - 1]:
                phones_out.append(self.phones[phone_of(int(states[t]))])
        return phones_out


def viterbi_decode(model: AcousticModel, lm: PhoneLM, features: np.ndarray,
                   lm_weight: float = 1.0,
                   early_exit: bool | None = None) -> list[str]:
    """One-shot decode; build a Decoder directly when decoding in bulk."""
    return Decoder(model, lm, lm_weight, early_exit).decode(features)
