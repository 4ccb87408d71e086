"""Acceptance criteria, one test per criterion.

Each test prints "[acceptance] <name>: PASS/FAIL" (visible with -s). The
recognition-trend criterion runs the full desk-scale experiment: a
synthetic gender-marked corpus, two monophone models, mixed test sets in
every mode, and the PER grid. Real corpora are licensed, so trends are
checked on generated audio whose gender effects are strong for voiced
and mild for unvoiced segments.
"""

import functools
import warnings
from pathlib import Path

import numpy as np
import pytest

from oracles import brute_align_cost, crossfade_formula
from uvswap import harness
from uvswap.annotations import ClassificationTable, parse_phn
from uvswap.dsp import Waveform, dct_matrix, delta, mfcc39, write_wav
from uvswap.harness import CHOICE_ONE
from uvswap.mixer import (MixMode, MixRecipe, ORIGIN_SOURCE, ORIGIN_TARGET,
                          SWAP_SST, SWAP_U, SWAP_VU, plan_mix, render,
                          render_with_junctions, unvoiced_fraction)
from uvswap.recognizer import flat_start, train_em
from uvswap.synthcorpus import SynthConfig, build_synthetic_corpus, synth_utterance
from uvswap.vu_align import align, align_labels, extract_runs, mapping_table

TABLE = ClassificationTable.load_default()

DESK_SEED = 0
DESK_TRAIN_SENTENCES = 120  # 120 utterances per gender, within the 200 cap
DESK_TEST_SENTENCES = 36
DESK_BUDGET = 600
DESK_ITERATIONS = 10


def criterion(name):
    def decorate(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                fn(*args, **kwargs)
            except BaseException:
                print(f"\n[acceptance] {name}: FAIL")
                raise
            print(f"\n[acceptance] {name}: PASS")
        return wrapper
    return decorate


# ---------------------------------------------------------------------------
# shared desk-scale experiment (built once)

@pytest.fixture(scope="module")
def desk(tmp_path_factory):
    root = tmp_path_factory.mktemp("desk-corpus")
    build_synthetic_corpus(root, SynthConfig(
        n_train_sentences=DESK_TRAIN_SENTENCES,
        n_test_sentences=DESK_TEST_SENTENCES, seed=DESK_SEED))
    manifest = harness.build_manifest(root)
    models = {}
    for gender in ("M", "F"):
        model, lm, logliks = harness.train_gender_model(
            manifest, gender, budget=DESK_BUDGET, iterations=DESK_ITERATIONS,
            max_utts=200)
        models[gender] = (model, lm)
    pairs, excluded = harness.pair_utterances(manifest)
    stim_dir = tmp_path_factory.mktemp("desk-stimuli")
    modes = [MixMode(SWAP_SST), MixMode(SWAP_U), MixMode(SWAP_VU)]
    stimuli, failures = harness.generate_testsets(pairs, modes, stim_dir, TABLE)
    grid = harness.run_experiment_grid(models, stimuli, TABLE)
    return {
        "manifest": manifest, "models": models, "pairs": pairs,
        "excluded": excluded, "stimuli": stimuli, "failures": failures,
        "grid": grid,
    }


# ---------------------------------------------------------------------------

@criterion("self-mix identity (50 utterances, all modes, bit-exact)")
def test_self_mix_identity_50():
    rng = np.random.default_rng(1234)
    for k in range(50):
        gender = "M" if k % 2 == 0 else "F"
        wave, tier = synth_utterance(int(rng.integers(0, 10_000)), gender)
        original_bytes = write_wav(wave)
        runs = extract_runs(tier, TABLE)
        mapping = mapping_table(align(runs, runs), runs, runs)
        for kind in (SWAP_SST, SWAP_U, SWAP_VU):
            try:
                recipe = plan_mix(runs, runs, mapping, MixMode(kind), tier,
                                  tier, TABLE)
            except Exception:
                if kind == SWAP_VU:
                    continue  # too few voiced runs for a vU swap
                raise
            mixed = render(recipe, wave, wave)
            assert write_wav(mixed) == original_bytes, (k, kind)


@criterion("alignment DP equals exhaustive search (1000 pairs)")
def test_alignment_oracle_equivalence_1000():
    rng = np.random.default_rng(99)
    cache: dict = {}
    for _ in range(1000):
        a = _random_run_labels(rng)
        b = _random_run_labels(rng)
        got = align_labels(a, b).total_cost
        key = (tuple(a), tuple(b))
        if key not in cache:
            cache[key] = brute_align_cost(a, b)
        assert got == cache[key], (a, b)


def _random_run_labels(rng) -> list[str]:
    first = "V" if rng.integers(0, 2) else "U"
    length = int(rng.integers(1, 9))
    return [("V", "U")[(i + (first == "U")) % 2] for i in range(length)]


@criterion("mapping tables strictly monotone over all generated pairs")
def test_mapping_monotonicity(desk):
    assert desk["pairs"], "no pairs generated"
    for pair in desk["pairs"]:
        src = parse_phn(Path(pair.source.phn_path).read_text(), 16000)
        tgt = parse_phn(Path(pair.target.phn_path).read_text(), 16000)
        src_runs, tgt_runs = extract_runs(src, TABLE), extract_runs(tgt, TABLE)
        mapping = mapping_table(align(src_runs, tgt_runs), src_runs, tgt_runs)
        for (s0, t0), (s1, t1) in zip(mapping.instant_map, mapping.instant_map[1:]):
            assert s1 > s0 and t1 > t0, pair.source.utt_id


@criterion("crossfade junctions match the closed form within 1e-12")
def test_crossfade_correctness():
    src_wave, src_tier = synth_utterance(77, "M")
    tgt_wave, tgt_tier = synth_utterance(78, "F")
    src_runs, tgt_runs = extract_runs(src_tier, TABLE), extract_runs(tgt_tier, TABLE)
    mapping = mapping_table(align(src_runs, tgt_runs), src_runs, tgt_runs)
    recipe = plan_mix(src_runs, tgt_runs, mapping, MixMode(SWAP_U),
                      src_tier, tgt_tier, TABLE)
    out, junctions = render_with_junctions(recipe, src_wave, tgt_wave)
    assert junctions, "expected at least one crossfaded junction"
    pos = 0
    j = 0
    for left, right in zip(recipe.pieces, recipe.pieces[1:]):
        pos += left.length
        if j >= len(junctions):
            break
        lo, hi = junctions[j]
        if lo < pos <= hi:  # this junction was faded
            half = (hi - lo) // 2
            tail = _origin(left, src_wave, tgt_wave).samples[left.end - half:left.end + half]
            head = _origin(right, src_wave, tgt_wave).samples[right.start - half:right.start + half]
            expected = crossfade_formula(tail, head, 2 * half)
            assert np.max(np.abs(out.samples[lo:hi] - expected)) < 1e-12
            j += 1
    assert j == len(junctions)

    const = Waveform(np.full(4000, 0.123), 16000)
    from uvswap.mixer import Piece
    flat = MixRecipe((Piece(ORIGIN_SOURCE, 0, 1500), Piece(ORIGIN_TARGET, 1500, 4000)), 80)
    rendered = render(flat, const, const)
    assert np.all(rendered.samples == 0.123)


def _origin(piece, src, tgt):
    return src if piece.origin == ORIGIN_SOURCE else tgt


@criterion("MFCC contract: frame counts, zero deltas, DCT orthogonality")
def test_mfcc_contract():
    rng = np.random.default_rng(5)
    for _ in range(100):
        n = int(rng.integers(400, 40_000))
        feats = mfcc39(Waveform(rng.uniform(-0.3, 0.3, n), 16000))
        assert feats.frames.shape == ((n - 400) // 160 + 1, 39), n
    const = mfcc39(Waveform(np.full(6400, 0.2), 16000))
    assert np.all(const.frames[:, 13:] == 0.0)
    assert np.all(delta(np.full((9, 13), 1.7)) == 0.0)
    gram = dct_matrix(13, 26) @ dct_matrix(13, 26).T
    assert np.max(np.abs(gram - np.eye(13))) < 1e-9


@criterion("EM sanity: monotone log-likelihood, means within 0.1")
def test_em_sanity():
    rng = np.random.default_rng(42)
    means = {"aa": [0.0, 2.0, 4.0], "s": [8.0, 10.0, 12.0], "t": [-8.0, -6.0, -4.0]}
    dim, std, stay = 5, 0.5, 0.55

    def sample(phones):
        feats, segs, t = [], [], 0
        for phone in phones:
            t0 = t
            for s in range(3):
                dwell = 1 + rng.geometric(1.0 - stay)
                feats.append(rng.normal(means[phone][s], std, size=(dwell, dim)))
                t += dwell
            segs.append((phone, t0, t))
        return np.vstack(feats), segs

    corpus = [sample(list(rng.choice(sorted(means), size=rng.integers(3, 7))))
              for _ in range(60)]
    model = flat_start(corpus, budget=9)
    model, logliks = train_em(model, corpus, 10)
    for prev, cur in zip(logliks, logliks[1:]):
        assert cur >= prev - abs(prev) * 1e-6, logliks
    for phone, state_means in means.items():
        for s, true_mean in enumerate(state_means):
            got = model.hmms[phone].states[s].means[0]
            assert np.max(np.abs(got - true_mean)) < 0.1, (phone, s, got)


@criterion("trend reproduction: matched < mismatched; orderings hold")
def test_trend_reproduction(desk):
    grid = desk["grid"]
    per = grid.per
    print()
    print(grid.to_csv())
    # (a) each model does better on its own gender's originals
    assert per("M", "M") < per("F", "M"), "M model should prefer M originals"
    assert per("F", "F") < per("M", "F"), "F model should prefer F originals"
    # (b) matched-model PER non-decreasing with replacement, slack 0.5
    for gender in ("M", "F"):
        other = "F" if gender == "M" else "M"
        ladder = [gender, f"{gender}<{other}SSt", f"{gender}<{other}U",
                  f"{gender}<{other}vU"]
        values = [per(cond, gender) for cond in ladder]
        for step, (prev, cur) in enumerate(zip(values, values[1:])):
            assert cur >= prev - 0.5, (gender, ladder, values, step)


@criterion("mean unvoiced fraction over SX test utterances reported")
def test_unvoiced_duration_fraction(desk):
    manifest = desk["manifest"]
    fracs = []
    for entry in manifest.subset("test"):
        if not entry.sentence.startswith("sx"):
            continue
        tier = parse_phn(Path(entry.phn_path).read_text(), 16000)
        fracs.append(unvoiced_fraction(tier, TABLE))
    mean = float(np.mean(fracs))
    print(f"\nmean unvoiced fraction over {len(fracs)} SX test utterances: {mean:.3f}")
    assert 0.0 < mean < 1.0
    if not 0.35 <= mean <= 0.60:
        warnings.warn(f"mean unvoiced fraction {mean:.3f} outside [0.35, 0.60]")


@criterion("subjective scoring fixture reproduces the accuracy pattern")
def test_subjective_fixture(desk):
    # every stimulus gets "one speaker": originals land at 100, mixed at 0
    records = [(s.condition, CHOICE_ONE) for s in desk["stimuli"]]
    result = harness.score_subjective(records)
    by = result.by_condition()
    assert by["M"].accuracy == 100.0
    assert by["F"].accuracy == 100.0
    for cond in ("M<FU", "F<MU", "M<FvU", "F<MvU", "M<FSSt", "F<MSSt"):
        assert by[cond].accuracy == 0.0


@criterion("stimulus generation accounting and determinism hold")
def test_generation_accounting(desk):
    manifest, pairs, excluded = desk["manifest"], desk["pairs"], desk["excluded"]
    assert len(pairs) + len(excluded) == len(manifest.subset("test"))
    assert not desk["failures"]
    # every pair produced one original + three mixed stimuli
    assert len(desk["stimuli"]) == 4 * len(pairs)
