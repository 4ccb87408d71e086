import sys
from pathlib import Path

import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

from uvswap import harness
from uvswap.annotations import ClassificationTable
from uvswap.mixer import MixMode, SWAP_SST, SWAP_U, SWAP_VU
from uvswap.synthcorpus import SynthConfig, build_synthetic_corpus

settings.register_profile("suite", deadline=None, derandomize=True)
settings.load_profile("suite")


@pytest.fixture(scope="session")
def table() -> ClassificationTable:
    return ClassificationTable.load_default()


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory) -> Path:
    root = tmp_path_factory.mktemp("corpus")
    build_synthetic_corpus(root, SynthConfig(
        n_train_sentences=8, n_test_sentences=6,
        train_speakers_per_gender=3, seed=7))
    return root


@pytest.fixture(scope="session")
def small_manifest(small_corpus) -> harness.Manifest:
    return harness.build_manifest(small_corpus)


@pytest.fixture(scope="session")
def small_stimuli(small_manifest, tmp_path_factory):
    out_dir = tmp_path_factory.mktemp("stimuli")
    pairs, _ = harness.pair_utterances(small_manifest)
    modes = [MixMode(SWAP_SST), MixMode(SWAP_U), MixMode(SWAP_VU)]
    entries, failures = harness.generate_testsets(pairs, modes, out_dir)
    assert not failures
    return out_dir, entries


@pytest.fixture(scope="session")
def tiny_models(small_manifest):
    """Fast, rough models; enough for plumbing tests, not for trends."""
    out = {}
    for gender in ("M", "F"):
        model, lm, _ = harness.train_gender_model(
            small_manifest, gender, budget=90, iterations=3, max_utts=8)
        out[gender] = (model, lm)
    return out


@pytest.fixture(scope="session")
def tiny_bundles(tiny_models, tmp_path_factory):
    from uvswap.recognizer import save_model

    out_dir = tmp_path_factory.mktemp("models")
    paths = {}
    for gender, (model, lm) in tiny_models.items():
        path = out_dir / f"{gender.lower()}.mdl"
        save_model(path, model, lm)
        paths[gender] = path
    return paths
