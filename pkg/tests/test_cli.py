import json
from pathlib import Path

import pytest

from uvswap.cli import dispatch, parse_config_file
from uvswap.dsp import load_features, write_wav_file
from uvswap.harness import load_stimuli
from uvswap.synthcorpus import synth_utterance
from uvswap.annotations import format_phn


@pytest.fixture(scope="module")
def pair_files(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli-io")
    for name, seed, gender in (("m", 51, "M"), ("f", 52, "F")):
        wave, tier = synth_utterance(seed, gender)
        write_wav_file(d / f"{name}.wav", wave)
        (d / f"{name}.phn").write_text(format_phn(tier))
    return d


def run(*argv):
    return dispatch([str(a) for a in argv])


def test_mix_writes_wav_and_recipe(pair_files, tmp_path):
    out = tmp_path / "out.wav"
    code = run("mix", "--source", pair_files / "m.wav", "--source-phn", pair_files / "m.phn",
               "--target", pair_files / "f.wav", "--target-phn", pair_files / "f.phn",
               "--mode", "swap-u", "-o", out)
    assert code == 0
    assert out.exists()
    recipe = json.loads((tmp_path / "out.recipe.json").read_text())
    assert recipe["crossfade_len"] == 80
    origins = {p["origin"] for p in recipe["pieces"]}
    assert origins == {"source", "target"}


def test_mix_deterministic(pair_files, tmp_path):
    args = ("mix", "--source", pair_files / "m.wav", "--source-phn", pair_files / "m.phn",
            "--target", pair_files / "f.wav", "--target-phn", pair_files / "f.phn")
    run(*args, "-o", tmp_path / "a.wav")
    run(*args, "-o", tmp_path / "b.wav")
    assert (tmp_path / "a.wav").read_bytes() == (tmp_path / "b.wav").read_bytes()
    assert (tmp_path / "a.recipe.json").read_text() == (tmp_path / "b.recipe.json").read_text()


def test_config_file_defaults_and_flag_override(pair_files, tmp_path):
    cfg = tmp_path / "uvswap.conf"
    cfg.write_text("crossfade = 120  # wider fades\n")
    base = ("mix", "--config", cfg,
            "--source", pair_files / "m.wav", "--source-phn", pair_files / "m.phn",
            "--target", pair_files / "f.wav", "--target-phn", pair_files / "f.phn")
    run(*base, "-o", tmp_path / "a.wav")
    assert json.loads((tmp_path / "a.recipe.json").read_text())["crossfade_len"] == 120
    run(*base, "--crossfade", "64", "-o", tmp_path / "b.wav")
    assert json.loads((tmp_path / "b.recipe.json").read_text())["crossfade_len"] == 64


def test_parse_config_file_coercions(tmp_path):
    cfg = tmp_path / "c.conf"
    cfg.write_text("a = 3\nb = 2.5\nc = true\nd = hello\n# comment\nbad-line\n")
    assert parse_config_file(cfg) == {"a": 3, "b": 2.5, "c": True, "d": "hello"}


def test_align_dump(pair_files, tmp_path, capsys):
    out = tmp_path / "align.json"
    code = run("align", "--source-phn", pair_files / "m.phn",
               "--target-phn", pair_files / "f.phn", "-o", out,
               "--dump-dp", tmp_path / "dp.txt")
    assert code == 0
    doc = json.loads(out.read_text())
    assert {"source_runs", "target_runs", "path", "mapping"} <= set(doc)
    assert (tmp_path / "dp.txt").read_text().startswith(" ")


def test_spectrogram_and_features(pair_files, tmp_path):
    spec_out = tmp_path / "spec.txt"
    assert run("spectrogram", "--wav", pair_files / "m.wav", "-o", spec_out) == 0
    assert spec_out.read_text().startswith("# spectrogram")
    feat_out = tmp_path / "m.feat"
    assert run("features", "--wav", pair_files / "m.wav", "-o", feat_out) == 0
    fm = load_features(feat_out.read_bytes())
    assert fm.frames.shape[1] == 39


def test_manifest_command(small_corpus, tmp_path):
    out = tmp_path / "manifest.csv"
    assert run("manifest", "--root", small_corpus, "-o", out) == 0
    assert out.read_text().startswith("utt_id,")


def test_testsets_command(small_corpus, tmp_path):
    manifest = tmp_path / "manifest.csv"
    run("manifest", "--root", small_corpus, "-o", manifest)
    out_dir = tmp_path / "stim"
    assert run("testsets", "--manifest", manifest, "--out-dir", out_dir,
               "--modes", "swap-u") == 0
    entries = load_stimuli(out_dir / "stimuli.csv")
    assert entries
    assert (out_dir / "testsets.run.json").exists()


def test_per_identical_files(tmp_path, capsys):
    ref = tmp_path / "ref.txt"
    ref.write_text("utt1 h# iy s\nutt2 h# aa\n")
    assert run("per", "--ref", ref, "--hyp", ref) == 0
    out = capsys.readouterr().out
    assert "PER 0.0" in out


def test_per_counts(tmp_path, capsys):
    (tmp_path / "ref.txt").write_text("utt1 sil aa s\n")
    (tmp_path / "hyp.txt").write_text("utt1 sil ah s\n")
    assert run("per", "--ref", tmp_path / "ref.txt", "--hyp", tmp_path / "hyp.txt") == 0
    assert "PER 33.3 (S=1 D=0 I=0 N=3)" in capsys.readouterr().out


def test_decode_and_grid(tiny_bundles, small_stimuli, tmp_path, capsys):
    out_dir, entries = small_stimuli
    hyp = tmp_path / "hyp.txt"
    assert run("decode", "--model", tiny_bundles["M"],
               "--wav", entries[0].wav_path, "-o", hyp) == 0
    line = hyp.read_text().strip()
    assert line.split()[0] == Path(entries[0].wav_path).stem
    assert len(line.split()) > 1

    grid_out = tmp_path / "grid.csv"
    code = run("grid", "--stimuli", out_dir / "stimuli.csv",
               "--models", f"{tiny_bundles['M']},{tiny_bundles['F']}",
               "-o", grid_out)
    assert code == 0
    text = grid_out.read_text()
    assert text.splitlines()[0] == "condition,F,M"
    assert (tmp_path / "grid.run.json").exists()


def test_decode_requires_exactly_one_input(tiny_bundles):
    assert run("decode", "--model", tiny_bundles["M"]) == 1


def test_decode_jobs_match_serial(tiny_bundles, small_stimuli, tmp_path):
    out_dir, entries = small_stimuli
    stimuli_csv = out_dir / "stimuli.csv"
    serial, parallel = tmp_path / "serial.txt", tmp_path / "parallel.txt"
    assert run("decode", "--model", tiny_bundles["M"], "--stimuli", stimuli_csv,
               "-o", serial) == 0
    assert run("decode", "--model", tiny_bundles["M"], "--stimuli", stimuli_csv,
               "--jobs", "2", "-o", parallel) == 0
    assert serial.read_text() == parallel.read_text()
    assert len(serial.read_text().splitlines()) == len(entries)


def test_grid_jobs_match_serial(tiny_bundles, small_stimuli, tmp_path):
    out_dir, _ = small_stimuli
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    models = f"{tiny_bundles['M']},{tiny_bundles['F']}"
    assert run("grid", "--stimuli", out_dir / "stimuli.csv", "--models", models,
               "-o", a) == 0
    assert run("grid", "--stimuli", out_dir / "stimuli.csv", "--models", models,
               "--jobs", "2", "-o", b) == 0
    assert a.read_text() == b.read_text()


def test_every_subcommand_has_help():
    from uvswap.cli import build_parser

    parser = build_parser()
    for name, sub in parser.subcommands.choices.items():
        text = sub.format_help()
        assert name in ("mix", "align", "spectrogram", "features", "manifest",
                        "testsets", "train", "decode", "per", "grid",
                        "score-subjective", "serve", "synth-corpus")
        assert "--seed" in text
    assert len(parser.subcommands.choices) == 13


def test_score_subjective_command(small_stimuli, tmp_path, capsys):
    out_dir, entries = small_stimuli
    originals = [e for e in entries if "<" not in e.condition]
    mixed = [e for e in entries if "<" in e.condition]
    log_dir = tmp_path / "sessions"
    log_dir.mkdir()
    events = [{"event": "created", "session_id": "abc", "seed": 1,
               "order": [e.stimulus_id for e in originals[:2] + mixed[:2]],
               "subject": None}]
    for e in originals[:2] + mixed[:2]:
        events.append({"event": "response", "stimulus_id": e.stimulus_id,
                       "choice": "one_speaker"})
    (log_dir / "abc.jsonl").write_text(
        "\n".join(json.dumps(ev) for ev in events) + "\n")
    out = tmp_path / "table.csv"
    assert run("score-subjective", "--data-dir", log_dir,
               "--stimuli", out_dir / "stimuli.csv", "-o", out) == 0
    text = out.read_text()
    assert text.startswith("condition,n,correct,accuracy")
    assert "overall,4,2,50.0" in text


def test_synth_corpus_command(tmp_path):
    assert run("synth-corpus", "--out-dir", tmp_path / "c", "--train", "2",
               "--test", "1", "--seed", "3") == 0
    wavs = list((tmp_path / "c").rglob("*.wav"))
    assert len(wavs) == 6


def test_usage_error_exits_2():
    with pytest.raises(SystemExit) as err:
        dispatch(["mix"])  # missing required flags
    assert err.value.code == 2
    with pytest.raises(SystemExit):
        dispatch(["not-a-command"])


def test_data_error_exits_1(tmp_path, capsys):
    assert run("per", "--ref", tmp_path / "none.txt", "--hyp", tmp_path / "none.txt") == 1
    assert "error[" in capsys.readouterr().err


def test_mix_bad_wav_exits_1(pair_files, tmp_path, capsys):
    bad = tmp_path / "bad.wav"
    bad.write_bytes(b"not a wav")
    code = run("mix", "--source", bad, "--source-phn", pair_files / "m.phn",
               "--target", pair_files / "f.wav", "--target-phn", pair_files / "f.phn",
               "-o", tmp_path / "x.wav")
    assert code == 1
    assert "error[unsupported_format]" in capsys.readouterr().err
