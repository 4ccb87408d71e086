"""Single command-line entry point for the whole pipeline.

Usage errors exit 2 (argparse), data errors exit 1 with a structured
"error[code]: message" line, success exits 0. A key=value config file
(--config) supplies defaults; explicit flags always win.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import harness, recognizer, service
from .annotations import ClassificationTable, parse_phn, validate_tier
from .dsp import (MfccConfig, mfcc39, read_wav_file, save_features, spectrogram,
                  spectrogram_to_text, write_wav_file)
from .errors import UvswapError
from .mixer import (DEFAULT_CROSSFADE, MIX_MODES, MixMode, plan_mix, render,
                    rms_gain)
from .synthcorpus import SynthConfig, build_synthetic_corpus
from .vu_align import align, extract_runs, format_dp_debug, mapping_table

log = logging.getLogger("uvswap")


def parse_config_file(path) -> dict:
    """TOML-like key = value pairs; '#' comments; bare ints/floats/bools."""
    values: dict = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line or "=" not in line:
            continue
        key, _, val = line.partition("=")
        values[key.strip().replace("-", "_")] = _coerce(val.strip())
    return values


def _coerce(val: str):
    low = val.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(val)
    except ValueError:
        pass
    try:
        return float(val)
    except ValueError:
        return val.strip("\"'")


def _read_tier(path, sample_rate, table):
    with open(path, encoding="utf-8") as f:
        return parse_phn(f.read(), sample_rate, table)


def _load_audio_and_tier(wav_path, phn_path, table):
    wave = read_wav_file(wav_path)
    tier = _read_tier(phn_path, wave.sample_rate, table)
    problems = validate_tier(tier, len(wave))
    if problems:
        raise UvswapError(f"{phn_path}: " + "; ".join(problems))
    return wave, tier


def _mix_mode(args) -> MixMode:
    return MixMode(args.mode, v_swap_start_run=args.v_start,
                   v_swap_count=args.v_count)


def cmd_mix(args) -> int:
    table = ClassificationTable.load_default()
    src_wave, src_tier = _load_audio_and_tier(args.source, args.source_phn, table)
    tgt_wave, tgt_tier = _load_audio_and_tier(args.target, args.target_phn, table)
    src_runs = extract_runs(src_tier, table)
    tgt_runs = extract_runs(tgt_tier, table)
    mapping = mapping_table(align(src_runs, tgt_runs), src_runs, tgt_runs)
    gain = rms_gain(src_wave, tgt_wave) if args.rms_match else 1.0
    recipe = plan_mix(src_runs, tgt_runs, mapping, _mix_mode(args), src_tier,
                      tgt_tier, table, args.crossfade, gain)
    write_wav_file(args.output, render(recipe, src_wave, tgt_wave))
    recipe_path = Path(args.output).with_suffix(".recipe.json")
    recipe_path.write_text(recipe.to_json(), encoding="utf-8")
    log.info("wrote %s and %s", args.output, recipe_path)
    return 0


def cmd_align(args) -> int:
    table = ClassificationTable.load_default()
    src_tier = _read_tier(args.source_phn, args.sample_rate, table)
    tgt_tier = _read_tier(args.target_phn, args.sample_rate, table)
    src_runs = extract_runs(src_tier, table)
    tgt_runs = extract_runs(tgt_tier, table)
    path = align(src_runs, tgt_runs)
    mapping = mapping_table(path, src_runs, tgt_runs)
    doc = {
        "source_runs": [[r.cls, r.start, r.end] for r in src_runs.runs],
        "target_runs": [[r.cls, r.start, r.end] for r in tgt_runs.runs],
        "path": {"total_cost": path.total_cost,
                 "steps": [list(s) for s in path.steps]},
        "mapping": {"pairs": [list(p) for p in mapping.pairs],
                    "instant_map": [list(p) for p in mapping.instant_map]},
    }
    text = json.dumps(doc, indent=2) + "\n"
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if args.dump_dp:
        Path(args.dump_dp).write_text(format_dp_debug(src_runs, tgt_runs),
                                      encoding="utf-8")
    return 0


def cmd_spectrogram(args) -> int:
    wave = read_wav_file(args.wav)
    spec = spectrogram(wave, args.window, args.hop, args.fft)
    Path(args.output).write_text(spectrogram_to_text(spec), encoding="utf-8")
    return 0


def cmd_features(args) -> int:
    wave = read_wav_file(args.wav)
    feats = mfcc39(wave, MfccConfig(cmn=args.cmn))
    Path(args.output).write_bytes(save_features(feats))
    log.info("wrote %s frames x %s dims", *feats.frames.shape)
    return 0


def cmd_manifest(args) -> int:
    manifest = harness.build_manifest(args.root)
    manifest.save(args.output)
    by = {}
    for e in manifest.entries:
        by[(e.subset, e.gender)] = by.get((e.subset, e.gender), 0) + 1
    for (subset, gender), n in sorted(by.items()):
        log.info("%s %s: %d utterances", subset, gender, n)
    return 0


def cmd_testsets(args) -> int:
    table = ClassificationTable.load_default()
    manifest = harness.Manifest.load(args.manifest)
    pairs, excluded = harness.pair_utterances(manifest, args.subset)
    modes = [MixMode(kind) for kind in args.modes.split(",")]
    entries, failures = harness.generate_testsets(
        pairs, modes, args.out_dir, table, args.crossfade,
        rms_match=args.rms_match, jobs=args.jobs)
    log.info("%d stimuli, %d pairs, %d excluded single-gender utterances, "
             "%d failures", len(entries), len(pairs), len(excluded), len(failures))
    harness.write_run_descriptor(
        Path(args.out_dir) / "testsets.run.json", args.seed,
        {"modes": args.modes, "crossfade": args.crossfade,
         "subset": args.subset, "rms_match": args.rms_match},
        [args.manifest])
    return 0


def cmd_train(args) -> int:
    manifest = harness.Manifest.load(args.manifest)
    model, lm, logliks = harness.train_gender_model(
        manifest, args.gender, budget=args.budget, iterations=args.iterations,
        max_utts=args.max_utts, lm_order=args.lm_order)
    recognizer.save_model(args.output, model, lm)
    log.info("trained %d phones, %d gaussians; log-likelihood %s",
             len(model.hmms), model.n_components(),
             " ".join(f"{x:.1f}" for x in logliks))
    return 0


_DECODE_STATE: dict = {}


def _decode_init(model_path, lm_weight):
    model, lm = recognizer.load_model(model_path)
    _DECODE_STATE["decoder"] = recognizer.Decoder(model, lm, lm_weight)


def _decode_one(task):
    utt_id, wav_path = task
    feats = mfcc39(read_wav_file(wav_path)).frames
    phones = _DECODE_STATE["decoder"].decode(feats)
    return f"{utt_id} {' '.join(phones)}"


def cmd_decode(args) -> int:
    if bool(args.wav) == bool(args.stimuli):
        raise UvswapError("decode needs exactly one of --wav or --stimuli")
    if args.wav:
        tasks = [(Path(args.wav).stem, args.wav)]
    else:
        stimuli = harness.load_stimuli(args.stimuli)
        tasks = [(s.stimulus_id, s.wav_path) for s in
                 sorted(stimuli, key=lambda s: s.stimulus_id)]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs, initializer=_decode_init,
                                 initargs=(args.model, args.lm_weight)) as pool:
            lines = list(pool.map(_decode_one, tasks, chunksize=4))
    else:
        _decode_init(args.model, args.lm_weight)
        lines = [_decode_one(t) for t in tasks]
    text = "\n".join(lines) + "\n"
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def _read_trans(path) -> dict[str, list[str]]:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        parts = line.split()
        if parts:
            out[parts[0]] = parts[1:]
    return out


def cmd_per(args) -> int:
    refs = _read_trans(args.ref)
    hyps = _read_trans(args.hyp)
    fold_map = None if args.no_fold else ClassificationTable.load_default().fold_map
    total = None
    for utt_id in sorted(refs):
        if utt_id not in hyps:
            raise UvswapError(f"utterance {utt_id!r} missing from hypotheses")
        pb = recognizer.phone_error_rate(refs[utt_id], hyps[utt_id], fold_map)
        total = pb if total is None else total.merge(pb)
    if total is None:
        raise UvswapError("no reference utterances")
    print(f"PER {total.per:.1f} (S={total.substitutions} D={total.deletions} "
          f"I={total.insertions} N={total.ref_length})")
    return 0


def cmd_grid(args) -> int:
    paths = args.models.split(",")
    if len(paths) != 2:
        raise UvswapError("--models expects 'male.mdl,female.mdl'")
    models = {gender: recognizer.load_model(path)
              for gender, path in zip(("M", "F"), paths)}
    stimuli = harness.load_stimuli(args.stimuli)
    result = harness.run_experiment_grid(models, stimuli,
                                         lm_weight=args.lm_weight, jobs=args.jobs)
    Path(args.output).write_text(result.to_csv(), encoding="utf-8")
    harness.write_run_descriptor(
        Path(args.output).with_suffix(".run.json"), args.seed,
        {"lm_weight": args.lm_weight, "models": paths}, [args.stimuli])
    sys.stdout.write(result.to_csv())
    return 0


def cmd_score_subjective(args) -> int:
    stimuli = {s.stimulus_id: s for s in harness.load_stimuli(args.stimuli)}
    records = []
    for log_path in sorted(Path(args.data_dir).glob("*.jsonl")):
        for line in log_path.read_text(encoding="utf-8").splitlines():
            event = json.loads(line)
            if event["event"] != "response":
                continue
            stim = stimuli.get(event["stimulus_id"])
            if stim is None:
                raise harness.UnknownCondition(
                    f"response references unknown stimulus {event['stimulus_id']!r}")
            records.append((stim.condition, event["choice"]))
    result = harness.score_subjective(records)
    text = result.to_csv()
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def cmd_serve(args) -> int:
    config = service.load_service_config(
        stimuli_path=args.stimuli, data_dir=args.data_dir,
        config_file=args.config, host=args.host, port=args.port,
        playback_limit=args.playback_limit, seed=args.seed,
        protocol=args.protocol)
    service.run_service(config)
    return 0


def cmd_synth_corpus(args) -> int:
    cfg = SynthConfig(n_train_sentences=args.train, n_test_sentences=args.test,
                      seed=args.seed if args.seed is not None else 0)
    build_synthetic_corpus(args.out_dir, cfg)
    log.info("synthetic corpus written to %s", args.out_dir)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed")
    common.add_argument("--config", help="key=value config file with defaults")

    parser = argparse.ArgumentParser(prog="uvswap", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    parser.subcommands = sub  # so config-file defaults can reach subparsers

    p = sub.add_parser("mix", parents=[common],
                       help="mix one utterance pair into a chimera WAV")
    p.add_argument("--source", required=True)
    p.add_argument("--source-phn", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--target-phn", required=True)
    p.add_argument("--mode", choices=MIX_MODES, default="swap-u")
    p.add_argument("--v-start", type=int, default=None,
                   help="first swapped voiced run (swap-vu)")
    p.add_argument("--v-count", type=int, default=2)
    p.add_argument("--crossfade", type=int, default=DEFAULT_CROSSFADE)
    p.add_argument("--rms-match", action="store_true")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_mix)

    p = sub.add_parser("align", parents=[common],
                       help="dump runs, DP path, and mapping table")
    p.add_argument("--source-phn", required=True)
    p.add_argument("--target-phn", required=True)
    p.add_argument("--sample-rate", type=int, default=16000)
    p.add_argument("--dump-dp", help="write the DP matrix dump here")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("spectrogram", parents=[common],
                       help="write a tabular dB spectrogram")
    p.add_argument("--wav", required=True)
    p.add_argument("--window", type=int, default=400)
    p.add_argument("--hop", type=int, default=160)
    p.add_argument("--fft", type=int, default=512)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_spectrogram)

    p = sub.add_parser("features", parents=[common],
                       help="write an MFCC-39 feature archive")
    p.add_argument("--wav", required=True)
    p.add_argument("--cmn", action="store_true")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("manifest", parents=[common],
                       help="scan a TIMIT-layout corpus into a manifest CSV")
    p.add_argument("--root", required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_manifest)

    p = sub.add_parser("testsets", parents=[common],
                       help="render mixed test sets for all pairs and modes")
    p.add_argument("--manifest", required=True)
    p.add_argument("--subset", default="test")
    p.add_argument("--modes", default="swap-sst,swap-u,swap-vu")
    p.add_argument("--crossfade", type=int, default=DEFAULT_CROSSFADE)
    p.add_argument("--rms-match", action="store_true")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_testsets)

    p = sub.add_parser("train", parents=[common],
                       help="train one gender's monophone model + phone LM")
    p.add_argument("--manifest", required=True)
    p.add_argument("--gender", choices=("M", "F"), required=True)
    p.add_argument("--budget", type=int, default=1000)
    p.add_argument("--iterations", type=int, default=10)
    p.add_argument("--max-utts", type=int, default=200)
    p.add_argument("--lm-order", type=int, default=2, choices=(1, 2, 3))
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("decode", parents=[common],
                       help="decode WAVs to phone sequences")
    p.add_argument("--model", required=True)
    p.add_argument("--wav")
    p.add_argument("--stimuli")
    p.add_argument("--lm-weight", type=float, default=1.0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("per", parents=[common],
                       help="phone error rate between two transcript files")
    p.add_argument("--ref", required=True)
    p.add_argument("--hyp", required=True)
    p.add_argument("--no-fold", action="store_true")
    p.set_defaults(func=cmd_per)

    p = sub.add_parser("grid", parents=[common],
                       help="run the PER experiment grid")
    p.add_argument("--stimuli", required=True)
    p.add_argument("--models", required=True,
                   help="comma-separated male,female model bundles")
    p.add_argument("--lm-weight", type=float, default=1.0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("score-subjective", parents=[common],
                       help="score listening-test event logs")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--stimuli", required=True)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_score_subjective)

    p = sub.add_parser("serve", parents=[common],
                       help="run the listening-test HTTP service")
    p.add_argument("--stimuli")
    p.add_argument("--data-dir")
    p.add_argument("--host", default=None)
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--playback-limit", type=int, default=None)
    p.add_argument("--protocol", default=None,
                   help="originals,u_swap,vu_swap counts, e.g. 10,10,5")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("synth-corpus", parents=[common],
                       help="generate a synthetic gender-marked corpus")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--train", type=int, default=120)
    p.add_argument("--test", type=int, default=24)
    p.set_defaults(func=cmd_synth_corpus)

    return parser


def dispatch(argv: list[str]) -> int:
    preparser = argparse.ArgumentParser(add_help=False)
    preparser.add_argument("--config")
    pre, _ = preparser.parse_known_args(argv)
    parser = build_parser()
    if pre.config:
        defaults = parse_config_file(pre.config)
        # subparsers parse into a fresh namespace, so defaults must be set
        # on each subcommand, filtered to the options it actually defines;
        # serve reads the config file itself (file < env < flags)
        for name, sp in parser.subcommands.choices.items():
            if name == "serve":
                continue
            known = {a.dest for a in sp._actions}
            sp.set_defaults(**{k: v for k, v in defaults.items() if k in known})
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UvswapError as exc:
        print(f"error[{exc.code}]: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error[io]: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
