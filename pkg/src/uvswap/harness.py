"""Corpus manifests, cross-gender pairing, test-set generation, and the
experiment grid.

The stimulus manifest is the shared currency: generation writes one WAV
plus one JSON sidecar (recipe, provenance, reference phones) per
stimulus, and both the recognition grid and the listening-test service
consume the same CSV. Stimulus ids are opaque counters so nothing about
a stimulus' condition leaks through its id or audio URL.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .annotations import ClassificationTable, PhoneTier, parse_phn
from .dsp import MfccConfig, Waveform, mfcc39, read_wav_file, write_wav_file
from .errors import UvswapError
from .mixer import (DEFAULT_CROSSFADE, MixMode, MixRecipe, ORIGIN_SOURCE, Piece,
                    plan_mix, render, rms_gain)
from .recognizer import (AcousticModel, Decoder, PerBreakdown, PhoneLM,
                         flat_start, phone_error_rate, tier_frame_segments,
                         train_em, train_lm)
from .vu_align import align, extract_runs, mapping_table

log = logging.getLogger(__name__)

CHOICE_ONE = "one_speaker"
CHOICE_TWO = "two_speakers"

MODE_SUFFIX = {"swap-sst": "SSt", "swap-u": "U", "swap-vu": "vU"}
TABLE1_ORDER = ["M", "F", "M<FvU", "F<MvU", "M<FU", "F<MU"]
GRID_ORDER = ["M", "M<FSSt", "M<FU", "M<FvU", "F", "F<MSSt", "F<MU", "F<MvU"]


class MissingAnnotation(UvswapError):
    code = "missing_annotation"


class UnparseablePath(UvswapError):
    code = "unparseable_path"


class MissingModel(UvswapError):
    code = "missing_model"


class MissingStimuli(UvswapError):
    code = "missing_stimuli"


class UnknownCondition(UvswapError):
    code = "unknown_condition"


@dataclass(frozen=True)
class ManifestEntry:
    utt_id: str
    wav_path: str
    phn_path: str
    speaker: str
    gender: str  # "M" or "F"
    sentence: str
    subset: str  # "train" or "test"


@dataclass(frozen=True)
class UtterancePair:
    source: ManifestEntry
    target: ManifestEntry


@dataclass
class Manifest:
    entries: list[ManifestEntry]

    def subset(self, name: str, gender: str | None = None) -> list[ManifestEntry]:
        return [e for e in self.entries
                if e.subset == name and (gender is None or e.gender == gender)]

    def save(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f)
            w.writerow(["utt_id", "wav_path", "phn_path", "speaker", "gender",
                        "sentence", "subset"])
            for e in self.entries:
                w.writerow([e.utt_id, e.wav_path, e.phn_path, e.speaker,
                            e.gender, e.sentence, e.subset])

    @classmethod
    def load(cls, path) -> "Manifest":
        base = Path(path).parent
        entries = []
        with open(path, newline="", encoding="utf-8") as f:
            for row in csv.DictReader(f):
                entries.append(ManifestEntry(
                    row["utt_id"],
                    str((base / row["wav_path"]).resolve()),
                    str((base / row["phn_path"]).resolve()),
                    row["speaker"], row["gender"], row["sentence"], row["subset"]))
        return cls(entries)


def build_manifest(root) -> Manifest:
    """Scan a TIMIT-layout tree: {train,test}/<dialect>/<speaker>/<utt>.wav.

    Speaker directory names encode gender in their first character;
    file stems are sentence ids. Every wav must have a .phn sibling.
    """
    root = Path(root)
    entries = []
    for wav in sorted(root.rglob("*")):
        if wav.suffix.lower() != ".wav" or not wav.is_file():
            continue
        rel = wav.relative_to(root)
        subset = next((p.lower() for p in rel.parts if p.lower() in ("train", "test")), None)
        if subset is None:
            raise UnparseablePath(f"{wav}: no train/test component in path")
        speaker = wav.parent.name.lower()
        if not speaker or speaker[0] not in "mf":
            raise UnparseablePath(f"{wav}: speaker dir {speaker!r} does not encode gender")
        phn = _sibling_phn(wav)
        if phn is None:
            raise MissingAnnotation(f"{wav}: no .phn annotation")
        sentence = wav.stem.lower()
        entries.append(ManifestEntry(
            utt_id=f"{speaker}-{sentence}",
            wav_path=str(wav), phn_path=str(phn),
            speaker=speaker, gender=speaker[0].upper(),
            sentence=sentence, subset=subset))
    entries.sort(key=lambda e: e.utt_id)
    return Manifest(entries)


def _sibling_phn(wav: Path) -> Path | None:
    for suffix in (".phn", ".PHN"):
        cand = wav.with_suffix(suffix)
        if cand.exists():
            return cand
    return None


def pair_utterances(manifest: Manifest, subset: str = "test",
                    ) -> tuple[list[UtterancePair], list[str]]:
    """Pair each utterance with an opposite-gender rendition of its sentence.

    Ties break to the lexicographically smallest speaker id. Returns
    (pairs, excluded utt_ids) where excluded utterances had no
    opposite-gender rendition.
    """
    entries = manifest.subset(subset)
    by_sentence: dict[tuple[str, str], list[ManifestEntry]] = {}
    for e in entries:
        by_sentence.setdefault((e.sentence, e.gender), []).append(e)
    pairs, excluded = [], []
    for e in entries:
        other = "F" if e.gender == "M" else "M"
        candidates = by_sentence.get((e.sentence, other), [])
        if not candidates:
            excluded.append(e.utt_id)
            continue
        target = min(candidates, key=lambda c: c.speaker)
        pairs.append(UtterancePair(e, target))
    return pairs, excluded


# ---------------------------------------------------------------------------
# Stimulus generation

@dataclass(frozen=True)
class StimulusEntry:
    stimulus_id: str
    condition: str
    source_utt: str
    target_utt: str
    wav_path: str
    recipe_path: str


def condition_label(source_gender: str, mode_kind: str | None) -> str:
    if mode_kind is None:
        return source_gender
    other = "F" if source_gender == "M" else "M"
    return f"{source_gender}<{other}{MODE_SUFFIX[mode_kind]}"


def save_stimuli(path, entries: list[StimulusEntry]) -> None:
    base = Path(path).parent
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["stimulus_id", "condition", "source_utt", "target_utt",
                    "wav_path", "recipe_path"])
        for e in entries:
            w.writerow([e.stimulus_id, e.condition, e.source_utt, e.target_utt,
                        _relativize(e.wav_path, base), _relativize(e.recipe_path, base)])


def _relativize(path: str, base: Path) -> str:
    try:
        return str(Path(path).resolve().relative_to(base.resolve()))
    except ValueError:
        return str(path)


def load_stimuli(path) -> list[StimulusEntry]:
    base = Path(path).parent
    out = []
    with open(path, newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            out.append(StimulusEntry(
                row["stimulus_id"], row["condition"], row["source_utt"],
                row["target_utt"],
                str((base / row["wav_path"]).resolve()),
                str((base / row["recipe_path"]).resolve())))
    return out


def mixed_reference(recipe: MixRecipe, src_tier: PhoneTier,
                    tgt_tier: PhoneTier) -> list[str]:
    """Reference phone sequence for a mixed waveform.

    Source pieces contribute the source phones they cover; swapped pieces
    physically contain the target's phones, so those contribute target
    labels. A phone counts when more than half of it lies in the piece.
    """
    labels = []
    for piece in recipe.pieces:
        tier = src_tier if piece.origin == ORIGIN_SOURCE else tgt_tier
        for seg in tier.segments:
            overlap = min(seg.end, piece.end) - max(seg.start, piece.start)
            if 2 * overlap > seg.duration:
                labels.append(seg.label)
    return labels


def _load_pair(entry: ManifestEntry) -> tuple[Waveform, PhoneTier]:
    wave = read_wav_file(entry.wav_path)
    with open(entry.phn_path, encoding="utf-8") as f:
        tier = parse_phn(f.read(), wave.sample_rate)
    return wave, tier


def _render_stimulus(task) -> tuple[list[StimulusEntry], list[tuple[str, str]]]:
    """Worker: render all stimuli for one pair. Returns (entries, failures)."""
    (pair, mode_specs, out_dir, crossfade_len, table, include_original,
     rms_match) = task
    out_dir = Path(out_dir)
    entries: list[StimulusEntry] = []
    failures: list[tuple[str, str]] = []
    try:
        src_wave, src_tier = _load_pair(pair.source)
        tgt_wave, tgt_tier = _load_pair(pair.target)
        src_runs = extract_runs(src_tier, table)
        tgt_runs = extract_runs(tgt_tier, table)
        mapping = mapping_table(align(src_runs, tgt_runs), src_runs, tgt_runs)
    except UvswapError as exc:
        return [], [(pair.source.utt_id, f"{type(exc).__name__}: {exc}")]

    if include_original is not None:
        stim_id = include_original
        recipe = MixRecipe((Piece(ORIGIN_SOURCE, 0, len(src_wave)),), crossfade_len)
        entries.append(_write_stimulus(
            out_dir, stim_id, condition_label(pair.source.gender, None),
            pair, recipe, src_wave, tgt_wave, src_tier, tgt_tier))

    gain = rms_gain(src_wave, tgt_wave) if rms_match else 1.0
    for stim_id, mode in mode_specs:
        try:
            recipe = plan_mix(src_runs, tgt_runs, mapping, mode, src_tier,
                              tgt_tier, table, crossfade_len, gain)
            entries.append(_write_stimulus(
                out_dir, stim_id, condition_label(pair.source.gender, mode.kind),
                pair, recipe, src_wave, tgt_wave, src_tier, tgt_tier))
        except UvswapError as exc:
            failures.append((pair.source.utt_id,
                             f"{mode.kind}: {type(exc).__name__}: {exc}"))
    return entries, failures


def _write_stimulus(out_dir, stim_id, condition, pair, recipe, src_wave,
                    tgt_wave, src_tier, tgt_tier) -> StimulusEntry:
    wave = render(recipe, src_wave, tgt_wave)
    wav_path = out_dir / f"{stim_id}.wav"
    recipe_path = out_dir / f"{stim_id}.json"
    write_wav_file(wav_path, wave)
    sidecar = {
        "stimulus_id": stim_id,
        "condition": condition,
        "source_utt": pair.source.utt_id,
        "target_utt": pair.target.utt_id,
        "reference_phones": mixed_reference(recipe, src_tier, tgt_tier),
        "recipe": recipe.to_dict(),
    }
    with open(recipe_path, "w", encoding="utf-8") as f:
        json.dump(sidecar, f, indent=2)
        f.write("\n")
    return StimulusEntry(stim_id, condition, pair.source.utt_id,
                         pair.target.utt_id, str(wav_path), str(recipe_path))


def generate_testsets(pairs: list[UtterancePair], modes: list[MixMode], out_dir,
                      table: ClassificationTable | None = None,
                      crossfade_len: int = DEFAULT_CROSSFADE,
                      include_originals: bool = True, rms_match: bool = False,
                      jobs: int = 1,
                      ) -> tuple[list[StimulusEntry], list[tuple[str, str]]]:
    """Render every pair in every mode; write WAVs, sidecars, stimuli.csv.

    Mixer failures are collected per pair, not fatal. Stimulus ids are
    preassigned, so output is deterministic regardless of job count.
    """
    table = table or ClassificationTable.load_default()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    counter = 0

    def next_id() -> str:
        nonlocal counter
        counter += 1
        return f"s{counter:05d}"

    ordered = sorted(pairs, key=lambda p: p.source.utt_id)
    tasks = []
    for pair in ordered:
        original_id = next_id() if include_originals else None
        mode_specs = [(next_id(), mode) for mode in
                      sorted(modes, key=lambda m: m.kind)]
        tasks.append((pair, mode_specs, str(out_dir), crossfade_len, table,
                      original_id, rms_match))

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_render_stimulus, tasks))
    else:
        results = [_render_stimulus(t) for t in tasks]

    entries: list[StimulusEntry] = []
    failures: list[tuple[str, str]] = []
    for got, failed in results:
        entries.extend(got)
        failures.extend(failed)
    for utt, reason in failures:
        log.warning("skipped %s: %s", utt, reason)
    entries.sort(key=lambda e: e.stimulus_id)
    save_stimuli(out_dir / "stimuli.csv", entries)
    return entries, failures


# ---------------------------------------------------------------------------
# Training helpers (desk scale)

def training_corpus(manifest: Manifest, gender: str, subset: str = "train",
                    max_utts: int | None = 200,
                    table: ClassificationTable | None = None,
                    mfcc_cfg: MfccConfig = MfccConfig(),
                    ) -> tuple[list, list[list[str]]]:
    """Features plus frame segments and transcriptions for one gender."""
    table = table or ClassificationTable.load_default()
    entries = sorted(manifest.subset(subset, gender), key=lambda e: e.utt_id)
    if max_utts is not None:
        entries = entries[:max_utts]
    corpus, transcriptions = [], []
    for entry in entries:
        wave, tier = _load_pair(entry)
        feats = mfcc39(wave, mfcc_cfg).frames
        corpus.append((feats, tier_frame_segments(tier, len(feats), mfcc_cfg.hop,
                                                  mfcc_cfg.frame_len)))
        transcriptions.append(tier.labels())
    return corpus, transcriptions


def default_mixup_schedule(iterations: int, per_state_target: int) -> dict[int, int]:
    """Double components at evenly spaced iterations up to the target."""
    targets = []
    count = 2
    while count < per_state_target:
        targets.append(count)
        count *= 2
    targets.append(per_state_target)
    first = max(1, iterations // 4)
    last = max(first, iterations - 3)
    schedule = {}
    for k, target in enumerate(targets):
        it = first if len(targets) == 1 else first + round(k * (last - first) / (len(targets) - 1))
        schedule[min(it, iterations - 1)] = target
    return schedule


def train_gender_model(manifest: Manifest, gender: str, budget: int = 1000,
                       iterations: int = 10, max_utts: int | None = 200,
                       lm_order: int = 2,
                       table: ClassificationTable | None = None,
                       mfcc_cfg: MfccConfig = MfccConfig(),
                       ) -> tuple[AcousticModel, PhoneLM, list[float]]:
    """Flat start + EM with mixing-up, plus a phone LM, for one gender."""
    corpus, transcriptions = training_corpus(manifest, gender, "train",
                                             max_utts, table, mfcc_cfg)
    model = flat_start(corpus, budget)
    per_state = max(1, budget // model.n_states())
    schedule = default_mixup_schedule(iterations, per_state) if per_state > 1 else None
    model, logliks = train_em(model, corpus, iterations, schedule)
    lm = train_lm(transcriptions, order=lm_order)
    return model, lm, logliks


# ---------------------------------------------------------------------------
# Experiment grid

@dataclass
class ExperimentResult:
    conditions: list[str]
    models: list[str]
    cells: dict[tuple[str, str], PerBreakdown]

    def per(self, condition: str, model: str) -> float:
        return self.cells[(condition, model)].per

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["condition"] + self.models)
        for cond in self.conditions:
            w.writerow([cond] + [f"{self.cells[(cond, m)].per:.2f}"
                                 for m in self.models])
        return buf.getvalue()


_GRID_STATE: dict = {}


def _grid_init(models, lm_weight, mfcc_cfg, fold_map):
    _GRID_STATE["decoders"] = {
        name: Decoder(model, lm, lm_weight) for name, (model, lm) in models.items()
    }
    _GRID_STATE["mfcc_cfg"] = mfcc_cfg
    _GRID_STATE["fold_map"] = fold_map


def _grid_decode(stim: StimulusEntry):
    wave = read_wav_file(stim.wav_path)
    feats = mfcc39(wave, _GRID_STATE["mfcc_cfg"]).frames
    with open(stim.recipe_path, encoding="utf-8") as f:
        reference = json.load(f)["reference_phones"]
    out = []
    for name, decoder in sorted(_GRID_STATE["decoders"].items()):
        hyp = decoder.decode(feats)
        breakdown = phone_error_rate(reference, hyp, _GRID_STATE["fold_map"])
        out.append((stim.condition, name, breakdown))
    return out


def run_experiment_grid(models: dict[str, tuple[AcousticModel, PhoneLM]],
                        stimuli: list[StimulusEntry],
                        table: ClassificationTable | None = None,
                        lm_weight: float = 1.0,
                        mfcc_cfg: MfccConfig = MfccConfig(),
                        jobs: int = 1) -> ExperimentResult:
    """Decode every stimulus with every model; aggregate PER per cell."""
    if not models:
        raise MissingModel("no models supplied")
    if not stimuli:
        raise MissingStimuli("no stimuli supplied")
    table = table or ClassificationTable.load_default()
    ordered = sorted(stimuli, key=lambda s: s.stimulus_id)

    if jobs > 1:
        with ProcessPoolExecutor(
                max_workers=jobs, initializer=_grid_init,
                initargs=(models, lm_weight, mfcc_cfg, table.fold_map)) as pool:
            results = list(pool.map(_grid_decode, ordered, chunksize=8))
    else:
        _grid_init(models, lm_weight, mfcc_cfg, table.fold_map)
        results = [_grid_decode(s) for s in ordered]

    cells: dict[tuple[str, str], PerBreakdown] = {}
    for rows in results:
        for condition, model_name, breakdown in rows:
            key = (condition, model_name)
            cells[key] = cells[key].merge(breakdown) if key in cells else breakdown
    seen = {c for c, _ in cells}
    conditions = [c for c in GRID_ORDER if c in seen]
    conditions += sorted(seen - set(conditions))
    return ExperimentResult(conditions, sorted(models), cells)


def write_run_descriptor(path, seed: int | None, config: dict,
                         input_paths: list) -> None:
    """Provenance sidecar: seed, config hash, and input-content hashes."""
    def sha256_file(p):
        h = hashlib.sha256()
        with open(p, "rb") as f:
            for block in iter(lambda: f.read(65536), b""):
                h.update(block)
        return h.hexdigest()

    doc = {
        "seed": seed,
        "config": config,
        "config_sha256": hashlib.sha256(
            json.dumps(config, sort_keys=True).encode()).hexdigest(),
        "inputs": {str(p): sha256_file(p) for p in input_paths},
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")


# ---------------------------------------------------------------------------
# Subjective scoring

@dataclass(frozen=True)
class ConditionScore:
    condition: str
    n: int
    correct: int

    @property
    def accuracy(self) -> float:
        return 100.0 * self.correct / self.n if self.n else 0.0


@dataclass
class SubjectiveResult:
    rows: list[ConditionScore]

    @property
    def overall(self) -> ConditionScore:
        return ConditionScore("overall", sum(r.n for r in self.rows),
                              sum(r.correct for r in self.rows))

    def by_condition(self) -> dict[str, ConditionScore]:
        return {r.condition: r for r in self.rows}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["condition", "n", "correct", "accuracy"])
        for r in self.rows + [self.overall]:
            w.writerow([r.condition, r.n, r.correct, f"{r.accuracy:.1f}"])
        return buf.getvalue()


def is_mixed_condition(condition: str) -> bool:
    return "<" in condition


def score_subjective(records: list[tuple[str, str]],
                     known_conditions: set[str] | None = None) -> SubjectiveResult:
    """Per-condition accuracy of forced-choice responses.

    A response is correct when it says two speakers for a mixed condition
    and one speaker for an original. Records are (condition, choice) with
    choices CHOICE_ONE or CHOICE_TWO.
    """
    counts: dict[str, list[int]] = {}
    for condition, choice in records:
        if known_conditions is not None and condition not in known_conditions:
            raise UnknownCondition(f"condition {condition!r} not in the stimulus set")
        if choice not in (CHOICE_ONE, CHOICE_TWO):
            raise UnknownCondition(f"choice {choice!r} is not a valid response")
        expected = CHOICE_TWO if is_mixed_condition(condition) else CHOICE_ONE
        entry = counts.setdefault(condition, [0, 0])
        entry[0] += 1
        entry[1] += int(choice == expected)
    ordered = [c for c in TABLE1_ORDER if c in counts]
    ordered += sorted(set(counts) - set(ordered))
    return SubjectiveResult([ConditionScore(c, counts[c][0], counts[c][1])
                             for c in ordered])
