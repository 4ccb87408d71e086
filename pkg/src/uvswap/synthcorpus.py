"""Synthetic gender-marked corpus in TIMIT layout, for demos and tests.

Real corpora are licensed, so desk-scale experiments run on generated
audio: voiced phones are harmonic tones with gender-scaled pitch and
formants (strong gender effect), unvoiced phones are shaped noise whose
band edges shift only mildly with gender (stop bursts more than
fricatives). Sentences are random syllable strings over a 25-phone
subset of the TIMIT inventory; renditions vary durations per speaker
and occasionally mutate a fricative, so the two genders' tiers of one
sentence can disagree in phone count.

Everything is a pure function of the corpus seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .annotations import PhoneSegment, PhoneTier, format_phn
from .dsp import Waveform, write_wav_file

# (F1, F2, F3) in Hz at male scale; near-neighbour pairs (iy/ih, eh/ae,
# uw/uh, s/sh, f/th ...) keep the recognition task honestly hard
VOICED_FORMANTS = {
    "iy": (310, 2300, 3000),
    "ih": (400, 2050, 2800),
    "ey": (480, 2100, 2750),
    "eh": (580, 1850, 2550),
    "ae": (660, 1700, 2450),
    "aa": (750, 1150, 2500),
    "uw": (330, 900, 2250),
    "uh": (440, 1050, 2350),
    "l": (400, 1050, 2600),
    "r": (420, 1350, 1700),
    "w": (340, 750, 2300),
    "m": (280, 1050, 2200),
    "n": (300, 1450, 2500),
    "ng": (320, 1300, 2050),
}
FRIC_BANDS = {"s": (4800, 7400), "sh": (2200, 4600), "f": (1200, 6800),
              "th": (1500, 7200)}
STOP_BURSTS = {"k": (1400, 3400), "t": (3200, 6200), "p": (600, 1800)}
CLOSURES = {"k": "kcl", "t": "tcl", "p": "pcl"}
SILENCE = "h#"

DUR_MS = {
    "silence": (90, 160),
    "vowel": (80, 150),
    "sonorant": (45, 95),
    "closure": (40, 75),
    "stop": (30, 60),
    "fricative": (70, 130),
}

GENDER_VOICE = {
    # f0 Hz, formant scale, fricative/burst band scale
    "M": (108.0, 1.00, 1.00),
    "F": (205.0, 1.20, 1.10),
}

VOWELS = ("iy", "ih", "ey", "eh", "ae", "aa", "uw", "uh")
SONORANTS = ("l", "r", "w", "m", "n", "ng")
FRICATIVES = ("s", "sh", "f", "th")
STOPS = ("k", "t", "p")


@dataclass(frozen=True)
class SynthConfig:
    n_train_sentences: int = 120
    n_test_sentences: int = 24
    train_speakers_per_gender: int = 6
    test_speakers_per_gender: int = 2
    sample_rate: int = 16000
    seed: int = 0


def _dur_kind(phone: str) -> str:
    if phone == SILENCE:
        return "silence"
    if phone in VOWELS:
        return "vowel"
    if phone in SONORANTS:
        return "sonorant"
    if phone in FRICATIVES:
        return "fricative"
    if phone.endswith("cl"):
        return "closure"
    return "stop"


def sentence_phones(rng: np.random.Generator) -> list[str]:
    """One sentence skeleton: h# + 4..6 syllables + h#."""
    phones = [SILENCE]
    for _ in range(int(rng.integers(4, 7))):
        roll = rng.random()
        if roll < 0.45:
            stop = str(rng.choice(STOPS))
            phones += [CLOSURES[stop], stop]
        elif roll < 0.80:
            phones.append(str(rng.choice(FRICATIVES)))
        phones.append(str(rng.choice(VOWELS)))
        if rng.random() < 0.40:
            phones.append(str(rng.choice(SONORANTS)))
        if rng.random() < 0.25:
            phones.append(str(rng.choice(FRICATIVES)))
    phones.append(SILENCE)
    # collapse accidental repeats, which TIMIT tiers never contain
    out = [phones[0]]
    for p in phones[1:]:
        if p != out[-1]:
            out.append(p)
    return out


def _mutate(phones: list[str], rng: np.random.Generator) -> list[str]:
    """Occasionally drop or insert a fricative so renditions can differ."""
    phones = list(phones)
    fric_idx = [i for i, p in enumerate(phones) if p in FRICATIVES]
    if fric_idx and rng.random() < 0.20:
        del phones[int(rng.choice(fric_idx))]
    if rng.random() < 0.20:
        vowel_idx = [i for i, p in enumerate(phones) if p in VOWELS]
        i = int(rng.choice(vowel_idx))
        fric = str(rng.choice(FRICATIVES))
        if phones[i + 1] != fric:
            phones.insert(i + 1, fric)
    out = [phones[0]]
    for p in phones[1:]:
        if p != out[-1]:
            out.append(p)
    return out


def _bandpass_noise(n: int, lo: float, hi: float, rng: np.random.Generator,
                    sample_rate: int) -> np.ndarray:
    noise = rng.standard_normal(n)
    spec = np.fft.rfft(noise)
    freqs = np.fft.rfftfreq(n, d=1.0 / sample_rate)
    spec[(freqs < lo) | (freqs > hi)] = 0.0
    out = np.fft.irfft(spec, n=n)
    peak = np.max(np.abs(out))
    return out / peak if peak > 0 else out


def _voiced(n: int, phone: str, f0: float, form_scale: float,
            rng: np.random.Generator, sample_rate: int) -> np.ndarray:
    formants = np.array(VOICED_FORMANTS[phone]) * form_scale
    t = np.arange(n) / sample_rate
    n_harm = int(7600 // f0)
    x = np.zeros(n)
    for h in range(1, n_harm + 1):
        f = h * f0
        amp = np.exp(-0.5 * ((f - formants) / 430.0) ** 2).sum() + 0.03
        x += amp * np.cos(2.0 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
    x /= np.max(np.abs(x))
    taper = min(32, n // 4)
    if taper > 1:
        ramp = 0.5 * (1 - np.cos(np.pi * np.arange(taper) / (taper - 1)))
        x[:taper] *= ramp
        x[-taper:] *= ramp[::-1]
    return 0.24 * x + 0.035 * rng.standard_normal(n)


def _phone_audio(phone: str, n: int, voice, rng: np.random.Generator,
                 sample_rate: int) -> np.ndarray:
    f0, form_scale, band_scale = voice
    if phone in VOICED_FORMANTS:
        return _voiced(n, phone, f0, form_scale, rng, sample_rate)
    if phone in FRIC_BANDS:
        lo, hi = FRIC_BANDS[phone]
        x = _bandpass_noise(n, lo * band_scale, min(hi * band_scale, 7800),
                            rng, sample_rate)
        return 0.08 * x + 0.018 * rng.standard_normal(n)
    if phone in STOP_BURSTS:
        lo, hi = STOP_BURSTS[phone]
        # stops carry a stronger gender shift than fricatives
        burst_scale = 1.0 + 3.0 * (band_scale - 1.0)
        burst_len = min(n, int(0.016 * sample_rate))
        x = 0.012 * rng.standard_normal(n)
        burst = _bandpass_noise(burst_len, lo * burst_scale,
                                min(hi * burst_scale, 7800), rng, sample_rate)
        x[:burst_len] += 0.16 * burst
        return x
    # closures and silence
    return 0.009 * rng.standard_normal(n)


def speaker_voice(gender: str, speaker_index: int, seed: int) -> tuple:
    """A speaker's persistent voice: gender base times speaker-level shifts.

    Between-speaker spread is wide enough that held-out test speakers are
    genuinely new voices, but narrower than the gender gap itself.
    """
    rng = np.random.default_rng(
        np.random.SeedSequence((seed, 0x70, gender == "F", speaker_index)))
    f0, form_scale, band_scale = GENDER_VOICE[gender]
    return (f0 * rng.uniform(0.90, 1.10),
            form_scale * rng.uniform(0.94, 1.06),
            band_scale * rng.uniform(0.98, 1.02))


def render_utterance(phones: list[str], voice: tuple, rng: np.random.Generator,
                     sample_rate: int = 16000) -> tuple[Waveform, PhoneTier]:
    """Synthesize one rendition of a voice; durations and jitter from rng."""
    f0, form_scale, band_scale = voice
    f0 *= rng.uniform(0.97, 1.03)
    form_scale *= rng.uniform(0.99, 1.01)

    pieces = []
    segments = []
    pos = 0
    for phone in phones:
        lo_ms, hi_ms = DUR_MS[_dur_kind(phone)]
        n = int(rng.uniform(lo_ms, hi_ms) * sample_rate / 1000.0)
        jitter = (f0 * rng.uniform(0.97, 1.03), form_scale * rng.uniform(0.97, 1.03),
                  band_scale * rng.uniform(0.99, 1.01))
        pieces.append(_phone_audio(phone, n, jitter, rng, sample_rate))
        segments.append(PhoneSegment(phone, pos, pos + n))
        pos += n
    samples = np.concatenate(pieces)
    peak = np.max(np.abs(samples))
    if peak > 0.95:
        samples *= 0.95 / peak
    return Waveform(samples, sample_rate), PhoneTier(tuple(segments), sample_rate)


def synth_utterance(seed: int, gender: str = "M",
                    sample_rate: int = 16000) -> tuple[Waveform, PhoneTier]:
    """One self-contained random utterance, handy for tests."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xA5)))
    phones = sentence_phones(rng)
    return render_utterance(phones, speaker_voice(gender, seed, seed), rng,
                            sample_rate)


def build_synthetic_corpus(root, cfg: SynthConfig = SynthConfig()) -> None:
    """Write wav/phn pairs in TIMIT layout under root/{train,test}/dr1/."""
    root = Path(root)
    jobs = []
    for k in range(cfg.n_train_sentences):
        jobs.append(("train", f"si{k + 1:04d}", k, cfg.train_speakers_per_gender, 100))
    for k in range(cfg.n_test_sentences):
        jobs.append(("test", f"sx{k + 1:04d}", k, cfg.test_speakers_per_gender, 900))
    for subset, sentence, k, n_speakers, spk_base in jobs:
        sent_rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, subset == "test", k)))
        skeleton = sentence_phones(sent_rng)
        for gender in ("M", "F"):
            speaker_index = spk_base + k % n_speakers
            speaker = f"{gender.lower()}{speaker_index:03d}"
            voice = speaker_voice(gender, speaker_index, cfg.seed)
            rng = np.random.default_rng(
                np.random.SeedSequence((cfg.seed, subset == "test", k, gender == "F")))
            phones = _mutate(skeleton, rng)
            wave, tier = render_utterance(phones, voice, rng, cfg.sample_rate)
            utt_dir = root / subset / "dr1" / speaker
            utt_dir.mkdir(parents=True, exist_ok=True)
            write_wav_file(utt_dir / f"{sentence}.wav", wave)
            (utt_dir / f"{sentence}.phn").write_text(format_phn(tier), encoding="utf-8")
