"""Desk-scale monophone phoneme recognizer.

Model bundles (acoustic model + phone LM) persist as one versioned JSON
document so a single file is enough to decode.
"""

import json

from .decode import Decoder, EmptyFeatureMatrix, viterbi_decode
from .hmm import (AcousticModel, Corpus, GmmState, PhoneHmm, flat_start,
                  force_align, mixup, model_from_dict, model_to_dict,
                  tier_frame_segments, train_em)
from .lm import ADD_K, BOS, EOS, WITTEN_BELL, EmptyCorpus, PhoneLM, train_lm
from .scoring import EmptyReference, PerBreakdown, edit_distance, phone_error_rate

BUNDLE_FORMAT = "uvswap-model"
BUNDLE_VERSION = 1


def save_model(path, model: AcousticModel, lm: PhoneLM) -> None:
    doc = {
        "format": BUNDLE_FORMAT,
        "version": BUNDLE_VERSION,
        "acoustic": model_to_dict(model),
        "lm": lm.to_dict(),
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f)
        f.write("\n")


def load_model(path) -> tuple[AcousticModel, PhoneLM]:
    with open(path, encoding="utf-8") as f:
        doc = json.load(f)
    if doc.get("format") != BUNDLE_FORMAT:
        raise ValueError(f"{path}: not a {BUNDLE_FORMAT} file")
    if doc.get("version") != BUNDLE_VERSION:
        raise ValueError(f"{path}: unsupported version {doc.get('version')}")
    return model_from_dict(doc["acoustic"]), PhoneLM.from_dict(doc["lm"])
