"""Zero-shot scoring: image embedding + prompt pair -> morph probability.

The per-image score is the softmax over temperature-scaled cosine
similarities between the image embedding and the two prompt embeddings.
``p_morph`` is the engine-wide score convention: higher means more
attack-like, everywhere downstream.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .bundle import Embedding, ModelBundle, encode_image, encode_text
from .errors import ConstraintError, EngineError, SchemaError
from .imaging import decode, preprocess
from .manifest import Label, Manifest
from .tokenizer import tokenize


class PromptCategory(Enum):
    SHORT = "short"
    LONG = "long"


@dataclass(frozen=True)
class PromptPair:
    """Matched natural-language descriptions of the two classes."""

    id: str
    bonafide_text: str
    morph_text: str
    category: PromptCategory

    def __post_init__(self):
        if not self.bonafide_text or not self.morph_text:
            raise ConstraintError(f"prompt pair {self.id!r}: texts must be nonempty")
        if self.bonafide_text == self.morph_text:
            raise ConstraintError(f"prompt pair {self.id!r}: texts must be distinct")


@dataclass(frozen=True)
class PromptBank:
    pairs: tuple[PromptPair, ...]

    def __post_init__(self):
        seen = set()
        for p in self.pairs:
            if p.id in seen:
                raise ConstraintError(f"duplicate prompt pair id {p.id!r}")
            seen.add(p.id)

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def get(self, pair_id: str) -> PromptPair:
        for p in self.pairs:
            if p.id == pair_id:
                return p
        raise KeyError(pair_id)


@dataclass(frozen=True)
class ScoreRecord:
    sample_id: str
    prompt_id: str
    p_morph: float
    p_bonafide: float
    cos_bonafide: float
    cos_morph: float
    predicted_text: str


# Placeholder defaults; the published experiments' exact prompt wordings are
# not transcribed anywhere machine-readable, so edit or replace via a bank
# file when reproducing them.
DEFAULT_PROMPT_PAIRS = (
    PromptPair("p01", "a photo of a real face",
               "a photo of a morphed face", PromptCategory.SHORT),
    PromptPair("p02", "a genuine face image",
               "a morphed face image", PromptCategory.SHORT),
    PromptPair("p03", "a real person's face",
               "a digitally altered face", PromptCategory.SHORT),
    PromptPair("p04", "an authentic face photo",
               "a manipulated face photo", PromptCategory.SHORT),
    PromptPair("p05", "a natural human face",
               "a blended face of two people", PromptCategory.SHORT),
    PromptPair("p06",
               "a photograph of a genuine human face captured directly from one person",
               "a photograph of a face created by blending the features of two different people",
               PromptCategory.LONG),
    PromptPair("p07",
               "a face image that shows one real individual with natural skin texture",
               "a face image that combines facial characteristics from multiple individuals",
               PromptCategory.LONG),
    PromptPair("p08",
               "an unedited portrait photograph of a single authentic person",
               "a synthetic portrait generated by morphing two source faces together",
               PromptCategory.LONG),
    PromptPair("p09",
               "a clean identity photograph of one genuine subject",
               "an identity photograph manipulated to match more than one subject",
               PromptCategory.LONG),
    PromptPair("p10",
               "a bona fide passport style photo of a real applicant",
               "a morphed passport style photo blending two applicants into one",
               PromptCategory.LONG),
)


def default_prompt_bank() -> PromptBank:
    return PromptBank(pairs=DEFAULT_PROMPT_PAIRS)


def load_prompt_bank(path) -> PromptBank:
    """Read a bank file: JSON array of {id, bonafide_text, morph_text, category}."""
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, list):
        raise SchemaError(f"{path}: expected a JSON array of prompt pairs")
    pairs = []
    for i, obj in enumerate(data):
        missing = [k for k in ("id", "bonafide_text", "morph_text", "category") if k not in obj]
        if missing:
            raise SchemaError(f"{path}: entry {i} missing keys: {', '.join(missing)}")
        try:
            category = PromptCategory(str(obj["category"]).lower())
        except ValueError:
            raise SchemaError(f"{path}: entry {i}: bad category {obj['category']!r}")
        pairs.append(PromptPair(str(obj["id"]), str(obj["bonafide_text"]),
                                str(obj["morph_text"]), category))
    return PromptBank(pairs=tuple(pairs))


def save_prompt_bank(bank: PromptBank, path) -> None:
    rows = [
        {"id": p.id, "bonafide_text": p.bonafide_text,
         "morph_text": p.morph_text, "category": p.category.value}
        for p in bank
    ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(rows, fh, indent=2, sort_keys=True)
        fh.write("\n")


def softmax_pair(logit_a: float, logit_b: float) -> tuple[float, float]:
    """Two-way softmax computed with max-subtraction; stable for any scale."""
    m = max(logit_a, logit_b)
    ea = math.exp(logit_a - m)
    eb = math.exp(logit_b - m)
    z = ea + eb
    return ea / z, eb / z


def score_embeddings(
    img_emb: Embedding,
    bonafide_emb: Embedding,
    morph_emb: Embedding,
    logit_scale: float,
    pair: PromptPair,
    sample_id: str = "",
) -> ScoreRecord:
    """Core scoring math on precomputed unit-norm embeddings."""
    img64 = img_emb.astype(np.float64)
    cos_b = float(np.clip(np.dot(img64, bonafide_emb.astype(np.float64)), -1.0, 1.0))
    cos_m = float(np.clip(np.dot(img64, morph_emb.astype(np.float64)), -1.0, 1.0))
    p_b, p_m = softmax_pair(logit_scale * cos_b, logit_scale * cos_m)
    # tie -> morph text, consistent with the classify() tie rule
    predicted = pair.morph_text if cos_m >= cos_b else pair.bonafide_text
    return ScoreRecord(
        sample_id=sample_id,
        prompt_id=pair.id,
        p_morph=p_m,
        p_bonafide=p_b,
        cos_bonafide=cos_b,
        cos_morph=cos_m,
        predicted_text=predicted,
    )


def pair_embeddings(bundle: ModelBundle, pair: PromptPair) -> tuple[Embedding, Embedding]:
    emb_b = encode_text(bundle, tokenize(pair.bonafide_text, bundle.vocab))
    emb_m = encode_text(bundle, tokenize(pair.morph_text, bundle.vocab))
    return emb_b, emb_m


def score(img_emb: Embedding, pair: PromptPair, bundle: ModelBundle,
          sample_id: str = "") -> ScoreRecord:
    """Score one image embedding against one prompt pair."""
    emb_b, emb_m = pair_embeddings(bundle, pair)
    return score_embeddings(img_emb, emb_b, emb_m, bundle.logit_scale, pair, sample_id)


def classify(p_morph: float, threshold: float) -> Label:
    """Operating-point decision: morph iff p_morph >= threshold."""
    if not (0.0 <= p_morph <= 1.0 and 0.0 <= threshold <= 1.0):
        raise ValueError("p_morph and threshold must lie in [0, 1]")
    return Label.MORPH if p_morph >= threshold else Label.BONA_FIDE


@dataclass(frozen=True)
class BankRun:
    """run_bank output: records ordered by (sample_id, prompt_id) plus skips."""

    records: tuple[ScoreRecord, ...]
    skipped: tuple[str, ...]


def run_bank(
    manifest: Manifest,
    bank: PromptBank,
    bundle: ModelBundle,
    parallel: Optional[int] = None,
) -> BankRun:
    """Score every sample against every prompt pair.

    Text embeddings are computed once per pair, image embeddings once per
    sample. Unreadable samples are skipped and reported, not fatal.
    ``parallel`` threads are used for decode+preprocess only; encoder calls
    run in manifest order so output is identical at any degree.
    """
    spec = bundle.preprocess_spec()
    text_embs = {p.id: pair_embeddings(bundle, p) for p in bank}

    def load_tensor(sample):
        try:
            return preprocess(decode(sample.path), spec)
        except EngineError:
            return None

    samples = list(manifest)
    if parallel is not None and parallel > 1 and len(samples) > 1:
        with ThreadPoolExecutor(max_workers=parallel) as pool:
            tensors = list(pool.map(load_tensor, samples))
    else:
        tensors = [load_tensor(s) for s in samples]

    records: list[ScoreRecord] = []
    skipped: list[str] = []
    scale = bundle.logit_scale
    for sample, tensor in zip(samples, tensors):
        if tensor is None:
            skipped.append(sample.id)
            continue
        img_emb = encode_image(bundle, tensor)
        for pair in bank:
            emb_b, emb_m = text_embs[pair.id]
            records.append(score_embeddings(img_emb, emb_b, emb_m, scale,
                                            pair, sample.id))
    records.sort(key=lambda r: (r.sample_id, r.prompt_id))
    return BankRun(records=tuple(records), skipped=tuple(skipped))
