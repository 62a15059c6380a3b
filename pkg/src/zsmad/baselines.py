"""Image-only zero-shot baselines: prototype scoring over a frozen backbone.

A baseline embeds images with a pretrained feature extractor, builds one
unit-norm prototype as the normalized mean of normalized reference bona
fide embeddings, and scores an image by (1 - cos(embedding, prototype))/2
so that, like everywhere else, higher means more attack-like.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import torch

from .bundle import Embedding, load_graph, normalize
from .errors import ConstraintError, DegenerateError, EmptyReferenceError, InferenceError
from .imaging import ImageTensor, Interpolation, PreprocessSpec, ResizeMode, decode, preprocess
from .manifest import Label, Manifest


@dataclass
class PrototypeScorer:
    backbone_path: str
    backbone: torch.jit.ScriptModule = field(repr=False)
    bonafide_prototype: Embedding
    ref_count: int
    spec: PreprocessSpec
    ref_ids: tuple[str, ...] = ()
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def embed(self, tensor: ImageTensor) -> Embedding:
        batch = torch.from_numpy(np.asarray(tensor, dtype=np.float32)[None])
        with self._lock:
            with torch.inference_mode():
                try:
                    out = self.backbone(batch)
                except RuntimeError as e:
                    raise InferenceError(str(e))
        feats = out.detach().cpu().numpy().astype(np.float32)[0]
        return normalize(feats)

    def score_path(self, image_path) -> float:
        return baseline_score(self, preprocess(decode(image_path), self.spec))


def prototype_from_embeddings(embeddings: Sequence[np.ndarray]) -> Embedding:
    """Normalized mean of normalized embeddings."""
    if len(embeddings) == 0:
        raise EmptyReferenceError("no reference embeddings")
    normed = np.stack([normalize(e) for e in embeddings]).astype(np.float64)
    mean = normed.mean(axis=0)
    norm = float(np.linalg.norm(mean))
    if norm < 1e-12:
        raise DegenerateError("reference embeddings cancel out; prototype undefined")
    return normalize(mean)


def fit_prototype(backbone_path, reference_manifest: Manifest,
                  spec: PreprocessSpec) -> PrototypeScorer:
    """Embed every reference bona fide image and build the prototype."""
    non_bonafide = [s.id for s in reference_manifest if s.label is not Label.BONA_FIDE]
    if non_bonafide:
        raise ConstraintError(
            f"reference manifest must be bona fide only; found morphs: {non_bonafide[:5]}"
        )
    if len(reference_manifest) == 0:
        raise EmptyReferenceError("reference manifest is empty")
    scorer = PrototypeScorer(
        backbone_path=str(backbone_path),
        backbone=load_graph(backbone_path),
        bonafide_prototype=np.zeros(1, dtype=np.float32),
        ref_count=0,
        spec=spec,
    )
    embeddings = []
    for sample in reference_manifest:
        embeddings.append(scorer.embed(preprocess(decode(sample.path), spec)))
    scorer.bonafide_prototype = prototype_from_embeddings(embeddings)
    scorer.ref_count = len(embeddings)
    scorer.ref_ids = tuple(s.id for s in reference_manifest)
    return scorer


def baseline_score(scorer: PrototypeScorer, tensor: ImageTensor) -> float:
    """Attack-likelihood score in [0, 1]: (1 - cosine to prototype) / 2."""
    emb = scorer.embed(tensor).astype(np.float64)
    cos = float(np.clip(np.dot(emb, scorer.bonafide_prototype.astype(np.float64)), -1.0, 1.0))
    return (1.0 - cos) / 2.0


def save_scorer(scorer: PrototypeScorer, path) -> None:
    state = {
        "backbone_path": scorer.backbone_path,
        "bonafide_prototype": [float(x) for x in scorer.bonafide_prototype],
        "ref_count": scorer.ref_count,
        "ref_ids": list(scorer.ref_ids),
        "spec": {
            "target_size": scorer.spec.target_size,
            "resize_mode": scorer.spec.resize_mode.value,
            "channel_mean": list(scorer.spec.channel_mean),
            "channel_std": list(scorer.spec.channel_std),
            "interpolation": scorer.spec.interpolation.value,
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(state, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_scorer(path, backbone_path: Optional[str] = None) -> PrototypeScorer:
    with open(path, encoding="utf-8") as fh:
        state = json.load(fh)
    backbone_file = backbone_path or state["backbone_path"]
    raw_spec = state["spec"]
    spec = PreprocessSpec(
        target_size=int(raw_spec["target_size"]),
        resize_mode=ResizeMode(raw_spec["resize_mode"]),
        channel_mean=tuple(raw_spec["channel_mean"]),
        channel_std=tuple(raw_spec["channel_std"]),
        interpolation=Interpolation(raw_spec["interpolation"]),
    )
    return PrototypeScorer(
        backbone_path=str(backbone_file),
        backbone=load_graph(backbone_file),
        bonafide_prototype=normalize(np.asarray(state["bonafide_prototype"], dtype=np.float32)),
        ref_count=int(state["ref_count"]),
        spec=spec,
        ref_ids=tuple(state.get("ref_ids", ())),
    )
