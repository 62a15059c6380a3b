"""Model exchange bundles: loading, toy generation, and embedding.

A bundle directory holds one serialized computation graph per encoder
(TorchScript archives, executed by the embedded libtorch runtime), the
tokenizer files, and ``config.json``::

    config.json  image_encoder.pt  text_encoder.pt  vocab.json  merges.txt

Graphs map a batch of inputs to a batch of raw feature vectors; L2
normalization is done here in the engine so the scoring math stays
auditable. The text graph has end-token feature selection baked in and
returns one vector per sequence.
"""

from __future__ import annotations

import hashlib
import json
import threading
import zipfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .errors import BundleError, InferenceError, IoError
from .imaging import ImageTensor, Interpolation, PreprocessSpec, ResizeMode
from .tokenizer import TokenSequence, Vocabulary, build_toy_vocab, load_vocab

Embedding = np.ndarray  # (embed_dim,) float32, unit norm

CONFIG_KEYS = ("embed_dim", "image_size", "context_length", "logit_scale",
               "channel_mean", "channel_std")

GRAPH_FILES = ("image_encoder.pt", "text_encoder.pt")
TOKENIZER_FILES = ("vocab.json", "merges.txt")


@dataclass
class ModelBundle:
    root: Path
    config: dict
    image_session: torch.jit.ScriptModule = field(repr=False)
    text_session: torch.jit.ScriptModule = field(repr=False)
    vocab: Vocabulary = field(repr=False)
    # sessions are not assumed thread-safe; calls are serialized
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def embed_dim(self) -> int:
        return int(self.config["embed_dim"])

    @property
    def image_size(self) -> int:
        return int(self.config["image_size"])

    @property
    def logit_scale(self) -> float:
        return float(self.config["logit_scale"])

    def preprocess_spec(self) -> PreprocessSpec:
        return PreprocessSpec(
            target_size=self.image_size,
            resize_mode=ResizeMode.SHORTER_SIDE_THEN_CENTER_CROP,
            channel_mean=tuple(self.config["channel_mean"]),
            channel_std=tuple(self.config["channel_std"]),
            interpolation=Interpolation.BICUBIC,
        )


def normalize(vec: np.ndarray) -> Embedding:
    """L2-normalize to unit length (float32). Idempotent."""
    v = np.asarray(vec, dtype=np.float32)
    norm = float(np.sqrt(np.sum(v.astype(np.float64) ** 2)))
    if norm == 0.0 or not np.isfinite(norm):
        raise InferenceError("cannot normalize zero or non-finite vector")
    return (v / np.float32(norm)).astype(np.float32)


def load_graph(path) -> torch.jit.ScriptModule:
    """Load one serialized graph and freeze it for inference."""
    try:
        module = torch.jit.load(str(path), map_location="cpu")
    except (RuntimeError, ValueError, OSError) as e:
        raise BundleError(f"{path}: cannot load graph: {e}")
    module.eval()
    return module


def load_bundle(bundle_dir) -> ModelBundle:
    """Load a bundle directory and validate config against the graphs."""
    root = Path(bundle_dir)
    config_path = root / "config.json"
    if not config_path.is_file():
        raise BundleError(f"{root}: missing config.json")
    for name in GRAPH_FILES + TOKENIZER_FILES:
        if not (root / name).is_file():
            raise BundleError(f"{root}: missing {name}")
    with open(config_path, encoding="utf-8") as fh:
        try:
            config = json.load(fh)
        except json.JSONDecodeError as e:
            raise BundleError(f"{config_path}: invalid JSON: {e}")
    missing = [k for k in CONFIG_KEYS if k not in config]
    if missing:
        raise BundleError(f"{config_path}: missing keys: {', '.join(missing)}")
    if not (np.isfinite(config["logit_scale"]) and config["logit_scale"] > 0):
        raise BundleError(f"{config_path}: logit_scale must be positive and finite")

    image_session = load_graph(root / "image_encoder.pt")
    text_session = load_graph(root / "text_encoder.pt")
    vocab = load_vocab(root / "vocab.json", root / "merges.txt",
                       context_length=int(config["context_length"]))

    bundle = ModelBundle(root=root, config=config, image_session=image_session,
                         text_session=text_session, vocab=vocab)
    _probe_shapes(bundle)
    return bundle


def _probe_shapes(bundle: ModelBundle) -> None:
    size, dim = bundle.image_size, bundle.embed_dim
    probe_img = torch.zeros(1, 3, size, size, dtype=torch.float32)
    probe_ids = torch.zeros(1, int(bundle.config["context_length"]), dtype=torch.int64)
    probe_ids[0, 0] = bundle.vocab.sot_id
    probe_ids[0, 1] = bundle.vocab.eot_id
    with torch.inference_mode():
        try:
            img_out = bundle.image_session(probe_img)
            txt_out = bundle.text_session(probe_ids)
        except RuntimeError as e:
            raise BundleError(f"{bundle.root}: graph probe failed: {e}")
    for name, out in (("image", img_out), ("text", txt_out)):
        if tuple(out.shape) != (1, dim):
            raise BundleError(
                f"{bundle.root}: {name} graph output {tuple(out.shape)} "
                f"does not match embed_dim {dim}"
            )


def _run_session(bundle: ModelBundle, session, batch: torch.Tensor) -> np.ndarray:
    with bundle._lock:
        with torch.inference_mode():
            try:
                out = session(batch)
            except RuntimeError as e:
                raise InferenceError(str(e))
    arr = out.detach().cpu().numpy().astype(np.float32)
    if not np.all(np.isfinite(arr)):
        raise InferenceError("encoder produced non-finite values")
    return arr


def encode_images(bundle: ModelBundle, tensors: Sequence[ImageTensor]) -> list[Embedding]:
    """Encode a batch of preprocessed tensors; one unit-norm embedding each."""
    size = bundle.image_size
    for t in tensors:
        if t.shape != (3, size, size):
            raise InferenceError(f"tensor shape {t.shape} does not match image_size {size}")
    batch = torch.from_numpy(np.stack(tensors).astype(np.float32))
    raw = _run_session(bundle, bundle.image_session, batch)
    return [normalize(row) for row in raw]


def encode_image(bundle: ModelBundle, tensor: ImageTensor) -> Embedding:
    return encode_images(bundle, [tensor])[0]


def encode_texts(bundle: ModelBundle, sequences: Sequence[TokenSequence]) -> list[Embedding]:
    batch = torch.from_numpy(np.stack([s.ids for s in sequences]))
    raw = _run_session(bundle, bundle.text_session, batch)
    return [normalize(row) for row in raw]


def encode_text(bundle: ModelBundle, tokens: TokenSequence) -> Embedding:
    return encode_texts(bundle, [tokens])[0]


# -- toy bundle ------------------------------------------------------------

TOY_IMAGE_SIZE = 32
TOY_CONTEXT_LENGTH = 77
TOY_LOGIT_SCALE = 100.0
TOY_MEAN = (0.5, 0.5, 0.5)
TOY_STD = (0.5, 0.5, 0.5)


class _ToyImageEncoder(nn.Module):
    def __init__(self, in_dim: int, embed_dim: int):
        super().__init__()
        self.weight = nn.Parameter(torch.zeros(embed_dim, in_dim))
        self.bias = nn.Parameter(torch.zeros(embed_dim))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return F.linear(x.flatten(1), self.weight, self.bias)


class _ToyTextEncoder(nn.Module):
    def __init__(self, vocab_size: int, embed_dim: int):
        super().__init__()
        self.table = nn.Parameter(torch.zeros(vocab_size, embed_dim))
        self.weight = nn.Parameter(torch.zeros(embed_dim, embed_dim))
        self.bias = nn.Parameter(torch.zeros(embed_dim))

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        # end-token selection baked in: the end token carries the largest id
        eot_pos = ids.argmax(dim=-1)
        feats = F.embedding(ids, self.table)
        # position-scaled causal sum so the end-token feature sees the whole
        # prefix (a stand-in for attention); padding after it never enters
        pos = torch.arange(ids.shape[1], device=ids.device, dtype=feats.dtype)
        scaled = feats * (1.0 + 0.01 * pos).unsqueeze(0).unsqueeze(-1)
        summed = scaled.cumsum(dim=1)
        picked = summed[torch.arange(ids.shape[0], device=ids.device), eot_pos]
        return F.linear(picked, self.weight, self.bias)


def repack_deterministic(path) -> None:
    """Rewrite a TorchScript archive with stable bytes.

    torch.jit.save embeds a per-save random serialization id and archives
    entries with environment-dependent zip metadata; rewriting with fixed
    timestamps and a content-derived id makes equal graphs equal files.
    """
    path = Path(path)
    with zipfile.ZipFile(path) as src:
        infos = src.infolist()
        content_hash = hashlib.sha256()
        for info in infos:
            if not info.filename.endswith(".data/serialization_id"):
                content_hash.update(src.read(info.filename))
        entries = []
        for info in infos:
            data = src.read(info.filename)
            if info.filename.endswith(".data/serialization_id"):
                data = content_hash.hexdigest()[:40].encode()
            entries.append((info.filename, data))
    with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as out:
        for name, data in entries:
            zi = zipfile.ZipInfo(name, date_time=(1980, 1, 1, 0, 0, 0))
            zi.compress_type = zipfile.ZIP_STORED
            out.writestr(zi, data)


def _save_graph(module: nn.Module, path: Path) -> None:
    module.eval()
    try:
        torch.jit.save(torch.jit.script(module), str(path))
        repack_deterministic(path)
    except OSError as e:
        raise IoError(f"{path}: {e}")


def make_toy_bundle(seed: int, embed_dim: int, out_dir) -> Path:
    """Write a tiny deterministic bundle; byte-identical for a fixed seed."""
    if embed_dim < 2:
        raise ValueError("embed_dim must be at least 2")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    token_to_id, merges = build_toy_vocab()
    vocab_size = len(token_to_id)
    rng = np.random.default_rng(seed)

    img = _ToyImageEncoder(3 * TOY_IMAGE_SIZE * TOY_IMAGE_SIZE, embed_dim)
    txt = _ToyTextEncoder(vocab_size, embed_dim)
    with torch.no_grad():
        scale = 1.0 / np.sqrt(3 * TOY_IMAGE_SIZE * TOY_IMAGE_SIZE)
        img.weight.copy_(torch.from_numpy(
            (rng.standard_normal((embed_dim, 3 * TOY_IMAGE_SIZE * TOY_IMAGE_SIZE)) * scale).astype(np.float32)))
        img.bias.copy_(torch.from_numpy(
            (rng.standard_normal(embed_dim) * 0.1).astype(np.float32)))
        txt.table.copy_(torch.from_numpy(
            (rng.standard_normal((vocab_size, embed_dim)) * 0.5).astype(np.float32)))
        txt.weight.copy_(torch.from_numpy(
            (rng.standard_normal((embed_dim, embed_dim)) / np.sqrt(embed_dim)).astype(np.float32)))
        txt.bias.copy_(torch.from_numpy(
            (rng.standard_normal(embed_dim) * 0.1).astype(np.float32)))

    _save_graph(img, out / "image_encoder.pt")
    _save_graph(txt, out / "text_encoder.pt")

    try:
        with open(out / "vocab.json", "w", encoding="utf-8") as fh:
            json.dump(token_to_id, fh, ensure_ascii=False, sort_keys=False,
                      separators=(",", ":"))
            fh.write("\n")
        with open(out / "merges.txt", "w", encoding="utf-8") as fh:
            fh.write("#version: 0.2\n")
            for line in merges:
                fh.write(line + "\n")
        config = {
            "embed_dim": embed_dim,
            "image_size": TOY_IMAGE_SIZE,
            "context_length": TOY_CONTEXT_LENGTH,
            "logit_scale": TOY_LOGIT_SCALE,
            "channel_mean": list(TOY_MEAN),
            "channel_std": list(TOY_STD),
        }
        with open(out / "config.json", "w", encoding="utf-8") as fh:
            json.dump(config, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as e:
        raise IoError(f"{out}: {e}")
    return out


def make_toy_backbone(seed: int, feature_dim: int, out_path,
                      image_size: int = TOY_IMAGE_SIZE) -> Path:
    """Write a standalone toy feature-extractor graph (for baselines)."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    module = _ToyImageEncoder(3 * image_size * image_size, feature_dim)
    with torch.no_grad():
        scale = 1.0 / np.sqrt(3 * image_size * image_size)
        module.weight.copy_(torch.from_numpy(
            (rng.standard_normal((feature_dim, 3 * image_size * image_size)) * scale).astype(np.float32)))
        module.bias.copy_(torch.from_numpy(
            (rng.standard_normal(feature_dim) * 0.1).astype(np.float32)))
    _save_graph(module, out_path)
    return out_path
