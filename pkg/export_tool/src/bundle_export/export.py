"""Convert a pretrained dual-encoder checkpoint into an exchange bundle.

A bundle directory is the engine-side loading contract::

    config.json  image_encoder.pt  text_encoder.pt  vocab.json  merges.txt

Graphs are TorchScript archives mapping a batch of inputs to a batch of
raw (unnormalized) feature vectors; the consumer does L2 normalization.
The text graph has end-token feature selection baked in: it takes the
full padded id matrix and returns one vector per sequence.

``export`` writes the bundle; ``validate`` replays probe inputs through
both the source checkpoint and the exported graphs, enforces agreement,
and can emit fixture files for downstream regression suites.
"""

import dataclasses
import json
import shutil
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import torch

COSINE_MIN = 0.9999
MAX_ABS_ERR = 1e-4
CONFIG_NAME = "config.json"
GRAPH_NAMES = ("image_encoder.pt", "text_encoder.pt")
TOKENIZER_NAMES = ("vocab.json", "merges.txt")
PROBES_NAME = "probes.npz"
FIXTURE_META_NAME = "fixtures.json"

# fallback normalization constants when a checkpoint ships no preprocessor
DEFAULT_MEAN = (0.48145466, 0.4578275, 0.40821073)
DEFAULT_STD = (0.26862954, 0.26130258, 0.27577711)

_PROMPT_TEMPLATES = (
    "a portrait photo of a real person",
    "a morphed face blending two identities",
    "an identity document photo of one subject",
    "a digitally altered facial composite",
    "a genuine passport picture",
    "a synthetic face with ghosting artifacts",
    "a natural photograph of a single face",
    "a face image with blended texture seams",
)


class ExportError(Exception):
    """Checkpoint fetch/parse or bundle write failure."""


class ValidationError(Exception):
    """Exported graphs disagree with the source checkpoint."""


@dataclass(frozen=True)
class ExportSpec:
    checkpoint: str
    out_dir: Path
    precision: str = "float32"
    n_validation: int = 32

    def __post_init__(self):
        if self.precision != "float32":
            raise ValueError(f"precision is fixed to float32, got {self.precision!r}")
        if self.n_validation < 0:
            raise ValueError("validation sample count must be >= 0")
        object.__setattr__(self, "out_dir", Path(self.out_dir))


@dataclass(frozen=True)
class ValidationReport:
    validated: bool
    n_image: int
    n_text: int
    min_image_cosine: Optional[float]
    min_text_cosine: Optional[float]
    max_image_abs_err: Optional[float]
    max_text_abs_err: Optional[float]
    cosine_min: float = COSINE_MIN
    max_abs_err: float = MAX_ABS_ERR

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


class _ImageGraph(torch.nn.Module):
    """Vision tower plus projection, composed from stable submodules."""

    def __init__(self, model):
        super().__init__()
        self.vision_model = model.vision_model
        self.visual_projection = model.visual_projection

    def forward(self, pixel_values):
        out = self.vision_model(pixel_values=pixel_values, return_dict=False)
        return self.visual_projection(out[1])


class _TextGraph(torch.nn.Module):
    """Text tower plus projection; pooling picks the end-token position."""

    def __init__(self, model):
        super().__init__()
        self.text_model = model.text_model
        self.text_projection = model.text_projection

    def forward(self, input_ids):
        out = self.text_model(input_ids=input_ids, return_dict=False)
        return self.text_projection(out[1])


def _load_checkpoint(identifier: str):
    from transformers import CLIPModel

    try:
        model = CLIPModel.from_pretrained(identifier)
    except Exception as exc:
        raise ExportError(f"cannot load checkpoint {identifier!r}: {exc}") from exc
    return model.eval().float()


def _tokenizer_files(identifier: str) -> tuple[Path, Path]:
    from transformers.utils import cached_file

    try:
        vocab = cached_file(identifier, "vocab.json")
        merges = cached_file(identifier, "merges.txt")
    except Exception as exc:
        raise ExportError(f"checkpoint {identifier!r} has no vocab/merges files: {exc}") from exc
    return Path(vocab), Path(merges)


def _normalization(identifier: str) -> tuple[list[float], list[float]]:
    from transformers import CLIPImageProcessor

    try:
        proc = CLIPImageProcessor.from_pretrained(identifier)
        return list(map(float, proc.image_mean)), list(map(float, proc.image_std))
    except Exception:
        return list(DEFAULT_MEAN), list(DEFAULT_STD)


def _build_tokenizer(vocab_path: Path, merges_path: Path):
    from transformers import CLIPTokenizer

    with open(vocab_path, encoding="utf-8") as fh:
        table = json.load(fh)
    pairs = [tuple(line.split(" "))
             for line in merges_path.read_text(encoding="utf-8").splitlines()
             if line and not line.startswith("#")]
    return CLIPTokenizer(vocab=table, merges=pairs)


def fixed_prompts(n: int) -> list[str]:
    """Deterministic probe prompt list of any requested length."""
    out = list(_PROMPT_TEMPLATES[:n])
    i = 0
    while len(out) < n:
        out.append(f"a studio portrait of subject {i:03d}")
        i += 1
    return out


def tokenize_prompts(prompts, tokenizer, context_length: int) -> np.ndarray:
    """Start/end wrapped ids, zero padded to the context length."""
    eot = tokenizer.eos_token_id
    rows = np.zeros((len(prompts), context_length), dtype=np.int64)
    for r, text in enumerate(prompts):
        ids = tokenizer(text).input_ids
        if len(ids) > context_length:
            ids = ids[: context_length - 1] + [eot]
        rows[r, : len(ids)] = ids
    return rows


def _probe_images(n: int, size: int, mean, std, seed: int) -> np.ndarray:
    """Random uint8 images pushed through the bundle's normalization."""
    rng = np.random.default_rng(seed)
    raw = rng.integers(0, 256, (n, size, size, 3), dtype=np.uint8)
    scaled = raw.astype(np.float32) / 255.0
    mean = np.asarray(mean, dtype=np.float32)
    std = np.asarray(std, dtype=np.float32)
    normed = (scaled - mean) / std
    return np.ascontiguousarray(normed.transpose(0, 3, 1, 2))


def _trace(module: torch.nn.Module, example: torch.Tensor) -> torch.jit.ScriptModule:
    with torch.inference_mode():
        return torch.jit.trace(module, example)


def _check_graph(graph, reference_fn, batches) -> None:
    """Trace-generalization guard: graph must match eager on fresh batches."""
    with torch.inference_mode():
        for batch in batches:
            got = graph(batch)
            want = reference_fn(batch)
            err = (got - want).abs().max().item()
            if err > 1e-5:
                raise ExportError(f"traced graph diverges from source (max err {err:.3e})")


def export(spec: ExportSpec) -> Path:
    """Write the exchange bundle for ``spec.checkpoint``; overwrite-idempotent."""
    model = _load_checkpoint(spec.checkpoint)
    vocab_src, merges_src = _tokenizer_files(spec.checkpoint)
    mean, std = _normalization(spec.checkpoint)

    image_size = int(model.config.vision_config.image_size)
    context_length = int(model.config.text_config.max_position_embeddings)
    config = {
        "embed_dim": int(model.config.projection_dim),
        "image_size": image_size,
        "context_length": context_length,
        "logit_scale": float(model.logit_scale.detach().exp().item()),
        "channel_mean": mean,
        "channel_std": std,
    }

    out = spec.out_dir
    try:
        out.mkdir(parents=True, exist_ok=True)
        with open(out / CONFIG_NAME, "w", encoding="utf-8") as fh:
            json.dump(config, fh, sort_keys=True, indent=2)
            fh.write("\n")
        shutil.copyfile(vocab_src, out / "vocab.json")
        shutil.copyfile(merges_src, out / "merges.txt")
    except OSError as exc:
        raise ExportError(f"cannot write bundle to {out}: {exc}") from exc

    tokenizer = _build_tokenizer(out / "vocab.json", out / "merges.txt")
    example_px = torch.zeros(2, 3, image_size, image_size)
    example_ids = torch.from_numpy(
        tokenize_prompts(fixed_prompts(2), tokenizer, context_length))

    image_graph = _trace(_ImageGraph(model), example_px)
    text_graph = _trace(_TextGraph(model), example_ids)

    def eager_image(px):
        return model.get_image_features(pixel_values=px).pooler_output

    def eager_text(ids):
        return model.get_text_features(input_ids=ids).pooler_output

    torch.manual_seed(0)
    _check_graph(image_graph, eager_image,
                 [torch.randn(1, 3, image_size, image_size),
                  torch.randn(3, 3, image_size, image_size)])
    probe_ids = torch.from_numpy(
        tokenize_prompts(fixed_prompts(3), tokenizer, context_length))
    _check_graph(text_graph, eager_text, [probe_ids[:1], probe_ids])

    try:
        torch.jit.save(image_graph, str(out / "image_encoder.pt"))
        torch.jit.save(text_graph, str(out / "text_encoder.pt"))
    except OSError as exc:
        raise ExportError(f"cannot write bundle to {out}: {exc}") from exc
    return out


def _unit_rows(mat: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(mat.astype(np.float64), axis=1, keepdims=True)
    return (mat.astype(np.float64) / norms).astype(np.float32)


def _pair_stats(source: np.ndarray, exported: np.ndarray) -> tuple[float, float]:
    a = source.astype(np.float64)
    b = exported.astype(np.float64)
    cos = np.sum(a * b, axis=1) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
    return float(cos.min()), float(np.abs(a - b).max())


def validate(bundle_dir, checkpoint: str, n: int = 32, seed: int = 0,
             fixtures_dir=None) -> ValidationReport:
    """Replay ``n`` random images and ``n`` fixed prompts through both sides.

    Enforces pairwise cosine >= 0.9999 and max element error <= 1e-4.
    With ``n == 0`` the result is a vacuous pass flagged not validated.
    Fixture files (when requested) hold the probe tensors plus unit-norm
    source embeddings, regenerated deterministically for a fixed seed.
    """
    if n == 0:
        return ValidationReport(validated=False, n_image=0, n_text=0,
                                min_image_cosine=None, min_text_cosine=None,
                                max_image_abs_err=None, max_text_abs_err=None)

    root = Path(bundle_dir)
    with open(root / CONFIG_NAME, encoding="utf-8") as fh:
        config = json.load(fh)
    try:
        image_graph = torch.jit.load(str(root / "image_encoder.pt"))
        text_graph = torch.jit.load(str(root / "text_encoder.pt"))
    except Exception as exc:
        raise ExportError(f"graph load failure in {root}: {exc}") from exc

    model = _load_checkpoint(checkpoint)
    tokenizer = _build_tokenizer(root / "vocab.json", root / "merges.txt")

    tensors = _probe_images(n, config["image_size"], config["channel_mean"],
                            config["channel_std"], seed)
    prompts = fixed_prompts(n)
    ids = tokenize_prompts(prompts, tokenizer, config["context_length"])

    px = torch.from_numpy(tensors)
    id_mat = torch.from_numpy(ids)
    with torch.inference_mode():
        src_img = model.get_image_features(pixel_values=px).pooler_output.numpy()
        src_txt = model.get_text_features(input_ids=id_mat).pooler_output.numpy()
        exp_img = image_graph(px).numpy()
        exp_txt = text_graph(id_mat).numpy()
        # exercise batch-of-one alongside the full batch
        one_img = image_graph(px[:1]).numpy()
        one_txt = text_graph(id_mat[:1]).numpy()

    img_cos, img_err = _pair_stats(src_img, exp_img)
    txt_cos, txt_err = _pair_stats(src_txt, exp_txt)
    one_cos_i, one_err_i = _pair_stats(src_img[:1], one_img)
    one_cos_t, one_err_t = _pair_stats(src_txt[:1], one_txt)
    img_cos, img_err = min(img_cos, one_cos_i), max(img_err, one_err_i)
    txt_cos, txt_err = min(txt_cos, one_cos_t), max(txt_err, one_err_t)

    failures = []
    if img_cos < COSINE_MIN or img_err > MAX_ABS_ERR:
        failures.append(f"image: min cosine {img_cos:.6f}, max err {img_err:.3e}")
    if txt_cos < COSINE_MIN or txt_err > MAX_ABS_ERR:
        failures.append(f"text: min cosine {txt_cos:.6f}, max err {txt_err:.3e}")
    if failures:
        raise ValidationError("; ".join(failures))

    report = ValidationReport(validated=True, n_image=n, n_text=n,
                              min_image_cosine=img_cos, min_text_cosine=txt_cos,
                              max_image_abs_err=img_err, max_text_abs_err=txt_err)

    if fixtures_dir is not None:
        fixtures_dir = Path(fixtures_dir)
        fixtures_dir.mkdir(parents=True, exist_ok=True)
        np.savez(fixtures_dir / PROBES_NAME,
                 image_tensors=tensors,
                 text_ids=ids,
                 image_embeddings=_unit_rows(src_img),
                 text_embeddings=_unit_rows(src_txt))
        meta = {
            "seed": seed,
            "prompts": prompts,
            "config": config,
            "embedding_convention": "unit-norm source-model features",
            "tolerance": MAX_ABS_ERR,
            "report": report.to_dict(),
        }
        with open(fixtures_dir / FIXTURE_META_NAME, "w", encoding="utf-8") as fh:
            json.dump(meta, fh, sort_keys=True, indent=2)
            fh.write("\n")
    return report
