"""Session fixtures: a tiny local dual-encoder checkpoint and its export.

The checkpoint is architecture-faithful (vision+text towers, projections,
byte-level BPE tokenizer files) but randomly initialized, so the suite
runs without fetching published weights. Conversion fidelity is what is
under test; it does not depend on what the weights encode.
"""

import json
from pathlib import Path

import pytest
import torch

from bundle_export.export import ExportSpec, export

SOT_TOKEN = "<|startoftext|>"
EOT_TOKEN = "<|endoftext|>"


def byte_unicode_map() -> dict[int, str]:
    """Canonical byte-to-printable-unicode table used by byte-level BPE."""
    printable = list(range(33, 127)) + list(range(161, 173)) + list(range(174, 256))
    table = {}
    bump = 0
    for b in range(256):
        if b in printable:
            table[b] = chr(b)
        else:
            table[b] = chr(256 + bump)
            bump += 1
    return table


def build_vocab_files(root: Path) -> tuple[Path, Path, int]:
    """Write byte-level vocab.json / merges.txt; returns paths and size."""
    chars = [byte_unicode_map()[b] for b in range(256)]
    tokens = chars + [c + "</w>" for c in chars]
    merges = ["t h", "th e</w>", "a n</w>", "o f</w>"]
    for line in merges:
        tokens.append(line.replace(" ", ""))
    tokens += [SOT_TOKEN, EOT_TOKEN]
    table = {tok: i for i, tok in enumerate(tokens)}

    vocab_path = root / "vocab.json"
    merges_path = root / "merges.txt"
    with open(vocab_path, "w", encoding="utf-8") as fh:
        json.dump(table, fh, ensure_ascii=False, sort_keys=False,
                  separators=(",", ":"))
        fh.write("\n")
    with open(merges_path, "w", encoding="utf-8") as fh:
        fh.write("#version: 0.2\n")
        for line in merges:
            fh.write(line + "\n")
    return vocab_path, merges_path, len(table)


@pytest.fixture(scope="session")
def checkpoint_dir(tmp_path_factory) -> Path:
    from transformers import CLIPConfig, CLIPImageProcessor, CLIPModel

    root = tmp_path_factory.mktemp("ckpt")
    _, _, vocab_size = build_vocab_files(root)
    sot_id, eot_id = vocab_size - 2, vocab_size - 1
    cfg = CLIPConfig(
        text_config=dict(vocab_size=vocab_size, hidden_size=64,
                         intermediate_size=128, num_hidden_layers=2,
                         num_attention_heads=4, max_position_embeddings=77,
                         bos_token_id=sot_id, eos_token_id=eot_id),
        vision_config=dict(hidden_size=64, intermediate_size=128,
                           num_hidden_layers=2, num_attention_heads=4,
                           image_size=32, patch_size=8),
        projection_dim=32,
    )
    torch.manual_seed(0)
    CLIPModel(cfg).eval().save_pretrained(root)
    CLIPImageProcessor(image_mean=[0.5, 0.5, 0.5],
                       image_std=[0.5, 0.5, 0.5]).save_pretrained(root)
    return root


@pytest.fixture(scope="session")
def exported_bundle(checkpoint_dir, tmp_path_factory) -> Path:
    out = tmp_path_factory.mktemp("bundle") / "exported"
    return export(ExportSpec(checkpoint=str(checkpoint_dir), out_dir=out))
