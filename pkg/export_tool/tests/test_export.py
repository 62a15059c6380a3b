"""Conversion and validation behavior against a local tiny checkpoint."""

import json
import shutil

import numpy as np
import pytest
import torch

from bundle_export.export import (
    COSINE_MIN,
    MAX_ABS_ERR,
    ExportError,
    ExportSpec,
    export,
    fixed_prompts,
    tokenize_prompts,
    validate,
    _build_tokenizer,
)

BUNDLE_FILES = {"config.json", "image_encoder.pt", "text_encoder.pt",
                "vocab.json", "merges.txt"}


def test_export_writes_exact_bundle_layout(exported_bundle):
    assert {p.name for p in exported_bundle.iterdir()} == BUNDLE_FILES


def test_config_reflects_checkpoint(exported_bundle):
    with open(exported_bundle / "config.json", encoding="utf-8") as fh:
        config = json.load(fh)
    assert config["embed_dim"] == 32
    assert config["image_size"] == 32
    assert config["context_length"] == 77
    # default scale parameter is log(1/0.07), stored in float32
    assert config["logit_scale"] == pytest.approx(1 / 0.07, rel=1e-4)
    assert config["channel_mean"] == [0.5, 0.5, 0.5]
    assert config["channel_std"] == [0.5, 0.5, 0.5]


def test_tokenizer_files_copied_verbatim(checkpoint_dir, exported_bundle):
    for name in ("vocab.json", "merges.txt"):
        assert (exported_bundle / name).read_bytes() == \
            (checkpoint_dir / name).read_bytes()


def test_reexport_identical_config(checkpoint_dir, exported_bundle, tmp_path):
    again = export(ExportSpec(checkpoint=str(checkpoint_dir),
                              out_dir=tmp_path / "again"))
    assert (again / "config.json").read_bytes() == \
        (exported_bundle / "config.json").read_bytes()


def test_overwrite_is_idempotent(checkpoint_dir, tmp_path):
    out = tmp_path / "twice"
    first = export(ExportSpec(checkpoint=str(checkpoint_dir), out_dir=out))
    config_before = (first / "config.json").read_bytes()
    second = export(ExportSpec(checkpoint=str(checkpoint_dir), out_dir=out))
    assert second == first
    assert (second / "config.json").read_bytes() == config_before
    assert {p.name for p in second.iterdir()} == BUNDLE_FILES


def test_unwritable_out_dir_errors(checkpoint_dir, tmp_path):
    blocker = tmp_path / "blocker"
    blocker.write_text("a file, not a directory")
    with pytest.raises(ExportError, match="cannot write bundle"):
        export(ExportSpec(checkpoint=str(checkpoint_dir),
                          out_dir=blocker / "bundle"))


def test_missing_checkpoint_errors(tmp_path):
    with pytest.raises(ExportError, match="cannot load checkpoint"):
        export(ExportSpec(checkpoint=str(tmp_path / "nowhere"),
                          out_dir=tmp_path / "out"))


def test_spec_rejects_other_precision():
    with pytest.raises(ValueError, match="float32"):
        ExportSpec(checkpoint="x", out_dir="y", precision="float16")


def test_spec_rejects_negative_count():
    with pytest.raises(ValueError, match=">= 0"):
        ExportSpec(checkpoint="x", out_dir="y", n_validation=-1)


def test_validate_meets_thresholds(exported_bundle, checkpoint_dir):
    report = validate(exported_bundle, str(checkpoint_dir), n=32)
    assert report.validated
    assert report.n_image == 32 and report.n_text == 32
    assert report.min_image_cosine >= COSINE_MIN
    assert report.min_text_cosine >= COSINE_MIN
    assert report.max_image_abs_err <= MAX_ABS_ERR
    assert report.max_text_abs_err <= MAX_ABS_ERR


def test_validate_zero_probes_is_flagged(exported_bundle, checkpoint_dir):
    report = validate(exported_bundle, str(checkpoint_dir), n=0)
    assert not report.validated
    assert report.n_image == 0 and report.n_text == 0
    assert report.min_image_cosine is None
    assert report.max_text_abs_err is None


def test_validate_truncated_graph_reports_load_failure(
        exported_bundle, checkpoint_dir, tmp_path):
    broken = tmp_path / "broken"
    shutil.copytree(exported_bundle, broken)
    blob = (broken / "image_encoder.pt").read_bytes()
    (broken / "image_encoder.pt").write_bytes(blob[:100])
    with pytest.raises(ExportError, match="load failure"):
        validate(broken, str(checkpoint_dir), n=4)


def test_fixtures_written_and_deterministic(
        exported_bundle, checkpoint_dir, tmp_path):
    a_dir, b_dir = tmp_path / "a", tmp_path / "b"
    validate(exported_bundle, str(checkpoint_dir), n=32, seed=3,
             fixtures_dir=a_dir)
    validate(exported_bundle, str(checkpoint_dir), n=32, seed=3,
             fixtures_dir=b_dir)
    a = np.load(a_dir / "probes.npz")
    b = np.load(b_dir / "probes.npz")
    assert set(a.files) == {"image_tensors", "text_ids",
                            "image_embeddings", "text_embeddings"}
    assert a["image_tensors"].shape == (32, 3, 32, 32)
    assert a["image_tensors"].dtype == np.float32
    assert a["text_ids"].shape == (32, 77)
    assert a["text_ids"].dtype == np.int64
    assert a["image_embeddings"].shape == (32, 32)
    assert a["text_embeddings"].shape == (32, 32)
    for key in a.files:
        assert np.array_equal(a[key], b[key])
    norms = np.linalg.norm(a["image_embeddings"].astype(np.float64), axis=1)
    assert np.abs(norms - 1.0).max() <= 1e-5
    meta = json.loads((a_dir / "fixtures.json").read_text(encoding="utf-8"))
    assert meta["seed"] == 3
    assert len(meta["prompts"]) == 32
    assert meta["report"]["validated"] is True
    assert meta == json.loads((b_dir / "fixtures.json").read_text(encoding="utf-8"))


def test_different_seed_changes_probes(exported_bundle, checkpoint_dir, tmp_path):
    validate(exported_bundle, str(checkpoint_dir), n=8, seed=1,
             fixtures_dir=tmp_path / "s1")
    validate(exported_bundle, str(checkpoint_dir), n=8, seed=2,
             fixtures_dir=tmp_path / "s2")
    a = np.load(tmp_path / "s1" / "probes.npz")["image_tensors"]
    b = np.load(tmp_path / "s2" / "probes.npz")["image_tensors"]
    assert not np.array_equal(a, b)


def test_fixed_prompts_deterministic_and_sized():
    forty = fixed_prompts(40)
    assert len(forty) == 40
    assert len(set(forty)) == 40
    assert forty == fixed_prompts(40)
    assert fixed_prompts(3) == forty[:3]


def test_tokenize_prompts_pads_with_zero_after_end_token(exported_bundle):
    tokenizer = _build_tokenizer(exported_bundle / "vocab.json",
                                 exported_bundle / "merges.txt")
    rows = tokenize_prompts(["the cat", "an offer of thanks"], tokenizer, 77)
    assert rows.shape == (2, 77)
    assert rows.dtype == np.int64
    for row in rows:
        assert row[0] == tokenizer.bos_token_id
        end = int(np.nonzero(row == tokenizer.eos_token_id)[0][0])
        assert np.all(row[end + 1:] == 0)


def test_tokenize_prompts_truncates_to_context(exported_bundle):
    tokenizer = _build_tokenizer(exported_bundle / "vocab.json",
                                 exported_bundle / "merges.txt")
    rows = tokenize_prompts(["word " * 500], tokenizer, 77)
    assert rows.shape == (1, 77)
    assert rows[0, 0] == tokenizer.bos_token_id
    assert rows[0, -1] == tokenizer.eos_token_id
    assert np.count_nonzero(rows[0] == tokenizer.eos_token_id) == 1


def test_text_graph_selects_end_token_position(exported_bundle):
    graph = torch.jit.load(str(exported_bundle / "text_encoder.pt"))
    tokenizer = _build_tokenizer(exported_bundle / "vocab.json",
                                 exported_bundle / "merges.txt")
    short, longer = tokenize_prompts(["the", "the offer"], tokenizer, 77)
    with torch.inference_mode():
        a = graph(torch.from_numpy(short[None, :]))
        b = graph(torch.from_numpy(longer[None, :]))
        assert (a - b).abs().max().item() > 1e-4
        # junk beyond the end token must not leak into the pooled vector
        poked = short.copy()
        poked[50] = 65
        c = graph(torch.from_numpy(poked[None, :]))
        assert (a - c).abs().max().item() == 0.0
