#!/usr/bin/env python3
"""Regenerate the frozen test fixtures under tests/goldens/.

Expected values come from the independent reference implementations in
tests/oracles.py wherever an external derivation exists (tokenization,
metric sweeps, aggregation); runtime-dependent goldens (toy-bundle
embeddings, the end-to-end artifact set) are captured from a direct
reference execution and cross-checked against the oracles before being
written, so a regression in the package cannot silently refreeze bad
values.

Usage: python3 scripts/make_goldens.py
"""

from __future__ import annotations

import hashlib
import json
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np
import torch

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "tests"))

import oracles  # noqa: E402
import synth  # noqa: E402

from zsmad.bundle import make_toy_bundle  # noqa: E402
from zsmad.classifier import default_prompt_bank, run_bank  # noqa: E402
from zsmad.manifest import load_manifest  # noqa: E402

GOLDENS = REPO / "tests" / "goldens"
TOY_SEED, TOY_DIM = 1, 16
DATASET_SEED = 7

TOKENIZER_STRINGS = [
    "",
    " ",
    "a",
    "a photo of a real face",
    "a photo of a morphed face",
    "A Photo",
    "a   photo",
    "THE QUICK BROWN FOX",
    "the quick brown fox jumps over the lazy dog",
    "face!!!",
    "it's a face",
    "face-morphing attack",
    "123 faces",
    "naïve café",
    "face éèê",
    "日本語のテスト",
    "emoji \U0001f600 face",
    "tabs\tand\nnewlines",
    "  leading and trailing  ",
    "word " * 120,
    "supercalifragilisticexpialidocious",
    "ab" * 200,
    "mixed CASE and 42 numbers!",
    "an authentic face photo",
]


def sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def make_tokenizer_golden(bundle_dir: Path) -> None:
    token_to_id = json.loads((bundle_dir / "vocab.json").read_text(encoding="utf-8"))
    merge_lines = (bundle_dir / "merges.txt").read_text(encoding="utf-8").splitlines()
    cases = []
    for text in TOKENIZER_STRINGS:
        ids, content_len = oracles.oracle_tokenize(text, token_to_id, merge_lines)
        cases.append({"text": text, "ids": ids, "content_len": content_len})
    payload = {
        "vocab_sha256": sha256_file(bundle_dir / "vocab.json"),
        "merges_sha256": sha256_file(bundle_dir / "merges.txt"),
        "context_length": 77,
        "cases": cases,
    }
    (GOLDENS / "tokenizer.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"tokenizer.json: {len(cases)} cases")


def make_metrics_golden() -> None:
    bona = [0.1, 0.4, 0.35, 0.8]
    morph = [0.3, 0.6, 0.9, 0.95, 0.2]
    t, macer, bpcer, feasible = oracles.oracle_bpcer_at_macer(bona, morph, 0.10)
    payload = {
        "bonafide": bona,
        "morph": morph,
        "rates_at_0p5": oracles.oracle_rates(bona, morph, 0.5),
        "det_curve": oracles.oracle_det(bona, morph),
        "bpcer_at_macer_0p1": {"threshold": t, "achieved_macer": macer,
                               "bpcer": bpcer, "feasible": feasible},
        "eer": oracles.oracle_eer(bona, morph),
        "eer_inverted": oracles.oracle_eer(morph, bona),
    }
    (GOLDENS / "metrics.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"metrics.json: det curve of {len(payload['det_curve'])} points")


def make_embedding_golden(bundle_dir: Path) -> None:
    """Reference execution: graphs loaded and run directly, no engine code."""
    image_graph = torch.jit.load(str(bundle_dir / "image_encoder.pt"))
    text_graph = torch.jit.load(str(bundle_dir / "text_encoder.pt"))
    image_graph.eval()
    text_graph.eval()

    rng = np.random.default_rng(3)
    tensor = rng.standard_normal((3, 32, 32)).astype(np.float32)
    token_to_id = json.loads((bundle_dir / "vocab.json").read_text(encoding="utf-8"))
    merge_lines = (bundle_dir / "merges.txt").read_text(encoding="utf-8").splitlines()
    prompt = "a photo of a real face"
    ids, content_len = oracles.oracle_tokenize(prompt, token_to_id, merge_lines)

    with torch.inference_mode():
        img_raw = image_graph(torch.from_numpy(tensor[None])).numpy()[0]
        txt_raw = text_graph(torch.tensor([ids], dtype=torch.int64)).numpy()[0]

    def unit(v):
        v = v.astype(np.float64)
        return (v / np.sqrt((v ** 2).sum())).astype(np.float32)

    payload = {
        "tensor_seed": 3,
        "prompt": prompt,
        "prompt_ids": ids,
        "prompt_content_len": content_len,
        "image_embedding": [float(x) for x in unit(img_raw)],
        "text_embedding": [float(x) for x in unit(txt_raw)],
    }
    (GOLDENS / "toy_embeddings.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print("toy_embeddings.json: image + text reference vectors")


def make_bank6_golden(tmp: Path, bundle_dir: Path) -> None:
    """Single-threaded reference run over the 6-sample fixture manifest."""
    synth.write_dataset(tmp / "ds6", synth.TWELVE, seed=DATASET_SEED, absolute=True)
    manifest_path = synth.write_subset_manifest(
        tmp / "ds6", synth.TWELVE, count=6, name="manifest6.csv", absolute=True)
    from zsmad.bundle import load_bundle
    bundle = load_bundle(bundle_dir)
    run = run_bank(load_manifest(manifest_path), default_prompt_bank(), bundle,
                   parallel=1)
    records = []
    for r in run.records:
        expect = oracles.oracle_p_morph(r.cos_bonafide, r.cos_morph, 100.0)
        if abs(expect - r.p_morph) > 1e-12:
            raise SystemExit(
                f"p_morph {r.p_morph} disagrees with oracle {expect} "
                f"for ({r.sample_id}, {r.prompt_id})")
        records.append({
            "sample_id": r.sample_id, "prompt_id": r.prompt_id,
            "p_morph": r.p_morph, "p_bonafide": r.p_bonafide,
            "cos_bonafide": r.cos_bonafide, "cos_morph": r.cos_morph,
            "predicted_text": r.predicted_text,
        })
    payload = {"dataset_seed": DATASET_SEED, "records": records,
               "skipped": list(run.skipped)}
    (GOLDENS / "bank6.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"bank6.json: {len(records)} records, oracle-checked")


def _verify_cells_against_oracle(run_dir: Path) -> None:
    """Recompute every operating point in cells.csv from scores.csv."""
    score_rows = (run_dir / "scores.csv").read_text().strip().splitlines()[1:]
    labels = {sid: label for sid, label, _, _ in synth.TWELVE}
    gen_of = {sid: g for sid, _, g, _ in synth.TWELVE}
    med_of = {sid: m for sid, _, _, m in synth.TWELVE}

    # per-cell populations: bona fide shared per medium, morphs per generator
    per_cell: dict[tuple, tuple[list, list]] = {}
    for row in score_rows:
        sid, pid, p_morph = row.split(",")[:3]
        value = float(p_morph)
        medium = med_of[sid]
        if labels[sid] == "bonafide":
            for gen in ("lma-i", "lma-ii"):
                per_cell.setdefault((pid, gen, medium), ([], []))[0].append(value)
        else:
            per_cell.setdefault((pid, gen_of[sid], medium), ([], []))[1].append(value)

    cell_rows = (run_dir / "cells.csv").read_text().strip().splitlines()[1:]
    assert len(cell_rows) == len(per_cell), (len(cell_rows), len(per_cell))
    for row in cell_rows:
        pid, gen, med, bpcer, macer, threshold, feasible = row.split(",")
        bona, morph = per_cell[(pid, gen, med)]
        t, om, ob, of = oracles.oracle_bpcer_at_macer(bona, morph, 0.10)
        if not (abs(ob - float(bpcer)) < 1e-12 and abs(om - float(macer)) < 1e-12
                and abs(t - float(threshold)) < 1e-12 and of == (feasible == "true")):
            raise SystemExit(f"cell {(pid, gen, med)} disagrees with sweep oracle: "
                             f"{row} vs {(t, om, ob, of)}")
    print(f"  cells.csv: {len(cell_rows)} operating points oracle-checked")


def make_e2e_golden(tmp: Path) -> None:
    """Reference pipeline run with relative paths, captured byte-for-byte."""
    work = tmp / "e2e"
    synth.write_dataset(work, synth.TWELVE, seed=DATASET_SEED, absolute=False)

    def cli(*argv):
        proc = subprocess.run([sys.executable, "-m", "zsmad.cli", *argv],
                              cwd=work, capture_output=True, text=True)
        if proc.returncode != 0:
            raise SystemExit(f"cli {argv} failed:\n{proc.stderr}")
        return proc.stdout

    cli("make-toy", "--seed", str(TOY_SEED), "--dim", str(TOY_DIM),
        "--out", "toy_bundle")
    stdout = cli("classify", "--image", "imgs/s00.png", "--bundle", "toy_bundle")
    cli("evaluate", "--manifest", "manifest.csv", "--bundle", "toy_bundle",
        "--out-dir", "run", "--parallel", "1")

    _verify_cells_against_oracle(work / "run")

    dest = GOLDENS / "e2e"
    dest.mkdir(parents=True, exist_ok=True)
    (dest / "classify_stdout.txt").write_text(stdout, encoding="utf-8")
    for name in ("run.json", "scores.csv", "cells.csv", "aggregates.csv",
                 "prompt_means.csv"):
        shutil.copyfile(work / "run" / name, dest / name)
    print("e2e/: classify stdout + evaluate artifacts frozen")


def main() -> None:
    GOLDENS.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmpdir:
        tmp = Path(tmpdir)
        bundle_dir = make_toy_bundle(TOY_SEED, TOY_DIM, tmp / "toy_bundle")
        make_tokenizer_golden(bundle_dir)
        make_metrics_golden()
        make_embedding_golden(bundle_dir)
        make_bank6_golden(tmp, bundle_dir)
        make_e2e_golden(tmp)
    print(f"goldens written to {GOLDENS}")


if __name__ == "__main__":
    main()
