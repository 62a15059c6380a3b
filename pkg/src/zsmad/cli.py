"""Command-line surface: classify, evaluate, explain, make-toy, export-report.

Exit codes: 0 ok, 1 usage, 2 data error, 3 inference error. Every command
prints a sha256 digest of its effective configuration to stderr; reruns
with an identical digest produce identical artifacts. The bundle directory
can come from the ZSMAD_BUNDLE environment variable instead of --bundle.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from . import bundle as bundle_mod
from .classifier import (
    PromptBank,
    default_prompt_bank,
    load_prompt_bank,
    run_bank,
    score,
)
from .errors import DATA_ERRORS, INFERENCE_ERRORS, ConstraintError
from .experiments import (
    AggregateStat,
    ExperimentResult,
    cells_from_run,
    experiment2,
    experiment3,
)
from .explain import (
    DEFAULT_SAMPLES,
    DEFAULT_SEGMENTS,
    RIDGE_STRENGTH,
    explain,
    save_overlay,
    save_saliency,
    segment,
)
from .imaging import decode, preprocess
from .manifest import load_manifest
from .report import (
    config_digest,
    run_payload,
    score_csv_lines,
    write_bar_csv,
    write_box_csv,
    write_cell_csv,
    write_run_json,
    write_scores_csv,
)

BUNDLE_ENV_VAR = "ZSMAD_BUNDLE"


@dataclass(frozen=True)
class RunConfig:
    """Everything an evaluation run depends on; hashed into the digest."""

    bundle_path: str
    manifest_path: str
    bank_path: Optional[str]
    out_dir: str
    target_macer: float = 0.10
    parallel: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.target_macer < 1.0):
            raise ConstraintError("target_macer must lie in (0, 1)")

    def digest_payload(self) -> dict:
        return {
            "command": "evaluate",
            "bundle": str(self.bundle_path),
            "manifest": str(self.manifest_path),
            "bank": str(self.bank_path) if self.bank_path else None,
            "target_macer": self.target_macer,
            "seed": self.seed,
        }


class _Parser(argparse.ArgumentParser):
    """argparse maps usage errors to exit 2 by default; this surface uses 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _target_macer(text: str) -> float:
    value = float(text)
    if not (0.0 < value < 1.0):
        raise argparse.ArgumentTypeError("must lie strictly between 0 and 1")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _resolve_bundle_dir(flag_value: Optional[str]) -> str:
    if flag_value:
        return flag_value
    env = os.environ.get(BUNDLE_ENV_VAR)
    if env:
        return env
    raise ConstraintError(
        f"no bundle directory: pass --bundle or set {BUNDLE_ENV_VAR}"
    )


def _load_bank(path: Optional[str]) -> PromptBank:
    return load_prompt_bank(path) if path else default_prompt_bank()


def _print_digest(payload: dict) -> str:
    digest = config_digest(payload)
    print(f"config digest: {digest}", file=sys.stderr)
    return digest


def build_parser() -> _Parser:
    parser = _Parser(prog="zsmad", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_cls = sub.add_parser("classify", help="score one image against every prompt pair")
    p_cls.add_argument("--image", required=True)
    p_cls.add_argument("--bundle", default=None)
    p_cls.add_argument("--bank", default=None)

    p_eval = sub.add_parser("evaluate", help="run the three evaluation protocols")
    p_eval.add_argument("--manifest", required=True)
    p_eval.add_argument("--bundle", default=None)
    p_eval.add_argument("--bank", default=None)
    p_eval.add_argument("--out-dir", required=True)
    p_eval.add_argument("--target-macer", type=_target_macer, default=0.10)
    p_eval.add_argument("--parallel", type=_positive_int, default=None,
                        help="worker threads for image decode (default: cores)")
    p_eval.add_argument("--seed", type=int, default=0)

    p_exp = sub.add_parser("explain", help="saliency map for one image and prompt pair")
    p_exp.add_argument("--image", required=True)
    p_exp.add_argument("--pair", required=True, help="prompt pair id from the bank")
    p_exp.add_argument("--bundle", default=None)
    p_exp.add_argument("--bank", default=None)
    p_exp.add_argument("--segments", type=_positive_int, default=DEFAULT_SEGMENTS)
    p_exp.add_argument("--samples", type=_positive_int, default=DEFAULT_SAMPLES)
    p_exp.add_argument("--seed", type=int, default=0)
    p_exp.add_argument("--kernel-width", type=float, default=None)
    p_exp.add_argument("--ridge", type=float, default=RIDGE_STRENGTH)
    p_exp.add_argument("--out-json", required=True)
    p_exp.add_argument("--out-png", default=None)

    p_toy = sub.add_parser("make-toy", help="write a tiny self-contained model bundle")
    p_toy.add_argument("--seed", type=int, required=True)
    p_toy.add_argument("--dim", type=_positive_int, default=16)
    p_toy.add_argument("--out", required=True)

    p_rep = sub.add_parser("export-report",
                           help="regenerate figure files from a saved run JSON")
    p_rep.add_argument("--run", required=True, help="run JSON written by evaluate")
    p_rep.add_argument("--out-dir", required=True)
    p_rep.add_argument("--format", choices=("json", "csv"), default="csv")

    return parser


def cmd_classify(args) -> int:
    bundle_dir = _resolve_bundle_dir(args.bundle)
    _print_digest({
        "command": "classify", "image": str(args.image),
        "bundle": str(bundle_dir), "bank": str(args.bank) if args.bank else None,
    })
    bank = _load_bank(args.bank)
    bundle = bundle_mod.load_bundle(bundle_dir)
    img = decode(args.image)
    tensor = preprocess(img, bundle.preprocess_spec())
    emb = bundle_mod.encode_image(bundle, tensor)
    records = [score(emb, pair, bundle, sample_id=Path(args.image).name)
               for pair in bank]
    for line in score_csv_lines(records):
        print(line)
    return 0


def _ensure_out_dir(path_str: str) -> Path:
    out = Path(path_str)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_evaluate(args) -> int:
    bundle_dir = _resolve_bundle_dir(args.bundle)
    config = RunConfig(
        bundle_path=bundle_dir, manifest_path=args.manifest, bank_path=args.bank,
        out_dir=args.out_dir, target_macer=args.target_macer,
        parallel=args.parallel, seed=args.seed,
    )
    digest = _print_digest(config.digest_payload())
    manifest = load_manifest(args.manifest)
    if len(manifest.samples) == 0:
        raise ConstraintError(f"{args.manifest}: empty manifest")
    bank = _load_bank(args.bank)
    bundle = bundle_mod.load_bundle(bundle_dir)
    out = _ensure_out_dir(args.out_dir)

    run = run_bank(manifest, bank, bundle, parallel=args.parallel)
    result = ExperimentResult(
        per_cell=cells_from_run(run, manifest, bank, args.target_macer),
        skipped=run.skipped,
        target_macer=args.target_macer,
        prompt_categories={p.id: p.category.value for p in bank},
    )
    aggregates = experiment2(result)
    prompt_means, best_prompt = experiment3(result)

    payload = run_payload(result, aggregates, prompt_means, best_prompt, digest)
    write_run_json(payload, out / "run.json")
    write_scores_csv(run.records, out / "scores.csv")
    write_cell_csv(result, out / "cells.csv")
    write_bar_csv(prompt_means, out / "prompt_means.csv")
    write_box_csv(aggregates, out / "aggregates.csv")

    print(f"samples: {len(manifest.samples)}  skipped: {len(run.skipped)}")
    print(f"cells: {len(result.per_cell)}  degenerate: {len(result.degenerate_cells())}")
    print(f"best prompt: {best_prompt}")
    for stat in aggregates:
        if "|" not in stat.group_key and stat.group_key.startswith("medium="):
            medium = stat.group_key.split("=", 1)[1]
            print(f"  {medium}: mean bpcer at macer<={args.target_macer:g} "
                  f"= {stat.mean:.4f}")
    print(f"artifacts in {out}")
    return 0


def cmd_explain(args) -> int:
    bundle_dir = _resolve_bundle_dir(args.bundle)
    _print_digest({
        "command": "explain", "image": str(args.image), "pair": args.pair,
        "bundle": str(bundle_dir), "bank": str(args.bank) if args.bank else None,
        "segments": args.segments, "samples": args.samples, "seed": args.seed,
        "kernel_width": args.kernel_width, "ridge": args.ridge,
    })
    bank = _load_bank(args.bank)
    try:
        pair = bank.get(args.pair)
    except KeyError:
        raise ConstraintError(f"prompt pair {args.pair!r} not in bank") from None
    bundle = bundle_mod.load_bundle(bundle_dir)
    img = decode(args.image)
    mask = segment(img, args.segments)
    saliency = explain(img, pair, bundle, mask, n_samples=args.samples,
                       seed=args.seed, kernel_width=args.kernel_width,
                       ridge=args.ridge)
    save_saliency(saliency, args.out_json)
    if args.out_png:
        save_overlay(img, mask, saliency, args.out_png)
    print(f"fit_quality: {saliency.fit_quality!r}")
    print(f"saliency written to {args.out_json}")
    return 0


def cmd_make_toy(args) -> int:
    _print_digest({"command": "make-toy", "seed": args.seed, "dim": args.dim,
                   "out": str(args.out)})
    path = bundle_mod.make_toy_bundle(args.seed, args.dim, args.out)
    print(f"toy bundle written to {path}")
    return 0


def cmd_export_report(args) -> int:
    _print_digest({"command": "export-report", "run": str(args.run),
                   "format": args.format})
    with open(args.run, encoding="utf-8") as fh:
        payload = json.load(fh)
    for key in ("per_cell", "aggregates", "prompt_means"):
        if key not in payload:
            raise ConstraintError(f"{args.run}: missing {key!r}; not a run JSON")
    out = _ensure_out_dir(args.out_dir)
    if args.format == "json":
        write_run_json(payload, out / "report.json")
        print(f"report written to {out / 'report.json'}")
        return 0

    def stats_of(items):
        return [AggregateStat(**item) for item in items]

    write_box_csv(stats_of(payload["aggregates"]), out / "aggregates.csv")
    write_bar_csv(stats_of(payload["prompt_means"]), out / "prompt_means.csv")
    lines = ["prompt_id,generator,medium,bpcer,achieved_macer,threshold,feasible"]
    # sort on the split key: "|".join order diverges from tuple order
    for key in sorted(payload["per_cell"], key=lambda k: tuple(k.split("|"))):
        point = payload["per_cell"][key]
        if point is None:
            continue
        prompt_id, generator, medium = key.split("|")
        lines.append(",".join([
            prompt_id, generator, medium, repr(float(point["bpcer"])),
            repr(float(point["achieved_macer"])), repr(float(point["threshold"])),
            str(bool(point["feasible"])).lower(),
        ]))
    with open(out / "cells.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"figure CSVs written to {out}")
    return 0


_COMMANDS = {
    "classify": cmd_classify,
    "evaluate": cmd_evaluate,
    "explain": cmd_explain,
    "make-toy": cmd_make_toy,
    "export-report": cmd_export_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = _COMMANDS[args.command]
    try:
        return handler(args)
    except DATA_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except INFERENCE_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
