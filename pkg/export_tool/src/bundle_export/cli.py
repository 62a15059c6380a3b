"""Command line front end: export and validate exchange bundles."""

import argparse
import sys

from .export import ExportError, ExportSpec, ValidationError, export, validate


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bundle-export")
    sub = parser.add_subparsers(dest="command", required=True)

    p_exp = sub.add_parser("export", help="convert a checkpoint into a bundle")
    p_exp.add_argument("--checkpoint", required=True)
    p_exp.add_argument("--out", required=True)

    p_val = sub.add_parser("validate", help="compare bundle graphs to the source")
    p_val.add_argument("--checkpoint", required=True)
    p_val.add_argument("--bundle", required=True)
    p_val.add_argument("--n", type=int, default=32)
    p_val.add_argument("--seed", type=int, default=0)
    p_val.add_argument("--fixtures", default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "export":
            out = export(ExportSpec(checkpoint=args.checkpoint, out_dir=args.out))
            print(f"bundle written to {out}")
        else:
            report = validate(args.bundle, args.checkpoint, n=args.n,
                              seed=args.seed, fixtures_dir=args.fixtures)
            if report.validated:
                print(f"validated {report.n_image} image / {report.n_text} text probes: "
                      f"min cosine {min(report.min_image_cosine, report.min_text_cosine):.6f}, "
                      f"max err {max(report.max_image_abs_err, report.max_text_abs_err):.3e}")
            else:
                print("not validated (0 probes requested)")
    except (ExportError, ValidationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
