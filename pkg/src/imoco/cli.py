"""Command-line entry point.

Verbs: ``run`` (four-arm experiment), ``compare`` (aggregate results over
runs), ``render-slices`` (PGM slices from a stored volume), and
``export-tracks`` (copy motion-track CSVs out of a run directory).
Exit codes: 0 success, 2 configuration error, 3 stage failure.
"""

from __future__ import annotations

import argparse
import os
import shutil
import sys

from .experiment import ExperimentConfig, StageError, compare, format_compare, run

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="imoco", description=__doc__)
    sub = parser.add_subparsers(dest="verb", required=True)

    p_run = sub.add_parser("run", help="execute the four-arm experiment")
    p_run.add_argument("--config", help="flat key=value configuration file")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
        help="override a config key (flag > file > default)",
    )

    p_cmp = sub.add_parser("compare", help="aggregate results tables over runs")
    p_cmp.add_argument("run_dirs", nargs="+", help="run output directories")

    p_sl = sub.add_parser("render-slices", help="write PGM slices of a volume")
    p_sl.add_argument("volume", help="volume path prefix (.raw/.meta pair)")
    p_sl.add_argument("--out", required=True, help="output path prefix")

    p_tr = sub.add_parser("export-tracks", help="copy motion-track CSVs from a run")
    p_tr.add_argument("run_dir", help="run output directory")
    p_tr.add_argument("--out", required=True, help="destination directory")
    return parser


def _overrides_to_dict(pairs) -> dict:
    out = {}
    for pair in pairs:
        key, sep, val = pair.partition("=")
        if not sep:
            raise ValueError(f"override {pair!r} is not KEY=VALUE")
        out[key.strip()] = val.strip()
    return out


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.verb == "run":
            overrides = _overrides_to_dict(args.overrides)
            if args.config:
                cfg = ExperimentConfig.from_file(args.config, overrides)
            else:
                cfg = ExperimentConfig.from_mapping(overrides)
        elif args.verb == "compare":
            for d in args.run_dirs:
                if not os.path.isfile(os.path.join(d, "results.csv")):
                    raise ValueError(f"{d} has no results.csv")
    except (ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.verb == "run":
            result = run(cfg, args.out)
            for arm, rep in result.reports.items():
                print(f"{arm}: ssim={rep.ssim:.4f} rmse={rep.rmse:.4f}")
            print(f"manifest: {result.manifest_path}")
        elif args.verb == "compare":
            print(format_compare(compare(args.run_dirs)), end="")
        elif args.verb == "render-slices":
            from .recon import export_slices, load_volume

            try:
                vol = load_volume(args.volume)
            except (OSError, ValueError) as exc:
                print(f"config error: {exc}", file=sys.stderr)
                return EXIT_CONFIG
            for path in export_slices(vol, args.out):
                print(path)
        elif args.verb == "export-tracks":
            copied = False
            os.makedirs(args.out, exist_ok=True)
            for name in ("track_proposed.csv", "track_marker.csv"):
                src = os.path.join(args.run_dir, name)
                if os.path.isfile(src):
                    shutil.copyfile(src, os.path.join(args.out, name))
                    print(os.path.join(args.out, name))
                    copied = True
            if not copied:
                print(f"config error: no track CSVs in {args.run_dir}", file=sys.stderr)
                return EXIT_CONFIG
    except StageError as exc:
        print(f"stage failure: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
