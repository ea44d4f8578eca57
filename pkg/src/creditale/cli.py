"""Command line entry point.

    creditale run --config cfg.json --out results/ [--seed N] [--models lr,gbt] [--synthetic]
    creditale synth --moments moments.json --n 20000 --out firms.csv
    creditale explain --model results/models/gbt.json --data firms.csv --feature profit_margin

Exit codes: 0 success, 1 config error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .dataset import REFERENCE_MOMENTS, ClassMoments, apply_log_transform, load_csv, synthesize_firms, write_csv
from .errors import ConfigError, CreditAleError
from .interpret import ale_bootstrap
from .models import load_model
from .pipeline import DataSource, ExperimentConfig, emit_outputs, run_experiment
from .svg import ale_svg

log = logging.getLogger("creditale")


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="creditale", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run the full experiment")
    run.add_argument("--config", type=Path, help="JSON experiment config")
    run.add_argument("--out", type=Path, required=True)
    run.add_argument("--seed", type=int)
    run.add_argument("--models", help="comma-separated subset of fann,gbt,gev,lr,probit")
    run.add_argument("--synthetic", action="store_true", help="use the calibrated generator as data source")

    synth = sub.add_parser("synth", help="write a synthetic firm table")
    synth.add_argument("--moments", type=Path, help="JSON class moments (default: built-in reference moments)")
    synth.add_argument("--n", type=int, required=True)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--out", type=Path, required=True)

    explain = sub.add_parser("explain", help="ALE with bootstrap bands for one saved model")
    explain.add_argument("--model", type=Path, required=True)
    explain.add_argument("--data", type=Path, required=True)
    explain.add_argument("--feature", required=True)
    explain.add_argument("--bins", type=int, default=40)
    explain.add_argument("--bootstrap", type=int, default=100)
    explain.add_argument("--seed", type=int, default=0)
    explain.add_argument("--out", type=Path, help="write the curve JSON here instead of stdout")
    explain.add_argument("--svg", type=Path, help="also render the panel to this SVG file")
    return parser


def _cmd_run(args) -> int:
    cfg = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
    if args.synthetic and not cfg.data.is_synthetic:
        cfg.data = DataSource()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.models:
        cfg.models = tuple(m.strip() for m in args.models.split(",") if m.strip())
    cfg.output_dir = str(args.out)
    cfg.validate()
    report = run_experiment(cfg)
    manifest = emit_outputs(report, args.out)
    for fam, res in report.results.items():
        m = res.metrics
        print(f"{fam:7s} sens={m.sensitivity:.3f} spec={m.specificity:.3f} H={m.h_measure:.3f} AUC={m.auc:.3f}")
    print(f"wrote {len(manifest)} files to {args.out}")
    return 0


def _cmd_synth(args) -> int:
    moments = ClassMoments.from_json(args.moments) if args.moments else REFERENCE_MOMENTS
    d = synthesize_firms(moments, args.n, args.seed)
    write_csv(d, args.out)
    print(f"wrote {d.n} firms ({int(d.labels.sum())} defaults) to {args.out}")
    return 0


def _cmd_explain(args) -> int:
    model = load_model(args.model)
    d, dropped = load_csv(args.data, schema=model.feature_names)
    flags = model.meta.get("transform_flags", [])
    logged = [f for f, on in zip(model.feature_names, flags) if on]
    d = apply_log_transform(d, logged)
    if args.feature not in d.feature_names:
        raise ConfigError(f"unknown feature {args.feature!r}")
    curve = ale_bootstrap(model, d, args.feature, args.bins, args.bootstrap, seed=args.seed)
    doc = curve.to_dict()
    doc["dropped_rows"] = dropped
    text = json.dumps(doc, indent=1) + "\n"
    if args.out:
        args.out.write_text(text)
    else:
        sys.stdout.write(text)
    if args.svg:
        args.svg.write_text(ale_svg(doc, f"{model.family}: {args.feature}", antilog=curve.log_scale))
    return 0


COMMANDS = {"run": _cmd_run, "synth": _cmd_synth, "explain": _cmd_explain}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except CreditAleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
