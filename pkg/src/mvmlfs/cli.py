"""Command-line front end.

Stage commands (`ingest`, `stats`, `semantic`, `graph`, `train`, `select`,
`eval`) execute the pipeline up to and including that stage; `run` is the
whole thing; `report` aggregates completed runs into tables and charts.

Exit codes: 0 success, 2 config error, 3 data error, 4 external-service
error, 5 internal invariant violation.  The LLM credential is read from an
environment variable (default MVMLFS_API_KEY), never from a flag.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import ConfigError, MvmlfsError
from .pipeline import MODES, STAGES, RunConfig, run_pipeline
from .report import write_report

log = logging.getLogger("mvmlfs")


def _tau(text: str):
    try:
        return float(text)
    except ValueError:
        return text


def _ratios(text: str) -> list[float]:
    try:
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad ratio list {text!r}") from None


def _add_run_options(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="JSON file with RunConfig keys; flags override it")
    sub.add_argument("--manifest", help="dataset manifest path")
    sub.add_argument("--out", dest="out_dir", help="run output directory")
    sub.add_argument("--mode", choices=MODES)
    sub.add_argument("--seed", type=int)
    sub.add_argument("--bins", type=int)
    sub.add_argument("--ff-top-m", dest="ff_top_m", type=int)
    sub.add_argument("--delta", type=float)
    sub.add_argument("--tau1", type=_tau)
    sub.add_argument("--tau2", type=_tau)
    sub.add_argument("--tau3", type=_tau)
    sub.add_argument("--hidden-dim", dest="hidden_dim", type=int)
    sub.add_argument("--layers", type=int)
    sub.add_argument("--epochs", type=int)
    sub.add_argument("--learning-rate", dest="learning_rate", type=float)
    sub.add_argument("--negative-ratio", dest="negative_ratio", type=float)
    sub.add_argument("--lambda-score", dest="lambda_score", type=float)
    sub.add_argument("--ratios", type=_ratios, help="comma-separated, e.g. 0.02,0.04")
    sub.add_argument("--repeats", type=int)
    sub.add_argument("--mlknn-k", dest="mlknn_k", type=int)
    sub.add_argument("--mlknn-s", dest="mlknn_s", type=float)
    sub.add_argument("--train-fraction", dest="train_fraction", type=float)
    sub.add_argument("--ablation-fraction", dest="ablation_fraction", type=float)
    sub.add_argument(
        "--no-baselines", dest="with_baselines", action="store_false", default=None
    )
    sub.add_argument("--synonyms", help="JSON file mapping tokens to canonical tokens")
    sub.add_argument("--batch-size", dest="batch_size", type=int)
    sub.add_argument("--llm-endpoint", dest="llm_endpoint")
    sub.add_argument("--llm-model", dest="llm_model")
    sub.add_argument("--api-key-env", dest="api_key_env")
    sub.add_argument("--semantic-cache", dest="semantic_cache")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mvmlfs",
        description="Multi-view multi-label feature selection pipeline",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    commands = parser.add_subparsers(dest="command", required=True)
    for stage in STAGES:
        sub = commands.add_parser(stage, help=f"run the pipeline up to '{stage}'")
        _add_run_options(sub)
    sub = commands.add_parser("run", help="run the full pipeline")
    _add_run_options(sub)
    rep = commands.add_parser("report", help="aggregate completed runs")
    rep.add_argument("--runs", nargs="+", required=True, help="run directories")
    rep.add_argument("--out", required=True, help="output directory for tables/charts")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    payload: dict = {}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            payload.update(json.loads(path.read_text(encoding="utf-8")))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"bad config JSON: {exc}") from None
    skip = {"command", "verbose", "config"}
    for key, value in vars(args).items():
        if key in skip or value is None:
            continue
        payload[key] = value
    if "manifest" not in payload:
        raise ConfigError("a dataset manifest is required (--manifest)")
    if "out_dir" not in payload:
        raise ConfigError("an output directory is required (--out)")
    try:
        return RunConfig.from_dict(payload)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "report":
            written = write_report(args.runs, args.out)
            for path in written:
                print(path)
            return 0
        config = config_from_args(args)
        until = "eval" if args.command == "run" else args.command
        run = run_pipeline(config, until=until)
        print(f"{config.mode} run complete through '{until}' in {run.out}")
        if run.report is not None:
            for method in run.report.methods():
                for metric in ("ap", "auc", "lrap", "hl"):
                    value = run.report.over_ratio_mean(method, metric)
                    print(f"  {method} mean {metric} over ratios: {value:.4f}")
        return 0
    except MvmlfsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
