"""Command-line entry point: ``vleed {synth,train,eval,sweep}``.

Exit codes: 0 success, 2 configuration error, 3 I/O or file-format error,
4 numeric abort.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import pipeline
from .config import load_config
from .errors import ConfigError, FormatError, NumericError
from .evaluation import write_scores_csv
from .synthdata import load_store, save_store

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4
STORE_NAME = "store.vleede"

log = logging.getLogger("vleed")


def _manifest(command: str, run, outputs: list[str], **extra) -> str:
    body = {"command": command, "config_hash": run.config_hash(), "seed": run.seed,
            "outputs": sorted(outputs), **extra}
    return pipeline.dump_json(body)


def _parse_lambdas(text: str | None):
    if text is None:
        return None
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"--lambdas must be comma-separated numbers: {text!r}") from exc
    if not values or min(values) < 0:
        raise ConfigError("--lambdas must list at least one non-negative value")
    return values


def cmd_synth(args) -> int:
    run = load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_store(pipeline.synthesize(run), out / STORE_NAME)
    pipeline.write_text(out / "manifest.json", _manifest("synth", run, [STORE_NAME]))
    return EXIT_OK


def cmd_train(args) -> int:
    run = load_config(args.config)
    store = load_store(args.store)
    train, _ = pipeline.split_store(run, store)
    artifact, trace = pipeline.fit(run, train, args.method)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    name = pipeline.ARTIFACT_NAMES[args.method]
    artifact.save(out / name)
    outputs = [name]
    if trace is not None:
        pipeline.write_text(out / "trace.json", trace.to_json())
        outputs.append("trace.json")
    pipeline.write_text(out / "manifest.json",
                        _manifest("train", run, outputs, method=args.method))
    return EXIT_OK


def cmd_eval(args) -> int:
    run = load_config(args.config)
    store = load_store(args.store)
    artifact = pipeline.load_artifact(args.model)
    name = pipeline.transform_name(artifact)
    report, scores = pipeline.evaluate_artifact(run, store, artifact, name)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pipeline.write_text(out / "report.json", pipeline.dump_json(report))
    write_scores_csv(scores, out / "scores.csv")
    pipeline.write_text(out / "manifest.json",
                        _manifest("eval", run, ["report.json", "scores.csv"], transform=name))
    return EXIT_OK


def cmd_sweep(args) -> int:
    run = load_config(args.config)
    lambdas = _parse_lambdas(args.lambdas)
    store = load_store(args.store) if args.store else pipeline.synthesize(run)
    result = pipeline.sweep(run, store, lambdas, args.method)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pipeline.write_text(out / "sweep.json", pipeline.dump_json(result))
    pipeline.write_text(out / "sweep.csv", pipeline.rows_csv(pipeline.sweep_rows(result)))
    pipeline.write_text(out / "manifest.json",
                        _manifest("sweep", run, ["sweep.json", "sweep.csv"], method=args.method))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vleed", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic embedding store")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train VLEED / PFRNet or fit a baseline")
    p.add_argument("--config", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--method", default="vleed", choices=pipeline.FIT_METHODS)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a released representation")
    p.add_argument("--config", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--model", default="identity",
                   help="checkpoint / baseline artifact, or 'identity'")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="train and evaluate across disentanglement weights")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--store", help="existing store; synthesised from the config if omitted")
    p.add_argument("--lambdas", help="comma-separated weights (default: config sweep_lambdas)")
    p.add_argument("--method", default="vleed", choices=("vleed", "pfrnet"))
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, FormatError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericError as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
