"""Command-line interface.

Subcommands: synth (generate a city), stats (summary statistics),
impute (fill one table), evaluate (masked benchmark), model fit /
model show (persist and inspect the morphology model + classifier).

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
The SM_IMPUTE_SEED environment variable supplies the default master
seed when --seed is not given.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .benchmark import run_benchmark
from .classifier import fit_classifier, sm_impute, build_feature_matrix
from .config import RunConfig
from .errors import BlockfillError, ConfigError, DataError
from .hybrid import hybrid_impute
from .io import load_table, save_imputed, save_table
from .model import BlockTable
from .morphology import assign_clusters, fit_cluster_model
from .neighbors import idw_impute, sknn_impute
from .nmf import smvnmf_impute
from .stats import stats_report
from .synth import SynthConfig, generate_city

logger = logging.getLogger("blockfill")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # map argparse usage failures to exit 1
        raise _UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _default_seed() -> int:
    env = os.environ.get("SM_IMPUTE_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"SM_IMPUTE_SEED must be an integer, got {env!r}") from None
    return 42


def _build_parser() -> _Parser:
    parser = _Parser(prog="blockfill", description=__doc__)
    parser.add_argument("--version", action="version", version=f"blockfill {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("synth", help="generate a synthetic city table")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--labels-out", help="sidecar CSV with true regime labels")
    p.add_argument("--n", type=int, default=5000)
    p.add_argument("--regimes", type=int, default=4)
    p.add_argument("--spatial-scale", type=float, default=3000.0)
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("stats", help="spatial/group statistics of a table")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=("csv", "geojson"), default=None)
    p.add_argument("--weights-k", type=int, default=8)
    p.add_argument("--n-perm", type=int, default=999)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", help="write JSON here instead of stdout")

    p = sub.add_parser("impute", help="fill missing fsi/gsi in one table")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=("csv", "geojson"), default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--method", default="sm",
                   help="sm | idw | sknn | smvnmf | any a+b combination (default sm)")
    p.add_argument("--config", help="JSON configuration file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--alpha", type=float, default=None, help="hybrid weight on the first method")
    p.add_argument("--k", default=None, help="cluster count for sm (integer or 'auto')")
    p.add_argument("--classifier", choices=("gbt", "logistic"), default=None)

    p = sub.add_parser("evaluate", help="run the masked benchmark protocol")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=("csv", "geojson"), default=None)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config", help="JSON configuration file")
    p.add_argument("--methods", help="comma-separated method list")
    p.add_argument("--rates", help="comma list or start:stop:step (e.g. 0.1:0.7:0.1)")
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None, help="worker processes (default 1)")
    p.add_argument("--k", default=None, help="cluster count for sm (integer or 'auto')")
    p.add_argument("--classifier", choices=("gbt", "logistic"), default=None)
    p.add_argument("--independent-mask", action="store_true",
                   help="mask fsi and gsi independently instead of jointly")

    p = sub.add_parser("model", help="persist or inspect a fitted model")
    model_sub = p.add_subparsers(dest="model_command")
    pf = model_sub.add_parser("fit", help="fit cluster model + classifier and save JSON")
    pf.add_argument("--input", required=True)
    pf.add_argument("--format", choices=("csv", "geojson"), default=None)
    pf.add_argument("--out", required=True)
    pf.add_argument("--config", help="JSON configuration file")
    pf.add_argument("--k", default=None, help="cluster count (integer or 'auto')")
    pf.add_argument("--classifier", choices=("gbt", "logistic"), default=None)
    pf.add_argument("--seed", type=int, default=None)
    ps = model_sub.add_parser("show", help="print a model summary")
    ps.add_argument("--model", required=True)
    return parser


def _parse_rates(text: str) -> list[float]:
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"--rates: expected start:stop:step, got {text!r}")
        start, stop, step = (float(p) for p in parts)
        if step <= 0:
            raise ConfigError("--rates: step must be positive")
        count = int(round((stop - start) / step)) + 1
        rates = [round(start + i * step, 10) for i in range(count)]
        return [r for r in rates if r <= stop + 1e-12]
    return [float(p) for p in text.split(",") if p.strip()]


def _load_config(args, overrides: dict) -> RunConfig:
    if getattr(args, "config", None):
        return RunConfig.from_file(args.config, overrides)
    return RunConfig(overrides)


def _sm_overrides(args) -> dict:
    sm: dict = {}
    if getattr(args, "k", None) is not None:
        sm["k"] = args.k if args.k == "auto" else int(args.k)
    if getattr(args, "classifier", None) is not None:
        sm["classifier"] = args.classifier
    return {"sm": sm} if sm else {}


def _cmd_synth(args) -> int:
    config = SynthConfig(
        n_blocks=args.n,
        n_regimes=args.regimes,
        spatial_scale=args.spatial_scale,
        seed=args.seed if args.seed is not None else _default_seed(),
    )
    table, labels = generate_city(config)
    save_table(args.out, table)
    if args.labels_out:
        with open(args.labels_out, "w") as handle:
            handle.write("block_id,regime\n")
            for rec, label in zip(table.records, labels):
                handle.write(f"{rec.id},{int(label)}\n")
    logger.info("wrote %d blocks to %s", len(table), args.out)
    return EXIT_OK


def _cmd_stats(args) -> int:
    table = load_table(args.input, args.format)
    report = stats_report(
        table,
        weights_k=args.weights_k,
        n_perm=args.n_perm,
        seed=args.seed if args.seed is not None else _default_seed(),
    )
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return EXIT_OK


def _run_method(method: str, table: BlockTable, config: RunConfig, seed: int):
    from .benchmark import BASE_KINDS, parse_method
    from ._seeds import mix_seed

    parts = parse_method(method, set(BASE_KINDS))
    preds = []
    for kind in parts:
        if kind == "idw":
            preds.append(idw_impute(table, power=float(config["idw"]["power"]), k=int(config["idw"]["k"])))
        elif kind == "sknn":
            preds.append(sknn_impute(table, k=int(config["sknn"]["k"])))
        elif kind == "sm":
            preds.append(sm_impute(table, config=config.sm_config(), seed=mix_seed(seed, 2, 0, 0)))
        elif kind == "smvnmf":
            preds.append(smvnmf_impute(table, config=config.nmf_config(seed=mix_seed(seed, 3, 0, 0))))
    if len(preds) == 1:
        return preds[0]
    return hybrid_impute(preds[0], preds[1], float(config["hybrid"]["alpha"]))


def _cmd_impute(args) -> int:
    overrides = _sm_overrides(args)
    if args.alpha is not None:
        overrides["hybrid"] = {"alpha": args.alpha}
    config = _load_config(args, overrides)
    seed = args.seed if args.seed is not None else _default_seed()
    table = load_table(args.input, args.format)
    if table.missing_positions().size == 0:
        logger.info("no missing targets; writing table unchanged")
    predictions = _run_method(args.method, table, config, seed) if table.missing_positions().size else {}
    import datetime

    provenance = {
        "tool": f"blockfill {__version__}",
        "method": args.method,
        "config_hash": config.config_hash(),
        "seed": seed,
        "n_imputed": len(predictions),
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    save_imputed(args.out, table, predictions, provenance)
    logger.info("imputed %d blocks -> %s", len(predictions), args.out)
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    overrides: dict = dict(_sm_overrides(args))
    if args.methods:
        overrides["methods"] = [m.strip() for m in args.methods.split(",") if m.strip()]
    if args.rates:
        overrides["rates"] = _parse_rates(args.rates)
    if args.reps is not None:
        overrides["reps"] = args.reps
    if args.seed is not None:
        overrides["seed"] = args.seed
    elif os.environ.get("SM_IMPUTE_SEED"):
        overrides["seed"] = _default_seed()
    if args.threads is not None:
        overrides["threads"] = args.threads
    if args.independent_mask:
        overrides["joint_mask"] = False
    config = _load_config(args, overrides)
    table = load_table(args.input, args.format)
    report = run_benchmark(table, config)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report.save_json(out_dir / "report.json")
    report.save_csv(out_dir / "report.csv")
    report.save_curves_csv(out_dir / "curves.csv")
    logger.info("report written to %s", out_dir)
    pooled_mae = {p["method"]: p["value"] for p in report.pooled if p["metric"] == "mae"}
    for method, value in sorted(pooled_mae.items(), key=lambda kv: (kv[1] is None, kv[1])):
        print(f"pooled mae  {method:12s} {value:.4f}" if value is not None else f"pooled mae  {method:12s} n/a")
    return EXIT_OK


def _cmd_model(args) -> int:
    if args.model_command == "fit":
        config = _load_config(args, _sm_overrides(args))
        seed = args.seed if args.seed is not None else _default_seed()
        table = load_table(args.input, args.format)
        sm = config.sm_config()
        cluster_model = fit_cluster_model(
            table, k=sm.k, seed=seed, restarts=sm.restarts, k_range=sm.k_range, max_iter=sm.max_iter
        )
        observed = table.observed_positions()
        pairs = np.column_stack([table.fsi[observed], table.gsi[observed]])
        labels = assign_clusters(cluster_model, pairs)
        clf = fit_classifier(
            build_feature_matrix(table, observed), labels, cluster_model.k,
            config=sm.classifier, seed=seed,
        )
        doc = {
            "tool": f"blockfill {__version__}",
            "config_hash": config.config_hash(),
            "seed": seed,
            "cluster_model": cluster_model.to_dict(),
            "classifier": clf.to_dict(),
        }
        Path(args.out).write_text(json.dumps(doc, sort_keys=True) + "\n")
        logger.info("model written to %s", args.out)
        return EXIT_OK
    if args.model_command == "show":
        doc = json.loads(Path(args.model).read_text())
        cm = doc["cluster_model"]
        print(f"clusters: k={cm['k']}  inertia={cm['inertia']:.6g}  seed={doc['seed']}")
        print(f"classifier: {doc['classifier']['kind']}  config_hash={doc['config_hash']}")
        print("cluster medians (fsi, gsi):")
        for i, med in enumerate(cm["medians"]):
            print(f"  {i}: ({med['fsi']:.4f}, {med['gsi']:.4f})")
        return EXIT_OK
    raise _UsageError("model: expected a subcommand (fit | show)")


def cli_main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(
            level=logging.DEBUG if getattr(args, "verbose", False) else logging.INFO,
            format="%(levelname)s %(name)s: %(message)s",
        )
        if args.command is None:
            raise _UsageError(parser.format_usage())
        handlers = {
            "synth": _cmd_synth,
            "stats": _cmd_stats,
            "impute": _cmd_impute,
            "evaluate": _cmd_evaluate,
            "model": _cmd_model,
        }
        return handlers[args.command](args)
    except _UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # argparse --version/--help
        return int(exc.code or 0)
    except (DataError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except BlockfillError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # pragma: no cover - defensive
        logging.getLogger("blockfill").exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
