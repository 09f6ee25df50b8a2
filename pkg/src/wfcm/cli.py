"""Command-line entry point.

Subcommands wire ingestion, fitting, inference, selection, sampling, and
the simulation experiments into reproducible runs. Every run writes its
outputs plus a manifest (config digest, input digest, seed, version) into
the output directory.

Exit codes: 0 success, 2 validation error, 3 numerical failure, 4 partial
results written.
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import os
import sys
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import replace
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .data import Dataset, ModelParams, ParamBounds
from .estimator import FitConfig, fit
from .exceptions import NumericalError, ValidationError, WfcmError
from .experiments import (
    ExperimentConfig,
    consistency_experiment,
    normality_experiment,
)
from .inference import bootstrap, lrt_equal_centers
from .sampler import ChainConfig, mh_sample
from .selection import select_k


def _digest_bytes(payload: bytes):
    return hashlib.sha256(payload).hexdigest()


def _digest_file(path):
    return _digest_bytes(Path(path).read_bytes())


def _canonical(config):
    return json.dumps(config, sort_keys=True, default=str).encode("utf-8")


def write_manifest(out_dir, command, config, seed, input_paths):
    manifest = {
        "command": command,
        "config_digest": _digest_bytes(_canonical(config)),
        "seed": seed,
        "input_digest": {str(p): _digest_file(p) for p in input_paths},
        "tool_version": __version__,
        "timestamp_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    path = Path(out_dir) / "manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
    return manifest


def load_config(path):
    if path is None:
        return {}
    path = Path(path)
    text = path.read_bytes()
    if path.suffix.lower() == ".toml":
        return tomllib.loads(text.decode("utf-8"))
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(
            "invalid-config", f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc


def _default_seed(args, config):
    if args.seed is not None:
        return int(args.seed)
    if "seed" in config:
        return int(config["seed"])
    return int(os.environ.get("WFCM_SEED", "0"))


def _params_from_config(doc):
    try:
        return ModelParams.from_dict(doc)
    except KeyError as exc:
        raise ValidationError("invalid-config", f"params missing field {exc}") from exc


def _chain_from_config(doc):
    known = {
        "iterations",
        "burn_in_fraction",
        "local_step_sd",
        "jump_probability",
        "jump_scale",
        "thinning",
        "seed",
    }
    unknown = set(doc) - known
    if unknown:
        raise ValidationError("invalid-config", f"unknown chain fields {sorted(unknown)}")
    return ChainConfig(**doc)


def _fit_config(config, args, seed):
    doc = dict(config.get("fit", {}))
    if args.m_grid:
        doc["m_grid"] = tuple(args.m_grid)
    doc.setdefault("m_grid", (2.0,))
    doc["seed"] = seed
    if "proposal_components" in doc:
        doc["proposal_components"] = tuple(doc["proposal_components"])
    if "bounds" in doc:
        doc["bounds"] = ParamBounds(
            **{
                key: (np.asarray(val) if key == "center_box" else val)
                for key, val in doc["bounds"].items()
            }
        )
    doc["m_grid"] = tuple(doc["m_grid"])
    return FitConfig(**doc)


def _load_data(args):
    if not args.data:
        raise ValidationError("invalid-config", "--data is required for this command")
    return Dataset.from_csv(args.data), [args.data]


def _out_dir(args):
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args):
    config = load_config(args.config)
    seed = _default_seed(args, config)
    out = _out_dir(args)
    params = _params_from_config(config["params"])
    n = int(config["n"])
    chain = _chain_from_config(dict(config.get("chain", {})))
    chain = replace(chain, seed=seed)
    data, diagnostics = mh_sample(params, n, chain)
    data.to_csv(out / "dataset.csv")
    with open(out / "chain_diagnostics.json", "w", encoding="utf-8") as fh:
        json.dump(diagnostics, fh, indent=2)
    write_manifest(out, "simulate", config, seed, [args.config] if args.config else [])
    return 0


def cmd_fit(args):
    config = load_config(args.config)
    seed = _default_seed(args, config)
    out = _out_dir(args)
    data, inputs = _load_data(args)
    k = int(args.k if args.k is not None else config["k"])
    result = fit(data, k, _fit_config(config, args, seed))
    result.to_json(out / "fit.json")
    u = result.memberships.values
    frame = pd.DataFrame(u, columns=[f"u{j + 1}" for j in range(k)])
    frame["label"] = result.memberships.hard_labels() + 1
    frame.to_csv(out / "memberships.csv", index=False)
    pd.DataFrame([dict(rec) for rec in result.trace]).to_csv(out / "trace.csv", index=False)
    write_manifest(out, "fit", config, seed, inputs + ([args.config] if args.config else []))
    return 0


def cmd_bootstrap(args):
    config = load_config(args.config)
    seed = _default_seed(args, config)
    out = _out_dir(args)
    data, inputs = _load_data(args)
    k = int(args.k if args.k is not None else config["k"])
    B = int(args.B if args.B is not None else config.get("B", 200))
    alpha = float(args.alpha if args.alpha is not None else config.get("alpha", 0.05))
    report = bootstrap(
        data,
        k,
        _fit_config(config, args, seed),
        B=B,
        alpha=alpha,
        seed=seed,
        fix_m=bool(config.get("fix_m", False)),
        workers=args.threads,
    )
    report.to_json(out / "bootstrap.json")
    report.ci_table().to_csv(out / "ci_table.csv", index=False)
    write_manifest(out, "bootstrap", config, seed, inputs + ([args.config] if args.config else []))
    return 0


def cmd_lrt(args):
    config = load_config(args.config)
    seed = _default_seed(args, config)
    out = _out_dir(args)
    data, inputs = _load_data(args)
    k = int(args.k if args.k is not None else config["k"])
    pair = args.pair or config.get("pair")
    if not pair or len(pair) != 2:
        raise ValidationError("invalid-config", "pair must list two 1-based cluster indices")
    a, b = sorted(int(p) - 1 for p in pair)
    report = lrt_equal_centers(data, k, (a, b), _fit_config(config, args, seed))
    report.to_json(out / "lrt.json")
    write_manifest(out, "lrt", config, seed, inputs + ([args.config] if args.config else []))
    return 0


def cmd_select(args):
    config = load_config(args.config)
    seed = _default_seed(args, config)
    out = _out_dir(args)
    data, inputs = _load_data(args)
    k_values = args.k_range or config.get("k_values")
    m_values = args.m_grid or config.get("m_values", [2.0])
    if not k_values:
        raise ValidationError("invalid-config", "k_values (or --k-range) is required")
    grid = select_k(data, k_values, m_values, _fit_config(config, args, seed))
    grid.to_csv(out / "validity_grid.csv")
    grid.to_json(out / "validity_grid.json")
    write_manifest(out, "select", config, seed, inputs + ([args.config] if args.config else []))
    return 0


def _experiment_config(config, args, seed):
    truth = _params_from_config(config["truth"])
    chain = _chain_from_config(dict(config.get("chain", {})))
    return ExperimentConfig(
        truth=truth,
        n_values=tuple(int(n) for n in config["n_values"]),
        replicates=int(config["replicates"]),
        fit_config=_fit_config(config, args, seed),
        chain=chain,
        seed=seed,
        scale_chain=bool(config.get("scale_chain", True)),
    )


def cmd_consistency(args):
    config = load_config(args.config)
    seed = _default_seed(args, config)
    out = _out_dir(args)
    exp = _experiment_config(config, args, seed)
    per_replicate, summary, slopes = consistency_experiment(exp)
    per_replicate.to_csv(out / "consistency_replicates.csv", index=False)
    summary.to_csv(out / "consistency_summary.csv", index=False)
    with open(out / "consistency_slopes.json", "w", encoding="utf-8") as fh:
        json.dump(slopes, fh, indent=2)
    write_manifest(out, "consistency-experiment", config, seed,
                   [args.config] if args.config else [])
    failed = per_replicate["failed"].sum() if "failed" in per_replicate else 0
    return 4 if failed else 0


def cmd_normality(args):
    config = load_config(args.config)
    seed = _default_seed(args, config)
    out = _out_dir(args)
    exp = _experiment_config(config, args, seed)
    frames, ks_summary = normality_experiment(exp)
    for n, frame in frames.items():
        frame.to_csv(out / f"whitened_n{n}.csv", index=False)
    ks_summary.to_csv(out / "ks_summary.csv", index=False)
    with open(out / "ks_summary.json", "w", encoding="utf-8") as fh:
        json.dump(ks_summary.to_dict(orient="records"), fh, indent=2)
    write_manifest(out, "normality-experiment", config, seed,
                   [args.config] if args.config else [])
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="wfcm",
        description="Statistical weighted fuzzy c-means: fitting, inference, selection.",
    )
    parser.add_argument("--version", action="version", version=f"wfcm {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_data=False):
        p.add_argument("--config", help="TOML or JSON configuration file")
        p.add_argument("--data", help="headered CSV dataset" + ("" if needs_data else " (optional)"))
        p.add_argument("--k", type=int, help="number of clusters")
        p.add_argument("--m-grid", type=float, nargs="+", help="fuzziness grid")
        p.add_argument("--B", type=int, help="bootstrap replicates")
        p.add_argument("--alpha", type=float, help="significance level")
        p.add_argument("--seed", type=int, help="seed (default: WFCM_SEED env or 0)")
        p.add_argument("--threads", type=int, default=1, help="worker pool size")
        p.add_argument("--out-dir", default=".", help="output directory")

    specs = [
        ("simulate", cmd_simulate, "draw a synthetic dataset from the induced density"),
        ("fit", cmd_fit, "fit the model to a dataset"),
        ("bootstrap", cmd_bootstrap, "bootstrap confidence intervals and regions"),
        ("lrt", cmd_lrt, "likelihood-ratio test for equality of two centers"),
        ("select", cmd_select, "weighted Xie-Beni (k, m) selection"),
        ("consistency-experiment", cmd_consistency, "per-n error table and slopes"),
        ("normality-experiment", cmd_normality, "whitened estimates and KS summary"),
    ]
    for name, func, help_text in specs:
        p = sub.add_parser(name, help=help_text)
        common(p)
        if name == "lrt":
            p.add_argument("--pair", type=int, nargs=2, help="1-based cluster pair to test")
        if name == "select":
            p.add_argument("--k-range", type=int, nargs="+", help="candidate cluster counts")
        p.set_defaults(func=func)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error ({exc.code}): {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure ({exc.code}): {exc}", file=sys.stderr)
        return 3
    except (KeyError, FileNotFoundError) as exc:
        print(f"error (invalid-config): {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
