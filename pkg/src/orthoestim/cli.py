"""Command-line pipeline: simulate, preprocess, fit either estimator, kfold.

Every run resolves its options as CLI > config file > defaults (with the
ORTHOESTIM_SEED environment variable as the default-seed fallback), executes,
and writes exactly one manifest.json beside its outputs. Re-running via
--from-manifest replays the stored options and reproduces the data outputs
byte for byte.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import replace

import numpy as np

from . import dataset as ds
from . import dml as dml_mod
from . import joint as joint_mod
from . import synth
from .copulas import CopulaFamily
from .errors import BadFoldCount, OrthoestimError, SchemaError
from .forest import ForestConfig, default_outcome_config, default_policy_config

FORMAT_VERSIONS = {
    "manifest": "manifest/1",
    "jointfit": "jointfit/1",
    "dml": "dml/1",
    "dgp": "dgp/1",
    "forest": "forest/1",
}


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_text(path, text) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _default_seed():
    env = os.environ.get("ORTHOESTIM_SEED")
    return int(env) if env else None


def _seed_or_zero(options: dict) -> int:
    return int(options["seed"]) if options.get("seed") is not None else 0


def _resolve(cli_args: dict, config: dict, defaults: dict) -> dict:
    options = dict(defaults)
    for key, value in config.items():
        if key in options:
            options[key] = value
    for key, value in cli_args.items():
        if value is not None and key in options:
            options[key] = value
    return options


def _manifest(command, options, inputs, outputs, started, derived=None) -> dict:
    manifest = {
        "format": FORMAT_VERSIONS["manifest"],
        "command": command,
        "args": options,
        "seed": options.get("seed"),
        "inputs": sorted(str(p) for p in inputs),
        "outputs": sorted(str(p) for p in outputs),
        "wall_clock_s": round(time.perf_counter() - started, 6),
        "artifact_formats": FORMAT_VERSIONS,
    }
    if derived:
        manifest["derived"] = derived
    return manifest


def _learner_config(raw, fallback: ForestConfig) -> ForestConfig:
    if raw is None:
        return fallback
    if isinstance(raw, ForestConfig):
        return raw
    known = {
        "n_trees", "min_samples_split", "min_samples_leaf",
        "max_features", "max_depth", "bootstrap", "seed",
    }
    bad = set(raw) - known
    if bad:
        raise ValueError(f"unknown learner option(s) {sorted(bad)}")
    return replace(fallback, **raw)


# ---------------------------------------------------------------------------
# Commands (each takes the resolved options dict, returns output paths)
# ---------------------------------------------------------------------------

def cmd_simulate(options: dict) -> list:
    started = time.perf_counter()
    out = options["out"]
    os.makedirs(out, exist_ok=True)
    if options.get("preset"):
        n = int(options["n"]) if options.get("n") is not None else 1000
        spec = synth.make_preset(options["preset"], n, _seed_or_zero(options))
    elif options.get("spec_file"):
        with open(options["spec_file"], encoding="utf-8") as fh:
            raw = json.load(fh)
        spec = _spec_from_report(raw, options)
    else:
        raise ValueError("simulate needs --preset or --spec-file")

    truth_report = synth.spec_to_report(spec)
    if isinstance(spec, synth.DmlDgpSpec):
        data, _ = synth.generate_dml_data(spec)
    else:
        data = synth.generate_copula_data(spec)

    data_path = os.path.join(out, "data.csv")
    truth_path = os.path.join(out, "truth.json")
    if data.n == 0:
        ds.write_numeric_csv(data_path, data.schema.names, data.rows)
    else:
        data.to_csv(data_path)
    _write_json(truth_path, truth_report)
    outputs = [data_path, truth_path]
    manifest_path = os.path.join(out, "manifest.json")
    _write_json(manifest_path, _manifest("simulate", options,
                                         [options.get("spec_file")] if options.get("spec_file") else [],
                                         outputs, started))
    return outputs + [manifest_path]


def _spec_from_report(raw: dict, options: dict):
    kind = raw.get("kind")
    n = int(options["n"]) if options.get("n") is not None else int(raw["n"])
    seed = int(options["seed"]) if options.get("seed") is not None else int(raw["seed"])
    if kind == "partially-linear":
        return synth.DmlDgpSpec(
            alpha_true=float(raw["alpha_true"]),
            g_form=raw.get("g_form", "sine-quadratic"),
            f_form=raw.get("f_form", "sine-quadratic"),
            confounding_strength=float(raw.get("confounding_strength", 1.0)),
            noise_sd=float(raw.get("noise_sd", 1.0)),
            w_dim=int(raw.get("w_dim", 5)),
            n=n,
            seed=seed,
        )
    if kind == "copula-joint":
        return synth.CopulaDgpSpec(
            beta=tuple(raw["beta"]),
            gamma=tuple(raw["gamma"]),
            deltas=tuple(raw["deltas"]),
            family=CopulaFamily(raw["family"], raw.get("theta")),
            n=n,
            seed=seed,
        )
    raise ValueError(f"unknown spec kind {kind!r}")


def cmd_preprocess(options: dict) -> list:
    started = time.perf_counter()
    out = options["out"]
    os.makedirs(out, exist_ok=True)
    header, matrix = ds.read_numeric_csv(options["data"])
    columns = {name: matrix[:, j] for j, name in enumerate(header)}
    order = list(header)
    derived = {}

    def put(name, values):
        if name not in columns:
            order.append(name)
        columns[name] = np.asarray(values, dtype=np.float64)

    for item in options.get("jenks") or []:
        col, _, classes = item.partition(":")
        if not classes:
            raise ValueError(f"--jenks wants col:classes, got {item!r}")
        if col not in columns:
            raise SchemaError(f"column {col!r} not in {options['data']}")
        breaks = ds.jenks_breaks(columns[col], int(classes))
        put(f"{col}_class", ds.assign_classes(columns[col], breaks))
        derived.setdefault("jenks_breaks", {})[col] = [float(b) for b in breaks]

    for item in options.get("wait_categories") or []:
        col, _, dest = item.partition(":")
        dest = dest or "wait_cat"
        if col not in columns:
            raise SchemaError(f"column {col!r} not in {options['data']}")
        put(dest, ds.discretize_wait(columns[col]))
        derived.setdefault("wait_cutoffs", {})[col] = [5.0, 20.0]

    for item in options.get("minmax") or []:
        col, _, group = item.partition("/")
        if col not in columns:
            raise SchemaError(f"column {col!r} not in {options['data']}")
        groups = None
        if group:
            if group not in columns:
                raise SchemaError(f"group column {group!r} not in {options['data']}")
            groups = columns[group]
        put(f"{col}_norm", ds.min_max_normalize(columns[col], groups))

    out_path = os.path.join(out, "preprocessed.csv")
    stacked = np.column_stack([columns[name] for name in order])
    ds.write_numeric_csv(out_path, order, stacked)
    manifest_path = os.path.join(out, "manifest.json")
    _write_json(manifest_path, _manifest("preprocess", options, [options["data"]],
                                         [out_path], started, derived=derived))
    return [out_path, manifest_path]


def _copula_fit_schema(spec_dict):
    """Typed schema for the columns a joint fit touches.

    The joint fit addresses columns by name; outcome/policy roles here only
    satisfy schema validation (the ordinal wait column is the substantive
    outcome, the binary stress column stands in as the policy slot).
    """
    used = ([spec_dict["stress_outcome"], spec_dict["wait_outcome"]]
            + list(spec_dict["stress_columns"]) + list(spec_dict["wait_columns"]))
    k = int(spec_dict.get("k_levels", 3))
    cats = tuple(float(v) for v in range(1, k + 1))
    cols = []
    seen = set()
    for name in used:
        if name in seen:
            continue
        seen.add(name)
        if name == spec_dict["wait_outcome"]:
            cols.append(ds.Column(name, "ordinal", "outcome", categories=cats))
        elif name == spec_dict["stress_outcome"]:
            cols.append(ds.Column(name, "binary", "policy"))
        else:
            cols.append(ds.Column(name, "continuous", "covariate"))
    return ds.VariableSchema(tuple(cols))


def cmd_fit_copula(options: dict) -> list:
    started = time.perf_counter()
    out = options["out"]
    os.makedirs(out, exist_ok=True)
    with open(options["spec"], encoding="utf-8") as fh:
        spec_dict = json.load(fh)
    for key in ("stress_outcome", "wait_outcome", "stress_columns", "wait_columns"):
        if key not in spec_dict:
            raise ValueError(f"fit spec file missing {key!r}")
    families = options["families"]
    if isinstance(families, str):
        families = [f.strip() for f in families.split(",") if f.strip()]
    if not families:
        raise ValueError("need at least one copula family")

    schema = _copula_fit_schema(spec_dict)
    data = ds.load_csv(options["data"], schema)
    jspec = joint_mod.JointSpec(
        stress_outcome=spec_dict["stress_outcome"],
        wait_outcome=spec_dict["wait_outcome"],
        stress_columns=tuple(spec_dict["stress_columns"]),
        wait_columns=tuple(spec_dict["wait_columns"]),
        family=CopulaFamily(families[0]),
        k_levels=int(spec_dict.get("k_levels", 3)),
    )
    rows = joint_mod.compare_families(jspec, data, families)

    outputs = []
    failures = []
    for row in rows:
        if row.fit is None:
            failures.append(f"{row.family}: {row.error}")
            continue
        path = os.path.join(out, f"jointfit_{row.family}.json")
        _write_json(path, joint_mod.fit_to_report(row.fit))
        outputs.append(path)

    csv_lines = ["family,loglik,bic,theta,converged,error"]
    txt_lines = [f"{'family':<10}{'loglik':>14}{'bic':>14}{'theta':>10}  converged"]
    for row in rows:
        if row.fit is not None:
            theta = "" if row.fit.theta is None else f"{row.fit.theta:.6g}"
            csv_lines.append(
                f"{row.family},{row.fit.loglik!r},{row.fit.bic!r},{theta},{row.fit.converged},"
            )
            txt_lines.append(
                f"{row.family:<10}{row.fit.loglik:>14.4f}{row.fit.bic:>14.4f}"
                f"{theta:>10}  {'yes' if row.fit.converged else 'no'}"
            )
        else:
            csv_lines.append(f"{row.family},,,,,{row.error}")
            txt_lines.append(f"{row.family:<10}{'fit failed: ' + row.error:>40}")
    ranking_csv = os.path.join(out, "ranking.csv")
    ranking_txt = os.path.join(out, "ranking.txt")
    _write_text(ranking_csv, "\n".join(csv_lines) + "\n")
    _write_text(ranking_txt, "\n".join(txt_lines) + "\n")
    outputs += [ranking_csv, ranking_txt]

    manifest_path = os.path.join(out, "manifest.json")
    _write_json(manifest_path, _manifest("fit-copula", options,
                                         [options["data"], options["spec"]],
                                         outputs, started))
    for line in failures:
        print(f"fit failed: {line}", file=sys.stderr)
    if len(failures) == len(rows):
        raise OrthoestimError("all copula family fits failed")
    return outputs + [manifest_path]


def cmd_fit_dml(options: dict) -> list:
    started = time.perf_counter()
    out = options["out"]
    os.makedirs(out, exist_ok=True)
    header, _ = ds.read_numeric_csv(options["data"])
    outcome = options["outcome"]
    policy = options["policy"]
    if not outcome or not policy:
        raise ValueError("fit-dml needs --outcome and --policy column names")
    confounders = options.get("confounders")
    if isinstance(confounders, str):
        confounders = [c.strip() for c in confounders.split(",") if c.strip()]
    if not confounders:
        confounders = [name for name in header if name not in (outcome, policy)]
    cols = [ds.Column(outcome, "continuous", "outcome"),
            ds.Column(policy, "binary", "policy")]
    cols += [ds.Column(name, "continuous", "covariate") for name in confounders]
    data = ds.load_csv(options["data"], ds.VariableSchema(tuple(cols)))

    k_folds = int(options["k_folds"])
    if k_folds < 2 or k_folds > data.n:
        raise BadFoldCount(k_folds, data.n)
    seed = _seed_or_zero(options)
    config = dml_mod.DmlConfig(
        outcome_learner=_learner_config(options.get("outcome_learner"),
                                        default_outcome_config(seed)),
        policy_learner=_learner_config(options.get("policy_learner"),
                                       default_policy_config(seed)),
        k_folds=k_folds,
        confidence_level=float(options["confidence_level"]),
        seed=seed,
    )
    est = dml_mod.run_dml(data, config, n_threads=int(options["threads"]))
    report = dml_mod.estimate_to_report(est)
    report["naive_alpha"] = dml_mod.naive_alpha(data)
    report["outcome"] = outcome
    report["policy"] = policy
    report["confounders"] = list(confounders)

    if options.get("check_truth"):
        truth_path = options["check_truth"]
        if truth_path is True or truth_path == "auto":
            truth_path = os.path.join(os.path.dirname(os.path.abspath(options["data"])),
                                      "truth.json")
        with open(truth_path, encoding="utf-8") as fh:
            truth = json.load(fh)
        alpha_true = float(truth["alpha_true"])
        report["alpha_true"] = alpha_true
        report["truth_covered"] = bool(est.ci_low <= alpha_true <= est.ci_high)

    json_path = os.path.join(out, "dml.json")
    _write_json(json_path, report)
    txt_path = os.path.join(out, "dml.txt")
    _write_text(txt_path, _dml_table(est, policy, report))
    outputs = [json_path, txt_path]
    manifest_path = os.path.join(out, "manifest.json")
    _write_json(manifest_path, _manifest("fit-dml", options, [options["data"]],
                                         outputs, started))
    return outputs + [manifest_path]


def _dml_table(est, policy, report) -> str:
    lines = [
        f"{'Parameter':<14}{'Value':>12}{'Standard error':>18}  Confidence interval",
        f"{policy:<14}{est.alpha:>12.4f}{est.std_error:>18.4f}  "
        f"[{est.ci_low:.4f}, {est.ci_high:.4f}]",
        "",
        "Diagnostics",
        f"  moment cost at solution : {est.cost:.6e}",
        f"  residual sum of squares : {est.rss:.6f}",
        f"  per-fold estimates      : "
        + ", ".join(f"{a:.4f}" for a in est.per_fold_alphas),
        f"  naive difference in means: {report['naive_alpha']:.4f}",
        f"  n = {est.n}, k_folds = {est.k_folds}, "
        f"confidence level = {est.confidence_level}",
    ]
    if "truth_covered" in report:
        lines.append(f"  truth covered by CI     : {report['truth_covered']} "
                     f"(alpha_true = {report['alpha_true']})")
    return "\n".join(lines) + "\n"


def cmd_kfold(options: dict) -> list:
    started = time.perf_counter()
    out = options["out"]
    os.makedirs(out, exist_ok=True)
    header, matrix = ds.read_numeric_csv(options["data"])
    assignment = ds.kfold_split(matrix.shape[0], int(options["k"]), _seed_or_zero(options))
    folds_path = os.path.join(out, "folds.csv")
    assignment.write_csv(folds_path)
    manifest_path = os.path.join(out, "manifest.json")
    _write_json(manifest_path, _manifest("kfold", options, [options["data"]],
                                         [folds_path], started))
    return [folds_path, manifest_path]


DISPATCH = {
    "simulate": cmd_simulate,
    "preprocess": cmd_preprocess,
    "fit-copula": cmd_fit_copula,
    "fit-dml": cmd_fit_dml,
    "kfold": cmd_kfold,
}

DEFAULTS = {
    "simulate": {"preset": None, "spec_file": None, "n": None, "seed": None, "out": "."},
    "preprocess": {"data": None, "jenks": None, "wait_categories": None,
                   "minmax": None, "out": "."},
    "fit-copula": {"data": None, "spec": None, "families": "frank,fgm,gaussian,product",
                   "seed": None, "out": "."},
    "fit-dml": {"data": None, "outcome": None, "policy": None, "confounders": None,
                "k_folds": 5, "confidence_level": 0.95, "threads": None,
                "seed": None, "check_truth": None, "out": ".",
                "outcome_learner": None, "policy_learner": None},
    "kfold": {"data": None, "k": 5, "seed": None, "out": "."},
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="orthoestim",
        description="Joint copula fits and debiased policy-effect estimation",
    )
    parser.add_argument("--from-manifest", help="re-run the command stored in a manifest")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("simulate", help="generate a synthetic dataset with ground truth")
    p.add_argument("--preset", help=f"one of {', '.join(synth.PRESET_NAMES)}")
    p.add_argument("--spec-file", dest="spec_file", help="dgp/1 JSON spec")
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--config")
    p.add_argument("--out")

    p = sub.add_parser("preprocess", help="append discretized/normalized columns")
    p.add_argument("--data", required=True)
    p.add_argument("--jenks", action="append", metavar="COL:CLASSES")
    p.add_argument("--wait-categories", dest="wait_categories", action="append",
                   metavar="COL[:DEST]")
    p.add_argument("--minmax", action="append", metavar="COL[/GROUPCOL]")
    p.add_argument("--config")
    p.add_argument("--out")

    p = sub.add_parser("fit-copula", help="fit copula families and rank by BIC")
    p.add_argument("--data", required=True)
    p.add_argument("--spec", required=True, help="JSON naming outcome and covariate columns")
    p.add_argument("--families", help="comma-separated family names")
    p.add_argument("--seed", type=int)
    p.add_argument("--config")
    p.add_argument("--out")

    p = sub.add_parser("fit-dml", help="cross-fitted policy-effect estimate")
    p.add_argument("--data", required=True)
    p.add_argument("--outcome")
    p.add_argument("--policy")
    p.add_argument("--confounders", help="comma-separated; default: all other columns")
    p.add_argument("--k-folds", dest="k_folds", type=int)
    p.add_argument("--confidence-level", dest="confidence_level", type=float)
    p.add_argument("--threads", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--check-truth", dest="check_truth", nargs="?", const="auto",
                   help="compare against a truth.json sidecar")
    p.add_argument("--config")
    p.add_argument("--out")

    p = sub.add_parser("kfold", help="export a deterministic fold assignment")
    p.add_argument("--data", required=True)
    p.add_argument("--k", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--config")
    p.add_argument("--out")
    return parser


def _options_from_args(command: str, args: argparse.Namespace) -> dict:
    config = {}
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            config = json.load(fh)
    cli_args = {key: getattr(args, key) for key in DEFAULTS[command]
                if hasattr(args, key)}
    options = _resolve(cli_args, config, DEFAULTS[command])
    if options.get("seed") is None:
        options["seed"] = _default_seed()
    if "threads" in options and options.get("threads") is None:
        options["threads"] = os.cpu_count() or 1
    return options


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.from_manifest:
            with open(args.from_manifest, encoding="utf-8") as fh:
                manifest = json.load(fh)
            command = manifest["command"]
            if command not in DISPATCH:
                raise ValueError(f"manifest names unknown command {command!r}")
            options = manifest["args"]
        else:
            command = args.command
            if command is None:
                parser.print_help()
                return 2
            options = _options_from_args(command, args)
        DISPATCH[command](options)
        return 0
    except OrthoestimError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
