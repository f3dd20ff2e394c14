"""Command-line front end: config ingestion, dispatch, persistence and plot scripts."""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import rng
from .coeffalg import build_table
from .core import ExperimentConfig, ResultRecord, build_domain, load_config
from .disorder import make_disorder, sample_disorder
from .errors import BudgetExceeded, ChaosLabError, ConfigError, NotAvailable
from .expansion import (chaos_discrete, chaos_limit_coupled, partition_raw, partition_wick,
                        truncated_expansion)
from .models import make_model
from .plots import emit_plots
from . import verify

COMMANDS = ("coeffs", "partition", "expand", "chaos", "verify-a1", "verify-a2", "verify-a3",
            "remainder", "converge", "plots")


# ------------------------------------------------------------------ output helpers


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_csv(path: Path, header: Sequence[str], rows) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


def write_json(path: Path, data) -> Path:
    with open(path, "w") as fh:
        json.dump(_jsonable(data), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def update_manifest(out: Path, command: str, artifacts: list, config_hash: Optional[str],
                    seed: Optional[int], workers: int) -> Path:
    path = out / "manifest.json"
    data = {}
    if path.exists():
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError:
            data = {}
    runs = data.setdefault("runs", {})
    runs[command] = {
        "artifacts": sorted(p.name for p in artifacts),
        "config_hash": config_hash,
        "seed": seed,
        "workers": workers,
    }
    return write_json(path, data)


# ------------------------------------------------------------------ commands


def _domain_model(cfg: ExperimentConfig, delta: float):
    dom = build_domain(cfg.domain.d, cfg.box(), delta)
    return dom, make_model(cfg.model, dom, cfg.gamma)


def _spec(cfg: ExperimentConfig):
    d = cfg.disorder
    return make_disorder(d.kind, d.values, d.probs, d.m_max)


def cmd_coeffs(args, out: Path):
    spec = make_disorder(args.disorder, args.values, args.probs, max(args.mmax, 2))
    table = build_table(spec, args.mmax)
    csv_path = write_csv(out / "coeffs.csv", ["m", "l", "exact", "value"], table.rows())
    rep = {"command": "coeffs", "disorder": spec.to_dict(), "m_max": args.mmax,
           "growth_constant": spec.growth_constant,
           "row_abs_sum": {m: table.row_abs_sum(m) for m in range(4, args.mmax + 1)}}
    return [csv_path, write_json(out / "coeffs.json", rep)], None


def cmd_partition(cfg: ExperimentConfig, out: Path):
    spec = _spec(cfg)
    rows = []
    for i, delta in enumerate(cfg.deltas):
        dom, model = _domain_model(cfg, delta)
        lam = cfg.lambda_delta(delta)
        for r in range(cfg.replicas):
            seed = rng.derive_seed(cfg.seed, "omega", i, r)
            fld = sample_disorder(spec, dom, seed)
            sseed = rng.derive_seed(cfg.seed, "spins", i, r)
            kw = dict(method=cfg.options.method, seed=sseed, samples=cfg.options.spin_samples)
            zr = partition_raw(model, fld, lam, **kw)
            zw = partition_wick(model, fld, lam, spec, **kw)
            rows.append([delta, dom.n, lam, r, seed, zr.value, zw.value,
                         zw.stderr if zw.stderr is not None else "", zw.method])
    header = ["delta", "n_sites", "lambda", "replica", "seed", "z_raw", "z_wick", "z_wick_stderr", "method"]
    csv_path = write_csv(out / "partition.csv", header, rows)
    zw = np.array([r[6] for r in rows], dtype=float)
    agg = {"z_wick_mean": float(zw.mean()), "z_wick_se": float(zw.std(ddof=1) / np.sqrt(len(zw))) if len(zw) > 1 else 0.0}
    return [csv_path], agg


def cmd_expand(cfg: ExperimentConfig, out: Path):
    spec = _spec(cfg)
    rows, agg = [], {}
    for i, delta in enumerate(cfg.deltas):
        dom, model = _domain_model(cfg, delta)
        lam = cfg.lambda_delta(delta)
        seed = rng.derive_seed(cfg.seed, "omega", i, 0)
        fld = sample_disorder(spec, dom, seed)
        M = min(cfg.truncation_order, dom.n)
        br = truncated_expansion(model, fld, lam, spec, M, cfg.options.method,
                                 rng.derive_seed(cfg.seed, "spins", i, 0), cfg.options.spin_samples,
                                 cfg.options.subset_budget)
        for k, t, e, cum in br.rows():
            rows.append([delta, k, t, e, cum])
        agg[str(delta)] = {"remainder": br.remainder, "z_wick": br.z_wick, "truncated": br.truncated,
                           "method": br.method, "seed": seed}
    csv_path = write_csv(out / "expand.csv", ["delta", "k", "T_k", "E_k", "cumulative"], rows)
    return [csv_path], agg


def cmd_chaos(cfg: ExperimentConfig, out: Path):
    spec = _spec(cfg)
    rows, agg = [], {}
    for i, delta in enumerate(cfg.deltas):
        dom, model = _domain_model(cfg, delta)
        seed = rng.derive_seed(cfg.seed, "omega", i, 0)
        fld = sample_disorder(spec, dom, seed)
        M = min(cfg.truncation_order, dom.n)
        disc = chaos_discrete(model, fld, cfg.lambda_hat, M, cfg.options.subset_budget)
        try:
            incr = dom.delta ** (dom.d / 2) * np.asarray(fld.values)
            lim = chaos_limit_coupled(model, incr, cfg.lambda_hat, M, cfg.options.subset_budget).terms
        except NotAvailable:
            lim = np.full(M + 1, np.nan)
        for k in range(M + 1):
            rows.append([delta, k, disc.terms[k], lim[k]])
        agg[str(delta)] = {"discrete_total": float(disc.total), "limit_total": float(np.sum(lim)),
                           "seed": seed}
    csv_path = write_csv(out / "chaos.csv", ["delta", "k", "discrete", "limit_coupled"], rows)
    return [csv_path], agg


def cmd_verify_a1(cfg: ExperimentConfig, out: Path):
    rows = []
    seed = rng.derive_seed(cfg.seed, "a1")
    for delta in cfg.deltas:
        _, model = _domain_model(cfg, delta)
        for k in range(1, cfg.options.max_k + 1):
            rep = verify.check_a1(model, k, cfg.options.quadrature_nodes, seed)
            rows.append([delta, k, rep.nodes, rep.norm2, rep.norm2_se,
                         "" if rep.err2 is None else rep.err2, "" if rep.err2_se is None else rep.err2_se])
    header = ["delta", "k", "nodes", "norm2", "norm2_se", "err2", "err2_se"]
    return [write_csv(out / "verify-a1.csv", header, rows)], {"seed": seed}


def _m_list(cfg: ExperimentConfig):
    return cfg.options.m_list or list(range(0, cfg.options.max_k))


def _a2(cfg: ExperimentConfig):
    models = [_domain_model(cfg, d)[1] for d in cfg.deltas]
    return verify.check_a2(models, cfg.lambda_hat, _m_list(cfg), cfg.options.quadrature_nodes,
                           rng.derive_seed(cfg.seed, "a2"), cfg.options.max_k, cfg.options.a2_threshold)


def cmd_verify_a2(cfg: ExperimentConfig, out: Path):
    rep = _a2(cfg)
    rows = []
    for i, delta in enumerate(rep.deltas):
        for j, M in enumerate(rep.m_list):
            rows.append([delta, M, rep.tails[i][j]])
    for j, M in enumerate(rep.m_list):
        rows.append(["sup", M, rep.sup_tail[j]])
    csv_path = write_csv(out / "verify-a2.csv", ["delta", "M", "tail"], rows)
    return [csv_path], rep.to_dict()


def cmd_verify_a3(cfg: ExperimentConfig, out: Path):
    rows, reps = [], []
    seed = rng.derive_seed(cfg.seed, "a3")
    for delta in cfg.deltas:
        _, model = _domain_model(cfg, delta)
        rep = verify.check_a3(model, cfg.options.a3_tuples, 4, cfg.options.a3_max_power, seed)
        reps.append(rep)
        rows.append([delta, rep.estimate, rep.max_ratio, rep.evaluated, rep.skipped, rep.trivial])
    csv_path = write_csv(out / "verify-a3.csv",
                         ["delta", "C_estimate", "max_ratio", "evaluated", "skipped", "trivial"], rows)
    agg = {"diverging_C": verify.a3_trend(reps), "per_delta": [r.to_dict() for r in reps]}
    return [csv_path], agg


def cmd_remainder(cfg: ExperimentConfig, out: Path):
    spec = _spec(cfg)
    M = cfg.truncation_order
    mode = cfg.options.method
    rows, reps = [], []
    m_list = list(range(0, M + 2))
    for i, delta in enumerate(cfg.deltas):
        _, model = _domain_model(cfg, delta)
        rep = verify.remainder_diag(model, spec, cfg.lambda_hat, M, mode, cfg.options.pair_samples,
                                    rng.derive_seed(cfg.seed, "remainder", i),
                                    cfg.options.subset_budget, m_list)
        reps.append(rep)
        rows.append([delta, M, rep.lam, rep.s0, rep.s0_se, rep.s1, rep.s1_se,
                     "" if rep.r2 is None else rep.r2, rep.method])
    csv_path = write_csv(out / "remainder.csv",
                         ["delta", "M", "lambda", "S0", "S0_se", "S1", "S1_se", "ER2", "method"], rows)
    agg = {"reports": [r.to_dict() for r in reps], "predicted_min_exponent": reps[0].predicted_min_exponent}
    if len(reps) >= 2 and all(r.s1 > 0 for r in reps):
        agg["s1_slope"] = verify.fit_slope([r.delta for r in reps], [r.s1 for r in reps])
    return [csv_path], agg


def cmd_converge(cfg: ExperimentConfig, out: Path):
    a2 = _a2(cfg)
    M = a2.chosen_M if a2.chosen_M is not None else cfg.truncation_order
    rep = verify.convergence_study(cfg, M)
    rows = [[d, rep.distance[i], rep.distance_se[i], rep.zhat_mean[i], rep.zhat_var[i],
             rep.chaos_mean[i], rep.chaos_var[i], rep.ks[i], rep.ks_pvalue[i]]
            for i, d in enumerate(rep.deltas)]
    header = ["delta", "distance", "distance_se", "zhat_mean", "zhat_var", "chaos_mean", "chaos_var",
              "ks", "ks_pvalue"]
    csv_path = write_csv(out / "converge.csv", header, rows)
    agg = rep.to_dict()
    agg["a2_chosen_M"] = a2.chosen_M
    return [csv_path], agg


HANDLERS = {
    "partition": cmd_partition,
    "expand": cmd_expand,
    "chaos": cmd_chaos,
    "verify-a1": cmd_verify_a1,
    "verify-a2": cmd_verify_a2,
    "verify-a3": cmd_verify_a3,
    "remainder": cmd_remainder,
    "converge": cmd_converge,
}


# ------------------------------------------------------------------ entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="chaoslab", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--workers", type=int, default=None,
                        help="worker-count hint (default: $CHAOSLAB_WORKERS or 1)")
        sp.add_argument("-v", "--verbose", action="store_true")
        if name == "coeffs":
            sp.add_argument("--disorder", default="gaussian", choices=["gaussian", "rademacher", "tabulated"])
            sp.add_argument("--mmax", type=int, default=12)
            sp.add_argument("--values", type=float, nargs="+")
            sp.add_argument("--probs", type=float, nargs="+")
        elif name == "plots":
            sp.add_argument("reports", nargs="*", help="JSON report files")
        else:
            sp.add_argument("--config", required=True)
            sp.add_argument("--seed", type=int, default=None)
            sp.add_argument("--allow-irrelevant", action="store_true")
    return p


def _workers(arg: Optional[int]) -> int:
    if arg is not None:
        return max(1, arg)
    try:
        return max(1, int(os.environ.get("CHAOSLAB_WORKERS", "1")))
    except ValueError:
        return 1


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    workers = _workers(args.workers)
    try:
        if args.command == "plots":
            out = Path(args.out or ".")
            out.mkdir(parents=True, exist_ok=True)
            scripts = emit_plots(args.reports, out)
            if scripts:
                update_manifest(out, "plots", scripts, None, None, workers)
            return 0
        if args.command == "coeffs":
            out = Path(args.out or "out")
            out.mkdir(parents=True, exist_ok=True)
            arts, _ = cmd_coeffs(args, out)
            arts += emit_plots([arts[1]], out)
            update_manifest(out, "coeffs", arts, None, None, workers)
            return 0
        overrides = {"seed": args.seed}
        if args.allow_irrelevant:
            overrides["allow_irrelevant"] = True
        cfg = load_config(args.config, **overrides)
        out = Path(args.out or cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        arts, agg = HANDLERS[args.command](cfg, out)
        record = ResultRecord(args.command, json.loads(cfg.canonical_json()), cfg.seed, aggregates=agg or {})
        body = record.to_dict()
        body["config_hash"] = cfg.config_hash()
        rep_path = write_json(out / f"{args.command}.json", body)
        arts.append(rep_path)
        arts += emit_plots([rep_path], out)
        update_manifest(out, args.command, arts, cfg.config_hash(), cfg.seed, workers)
        if args.verbose:
            print(f"wrote {len(arts)} artifacts to {out}")
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except BudgetExceeded as exc:
        print(f"error: {exc} (max admissible order {exc.max_order})", file=sys.stderr)
        return 1
    except (ChaosLabError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
