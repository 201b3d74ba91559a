"""``qawa`` command-line entry point.

Commands::

    qawa ingest PRICES.csv --out spec.json [--lam 0.5]
    qawa synthetic --rho 0.7 --assets 4 --days 252 [--seed N] --out prices.csv
    qawa run --config run.json [--seed N] [--out DIR] [--shots N]

Exit codes: 0 success, 2 input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import experiments as ex
from .config import RunConfig, load_config, resolve_seed
from .distlearn import partition_learn
from .errors import InputError, NumericalError
from .oracle import QawaOracle, TargetSpec, qawa_energy, train
from .problem import (
    PortfolioSpec,
    approximation_ratio,
    log_returns,
    portfolio_from_returns,
    read_price_csv,
    standardize,
    synthetic_portfolio,
    synthetic_prices,
    write_price_csv,
)
from .qaoa import optimize_qaoa
from .simcore import RNG_ALGORITHM, RngStream

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3


def cmd_ingest(prices_csv, out, lam: float = 0.5) -> dict:
    dates, tickers, prices = read_price_csv(prices_csv)
    r = log_returns(prices, tickers)
    standardize(r)  # raises on zero-variance series
    spec = portfolio_from_returns(r, lam)
    d = {**spec.to_dict(), "days": int(r.returns.shape[1])}  # return observations
    Path(out).write_text(ex.dumps(d), encoding="utf-8")
    return d


def cmd_synthetic(rho: float, assets: int, days: int, seed: int, out) -> None:
    dates, tickers, prices = synthetic_prices(rho, assets, days, RngStream(seed))
    write_price_csv(out, dates, tickers, prices, header_comment=f"rho={rho}, assets={assets}, days={days}, seed={seed}")


# --- run -------------------------------------------------------------------


def _with_shots(cfg: RunConfig, shots: int | None) -> RunConfig:
    if shots is None:
        return cfg
    if shots < 1:
        raise InputError("shots must be positive")
    st = lambda tc: replace(tc, shots=shots)  # noqa: E731
    return replace(
        cfg,
        shots=shots,
        qawa=replace(cfg.qawa, training=st(cfg.qawa.training)),
        benchmark=replace(cfg.benchmark, training=st(cfg.benchmark.training)),
        distributed=replace(cfg.distributed, settings=replace(cfg.distributed.settings,
                                                              training=st(cfg.distributed.settings.training))),
        validation=replace(cfg.validation, training=st(cfg.validation.training), posterior_shots=shots),
    )


def _problem(cfg: RunConfig, rng):
    pb = cfg.problem
    if pb.spec:
        try:
            d = json.loads(Path(pb.spec).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot load portfolio spec {pb.spec}: {exc}") from None
        spec = PortfolioSpec.from_dict(d)
    else:
        spec = synthetic_portfolio(pb.n, rng, days=pb.days, lam=pb.lam)
    return spec, *ex.normalized_ising(spec)


def _run_qaoa(cfg, rng, out: Path, h: str, seed: int) -> dict:
    spec, ising, e = _problem(cfg, rng.child(0))
    q = optimize_qaoa(ising, cfg.qaoa.p, cfg.qaoa.optimizer, rng.child(1))
    lo, hi = float(e.min()), float(e.max())
    ex.write_csv(out / "qaoa_trace.csv", ["iter", "energy"], list(enumerate(q.trace)), h, seed)
    return {"params": q.params.to_dict(), "energy": q.energy, "optimum": lo, "worst": hi,
            "ratio": approximation_ratio(q.energy, lo, hi), "evaluations": q.evaluations}


def _run_train(cfg, rng, out: Path, h: str, seed: int) -> dict:
    spec, ising, e = _problem(cfg, rng.child(0))
    q = optimize_qaoa(ising, cfg.qaoa.p, cfg.qaoa.optimizer, rng.child(1))
    tc = cfg.qawa.training
    oracle = QawaOracle(ising, q.params, coin_theta=cfg.qawa.coin_theta, coin_f=tc.coin_f)
    if cfg.qawa.target is None:
        target = TargetSpec(0.0, "brute-force-alignment")
    else:
        target = TargetSpec(float(cfg.qawa.target), "user-supplied")
    oracle, trace = train(oracle, target, tc, rng.child(2))
    lo, hi = float(e.min()), float(e.max())
    e_qawa = qawa_energy(oracle)
    ex.write_csv(out / "train_trace.csv", ["iter", "loss", "best_loss"],
                 [(t, a, b) for t, (a, b) in enumerate(zip(trace.losses, trace.best_losses))], h, seed)
    return {
        "qaoa": {"params": q.params.to_dict(), "energy": q.energy, "ratio": approximation_ratio(q.energy, lo, hi)},
        "qawa": {"weights": oracle.weights.tolist(), "sign_mask": np.asarray(oracle.signs < 0).tolist(),
                 "energy": e_qawa, "ratio": approximation_ratio(e_qawa, lo, hi),
                 "final_loss": trace.losses[-1], "converged_at": trace.converged_at},
        "optimum": lo,
        "worst": hi,
    }


def _run_benchmark(cfg, rng, out: Path, h: str, seed: int) -> dict:
    res = ex.run_benchmark(cfg=cfg.benchmark, rng=rng)
    ex.write_csv(out / "benchmark.csv", ex.BENCHMARK_HEADER, ex.benchmark_rows(res), h, seed)
    keys = ["n", "seed", "qaoa", "qawa", "random", "optimum_ratio", "qaoa_energy", "qawa_energy", "optimum", "worst"]
    ex.write_csv(out / "benchmark_instances.csv", keys, ([r[k] for k in keys] for r in res["instances"]), h, seed)
    return {"summary": res["summary"]}


def _run_copula(cfg, rng, out: Path, h: str, seed: int) -> dict:
    res = ex.run_copula_experiment(cfg.copula, rng)
    ex.write_csv(out / "copula_trace.csv", ["iter", "kl", "distance"], ex.copula_trace_rows(res), h, seed)
    return {k: v for k, v in res.items() if k != "trace"}


def _run_fig4(cfg, rng, out: Path, h: str, seed: int) -> dict:
    att = ex.run_attenuation_analysis(cfg.experiment, rng.child(0))
    var = ex.run_variance_analysis(cfg.experiment, rng.child(1))
    dec = ex.run_depth_decay(cfg.experiment, rng.child(2))
    ex.write_csv(out / "fig4a.csv", ["m", "analytic", "measured", "sigma"],
                 ([r["m"], r["analytic"], r["measured"], r["sigma"]] for r in att), h, seed)
    ex.write_csv(out / "fig4b.csv", ["w", "n", "measured", "predicted", "sigma"],
                 ([r["w"], r["n"], r["measured"], r["predicted"], r["sigma"]] for r in var), h, seed)
    ex.write_csv(out / "fig4c.csv", ["xi", "depth", "mean", "std"],
                 ([r["xi"], r["depth"], r["mean"], r["std"]] for r in dec["rows"]), h, seed)
    return {"decay_fits": dec["fits"], "variance_statistic": ex.VARIANCE_STATISTIC}


def _run_validate(cfg, rng, out: Path, h: str, seed: int) -> dict:
    report, extras = ex.run_validation(cfg.validation, rng)
    (out / "validation.json").write_text(report.to_json() + "\n", encoding="utf-8")
    return {"report": report.to_dict(), "checks": {
        "posterior_exceeds_prior": report.posterior_exceeds_prior,
        "weights_recovered": report.weights_recovered,
        "invariance_satisfied": report.invariance_satisfied,
        "bound_satisfied": report.bound_satisfied,
    }, **extras}


def _run_distributed(cfg, rng, out: Path, h: str, seed: int) -> dict:
    spec, ising, _ = _problem(cfg, rng.child(0))
    d = cfg.distributed
    res = partition_learn(ising, d.m, d.settings, rng.child(1), d.subsets)
    (out / "distributed.json").write_text(res.to_json() + "\n", encoding="utf-8")
    return {"converged": res.converged, "total_loss": res.total_loss, "workers": len(res.reports)}


RUNNERS = {
    "qaoa": _run_qaoa,
    "train": _run_train,
    "benchmark": _run_benchmark,
    "copula": _run_copula,
    "fig4": _run_fig4,
    "validate": _run_validate,
    "distributed": _run_distributed,
}


def cmd_run(config, seed: int | None = None, out=None, shots: int | None = None) -> Path:
    cfg = load_config(config)
    cfg = _with_shots(cfg, shots if shots is not None else cfg.shots)
    seed = resolve_seed(seed, cfg.seed)
    cfg = replace(cfg, seed=seed)
    out = Path(out if out is not None else cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    hashed = {k: v for k, v in cfg.to_dict().items() if k != "out"}
    h = ex.config_hash(hashed)
    result = RUNNERS[cfg.command](cfg, RngStream(seed), out, h, seed)
    summary = {"command": cfg.command, "config_hash": h, "seed": seed, "rng": RNG_ALGORITHM,
               "config": hashed, "result": result}
    (out / "summary.json").write_text(ex.dumps(summary), encoding="utf-8")
    return out


# --- entry point -----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qawa", description="Weighted-sum walk oracle simulations")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="price CSV -> portfolio spec JSON")
    p.add_argument("prices")
    p.add_argument("--out", required=True)
    p.add_argument("--lam", type=float, default=0.5)

    p = sub.add_parser("synthetic", help="equicorrelated synthetic price CSV")
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--assets", type=int, default=4)
    p.add_argument("--days", type=int, default=252)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)

    p = sub.add_parser("run", help="run a configured experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--shots", type=int)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "ingest":
            cmd_ingest(args.prices, args.out, args.lam)
        elif args.command == "synthetic":
            cmd_synthetic(args.rho, args.assets, args.days, resolve_seed(args.seed, None), args.out)
        else:
            out = cmd_run(args.config, args.seed, args.out, args.shots)
            print(f"wrote {out}")
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        if exc.trace:
            tail = ", ".join(f"{v:.6g}" for v in list(exc.trace)[-10:])
            print(f"trace (last values): {tail}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
