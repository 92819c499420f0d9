"""Batch command surface: symbol-file I/O, fitting and divergence reports,
constrained-entropy solving, MI sweeps, and training orchestration.

Every command is a pure function of its inputs, flags, and seed: reports are
JSON with explicit units on every numeric result and reproduce byte-for-byte
apart from the timestamp field; sidecar CSVs reproduce exactly. Exit codes:
0 success, 2 input/config error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .batch import SymbolBatch
from .channel import ChannelConfig, awgn_capacity, mutual_information
from .codec import (
    CodecConfig,
    SourceRegime,
    SourceSpec,
    TrainState,
    entropy_variability_experiment,
    final_symbols,
    train,
)
from .dist import TailModel, sample
from .errors import DivergenceError, InputError, NumericError
from .estimate import KdeMode, fit_nu, kde_build, kde_kl, nll, qq_data
from .maxent import PayloadParams, verify_proposition1

_MODEL_HELP = "gaussian | cauchy | student_t:<nu>  (e.g. student_t:3.5)"


def _parse_model(text: str) -> TailModel:
    name = text.strip().lower()
    if name == "gaussian":
        return TailModel.gaussian()
    if name == "cauchy":
        return TailModel.cauchy()
    if name.startswith("student_t:"):
        try:
            nu = float(name.split(":", 1)[1])
        except ValueError:
            raise InputError(f"bad student_t degrees of freedom in {text!r}")
        return TailModel.student_t(nu)
    raise InputError(f"unknown model {text!r}; expected {_MODEL_HELP}")


def _quantity(value, unit: str) -> dict:
    return {"value": value, "unit": unit}


def write_symbol_file(path: str | Path, values: np.ndarray) -> None:
    """CSV with header dim_0..dim_{M-1}, one row per sample, full precision."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise InputError("symbol file payload must be 2-D")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"dim_{i}" for i in range(arr.shape[1])])
        for row in arr:
            writer.writerow([repr(float(v)) for v in row])


def read_symbol_file(path: str | Path) -> SymbolBatch:
    """Parse a symbol CSV; parse errors carry the 1-based line number."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"no such file: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: parse error at line 1: empty file")
        expected = [f"dim_{i}" for i in range(len(header))]
        if header != expected:
            raise InputError(f"{path}: parse error at line 1: bad header {header[:4]}...")
        n_dims = len(header)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != n_dims:
                raise InputError(
                    f"{path}: parse error at line {lineno}: "
                    f"expected {n_dims} cells, got {len(row)}"
                )
            try:
                vals = [float(c) for c in row]
            except ValueError as exc:
                raise InputError(f"{path}: parse error at line {lineno}: {exc}")
            if not all(np.isfinite(vals)):
                raise InputError(
                    f"{path}: parse error at line {lineno}: non-finite value"
                )
            rows.append(vals)
    if not rows:
        raise InputError(f"{path}: parse error: no data rows")
    return SymbolBatch(np.array(rows, dtype=np.float64), meta=str(path))


def write_metrics_csv(path: str | Path, state: TrainState) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mse", "kl", "nu_hat", "nll"])
        for m in state.history:
            writer.writerow(
                [m.epoch, repr(m.mse), repr(m.kl), repr(m.nu_hat), repr(m.nll)]
            )


def _emit_report(report: dict, path: str | None) -> None:
    report = dict(report)
    report["version"] = __version__
    report["timestamp"] = datetime.now(timezone.utc).isoformat()
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_fit(args) -> None:
    batch = read_symbol_file(args.input)
    rep = fit_nu(batch, nu_max=args.nu_max)
    fitted = TailModel.student_t(rep.nu_hat)
    std = SymbolBatch(batch.values / rep.standardization, meta=batch.meta)
    baselines = {
        "fitted_student_t": nll(std, fitted),
        "gaussian": nll(std, TailModel.gaussian()),
        "cauchy": nll(std, TailModel.cauchy()),
    }
    n_q = min(args.quantiles, batch.size)
    pairs = qq_data(std, fitted, n_q)
    qq_path = args.qq_out or f"{args.input}.qq.csv"
    with open(qq_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["empirical_q", "model_q"])
        for emp, mod in pairs:
            writer.writerow([repr(float(emp)), repr(float(mod))])
    _emit_report(
        {
            "command": "fit",
            "config": {
                "input": str(args.input),
                "nu_max": args.nu_max,
                "quantiles": n_q,
            },
            "results": {
                "nu_hat": _quantity(rep.nu_hat, "dimensionless"),
                "hit_upper_bound": rep.hit_upper_bound,
                "nll": {
                    k: _quantity(v, "nats_per_symbol") for k, v in baselines.items()
                },
                "standardization_scales": rep.standardization.tolist(),
                "qq_sidecar": str(qq_path),
                "n_samples": batch.n_samples,
                "n_dims": batch.n_dims,
            },
        },
        args.report,
    )


def cmd_kl(args) -> None:
    batch = read_symbol_file(args.input)
    model = _parse_model(args.target)
    est = kde_build(batch, KdeMode(args.mode))
    rep = kde_kl(
        est, model, grid_half_width=args.grid_half_width, grid_points=args.grid_points
    )
    _emit_report(
        {
            "command": "kl",
            "config": {
                "input": str(args.input),
                "target": args.target,
                "mode": args.mode,
                "grid_half_width": args.grid_half_width,
                "grid_points": args.grid_points,
            },
            "results": {
                "kl": _quantity(rep.nats, "nats_per_dimension"),
                "kl_per_marginal": rep.per_marginal.tolist(),
                "kde_truncation_mass": rep.truncation_mass,
                "bandwidths": est.bandwidths.tolist(),
            },
        },
        args.report,
    )


def cmd_maxent(args) -> None:
    params = PayloadParams(alpha=args.alpha, sigma2=args.sigma2)
    rep = verify_proposition1(
        params,
        args.target_bits,
        n_perturbations=args.perturbations,
        seed=args.seed,
        grid_half_width=args.grid_half_width,
        grid_points=args.grid_points,
    )
    sol = rep.solution
    density_path = args.density_out
    with open(density_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["y", "cell_mass", "density"])
        width = sol.cell_width
        for y, m in zip(sol.grid, sol.density):
            writer.writerow([repr(float(y)), repr(float(m)), repr(float(m / width))])
    _emit_report(
        {
            "command": "maxent",
            "config": {
                "alpha": args.alpha,
                "sigma2": args.sigma2,
                "target_bits": args.target_bits,
                "grid_half_width": args.grid_half_width,
                "grid_points": args.grid_points,
                "perturbations": args.perturbations,
            },
            "seed": args.seed,
            "results": {
                "lambda": _quantity(sol.lam, "dimensionless"),
                "implied_nu": _quantity(2.0 * sol.lam - 1.0, "dimensionless"),
                "payload_achieved": _quantity(sol.payload_achieved, "bits_per_symbol"),
                "entropy": _quantity(sol.entropy, "nats"),
                "tail_mass_beyond_grid": sol.tail_mass,
                "prop1_max_entropy_violation": _quantity(rep.max_violation, "nats"),
                "density_sidecar": str(density_path),
            },
        },
        args.report,
    )


def cmd_mi(args) -> None:
    model = _parse_model(args.model)
    rows = []
    for snr in args.snr_db:
        cfg = ChannelConfig(snr)
        est = mutual_information(model, cfg, args.n_samples, args.seed)
        rows.append(
            {
                "snr_db": snr,
                "mi": _quantity(est.bits, "bits_per_real_dim"),
                "mi_stderr": _quantity(est.stderr, "bits_per_real_dim"),
                "awgn_capacity": _quantity(awgn_capacity(cfg), "bits_per_real_dim"),
            }
        )
    _emit_report(
        {
            "command": "mi",
            "config": {"model": args.model, "n_samples": args.n_samples},
            "seed": args.seed,
            "results": {"sweep": rows},
        },
        args.report,
    )


def cmd_sample(args) -> None:
    if args.n < 0:
        raise InputError("n must be nonnegative")
    if args.n == 0:
        values = np.empty((0, 1))
        with open(args.output, "w", newline="") as fh:
            csv.writer(fh).writerow(["dim_0"])
    else:
        model = _parse_model(args.model)
        values = sample(model, args.n, args.seed).flat().reshape(-1, 1)
        write_symbol_file(args.output, values)
    _emit_report(
        {
            "command": "sample",
            "config": {"model": args.model, "n": args.n, "output": str(args.output)},
            "seed": args.seed,
            "results": {"written_rows": int(values.shape[0])},
        },
        args.report,
    )


_CODEC_KEYS = {
    "source_dim",
    "n_symbols",
    "hidden",
    "snr_db",
    "kl_weight",
    "kde_mode",
    "lr",
    "batch_size",
    "epochs",
    "steps_per_epoch",
    "seed",
}
_SOURCE_KEYS = {"regime", "g_lo", "g_hi"}


def _load_train_config(path: str):
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise InputError(f"config error: no such file {path}")
    except json.JSONDecodeError as exc:
        raise InputError(f"config error: invalid JSON in {path}: {exc}")
    if not isinstance(raw, dict):
        raise InputError("config error: top level must be an object")
    experiment = raw.get("experiment", "single")
    if experiment not in ("single", "lambda_sweep", "entropy_variability"):
        raise InputError(f"config error: unknown experiment {experiment!r}")
    codec_raw = raw.get("codec")
    if not isinstance(codec_raw, dict):
        raise InputError("config error: missing 'codec' object")
    bad = set(codec_raw) - _CODEC_KEYS
    if bad:
        raise InputError(f"config error: unknown codec field {sorted(bad)[0]!r}")
    for req in ("source_dim", "n_symbols"):
        if req not in codec_raw:
            raise InputError(f"config error: codec.{req} is required")
    try:
        cfg = CodecConfig(**codec_raw)
    except (TypeError, InputError) as exc:
        raise InputError(f"config error: codec: {exc}")
    source_raw = raw.get("source", {})
    if not isinstance(source_raw, dict):
        raise InputError("config error: 'source' must be an object")
    bad = set(source_raw) - _SOURCE_KEYS
    if bad:
        raise InputError(f"config error: unknown source field {sorted(bad)[0]!r}")
    try:
        source = SourceSpec(
            dim=cfg.source_dim,
            regime=SourceRegime(source_raw.get("regime", "uniform_entropy")),
            g_lo=source_raw.get("g_lo", 1.0),
            g_hi=source_raw.get("g_hi", 1.0),
        )
    except ValueError as exc:
        raise InputError(f"config error: source: {exc}")
    extras = {}
    if experiment == "lambda_sweep":
        lambdas = raw.get("lambdas")
        if not isinstance(lambdas, list) or not lambdas or not all(
            isinstance(v, (int, float)) and v >= 0 for v in lambdas
        ):
            raise InputError("config error: 'lambdas' must be a list of weights >= 0")
        extras["lambdas"] = [float(v) for v in lambdas]
    if experiment == "entropy_variability":
        seeds = raw.get("seeds")
        if not isinstance(seeds, list) or len(seeds) < 5:
            raise InputError("config error: 'seeds' must list at least 5 integers")
        extras["seeds"] = [int(s) for s in seeds]
    unknown = set(raw) - {"experiment", "codec", "source", "lambdas", "seeds"}
    if unknown:
        raise InputError(f"config error: unknown field {sorted(unknown)[0]!r}")
    return experiment, cfg, source, extras


def cmd_train(args) -> None:
    experiment, cfg, source, extras = _load_train_config(args.config)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results: dict = {"experiment": experiment}
    try:
        if experiment == "single":
            state = train(cfg, source)
            write_metrics_csv(out / "metrics.csv", state)
            write_symbol_file(out / "symbols.csv", final_symbols(state).values)
            last = state.history[-1]
            results["final"] = {
                "mse": _quantity(last.mse, "squared_error_sum_per_sample"),
                "kl": _quantity(last.kl, "nats_joint"),
                "nu_hat": _quantity(last.nu_hat, "dimensionless"),
                "nll": _quantity(last.nll, "nats_per_symbol"),
            }
            results["files"] = ["metrics.csv", "symbols.csv"]
        elif experiment == "lambda_sweep":
            files, summary = [], []
            for lam in extras["lambdas"]:
                run_cfg = replace(cfg, kl_weight=lam)
                state = train(run_cfg, source)
                tag = f"lambda_{lam:g}"
                write_metrics_csv(out / f"metrics_{tag}.csv", state)
                write_symbol_file(
                    out / f"symbols_{tag}.csv", final_symbols(state).values
                )
                files += [f"metrics_{tag}.csv", f"symbols_{tag}.csv"]
                half = state.history[len(state.history) // 2]
                summary.append(
                    {
                        "kl_weight": lam,
                        "halfway_mse": _quantity(half.mse, "squared_error_sum_per_sample"),
                        "final_mse": _quantity(
                            state.history[-1].mse, "squared_error_sum_per_sample"
                        ),
                        "final_nu_hat": _quantity(
                            state.history[-1].nu_hat, "dimensionless"
                        ),
                    }
                )
            results["sweep"] = summary
            results["files"] = files
        else:
            files = []

            def on_run(seed: int, regime: str, state: TrainState) -> None:
                tag = f"seed_{seed}_{regime}"
                write_metrics_csv(out / f"metrics_{tag}.csv", state)
                write_symbol_file(
                    out / f"symbols_{tag}.csv", final_symbols(state).values
                )
                files.extend([f"metrics_{tag}.csv", f"symbols_{tag}.csv"])

            rep = entropy_variability_experiment(
                cfg, extras["seeds"], g_lo=source.g_lo, g_hi=source.g_hi, on_run=on_run
            )
            results["per_seed"] = [
                {
                    "seed": s,
                    "nu_uniform": _quantity(u, "dimensionless"),
                    "nu_variable": _quantity(v, "dimensionless"),
                }
                for s, u, v in zip(rep.seeds, rep.nu_uniform, rep.nu_variable)
            ]
            results["fraction_variable_heavier"] = rep.fraction_variable_heavier
            results["files"] = files
    except DivergenceError as exc:
        # preserve whatever metrics the run produced before diverging
        state = getattr(exc, "state", None)
        if state is not None:
            write_metrics_csv(out / "metrics_partial.csv", state)
        raise
    _emit_report(
        {
            "command": "train",
            "config": {
                "config_file": str(args.config),
                "out_dir": str(out),
                "codec": {k: getattr(cfg, k) if k != "kde_mode" else cfg.kde_mode.value for k in sorted(_CODEC_KEYS)},
                "source": {
                    "regime": source.regime.value,
                    "g_lo": source.g_lo,
                    "g_hi": source.g_hi,
                },
                **{k: v for k, v in extras.items()},
            },
            "seed": cfg.seed,
            "results": results,
        },
        args.report,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="symtail",
        description="Heavy-tailed symbol distribution toolkit.",
    )
    parser.add_argument("--version", action="version", version=f"symtail {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit the tail index of a symbol file")
    p.add_argument("input", help="symbol CSV path")
    p.add_argument("--nu-max", type=float, default=200.0)
    p.add_argument("--quantiles", type=int, default=99, help="QQ sidecar size")
    p.add_argument("--qq-out", default=None, help="QQ sidecar path")
    p.add_argument("--report", default=None, help="report JSON path (default stdout)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("kl", help="KL divergence of a symbol file's KDE to a target")
    p.add_argument("input")
    p.add_argument("--target", default="gaussian", help=_MODEL_HELP)
    p.add_argument("--mode", choices=["identical", "non_identical"], default="identical")
    p.add_argument("--grid-half-width", type=float, default=10.0)
    p.add_argument("--grid-points", type=int, default=2001)
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_kl)

    p = sub.add_parser("maxent", help="solve the payload-constrained entropy problem")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--sigma2", type=float, required=True)
    p.add_argument("--target-bits", type=float, required=True)
    p.add_argument("--grid-half-width", type=float, default=40.0)
    p.add_argument("--grid-points", type=int, default=8001)
    p.add_argument("--perturbations", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--density-out", default="maxent_density.csv")
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_maxent)

    p = sub.add_parser("mi", help="mutual information sweep over SNRs")
    p.add_argument("--model", default="gaussian", help=_MODEL_HELP)
    p.add_argument("--snr-db", type=float, nargs="+", required=True)
    p.add_argument("--n-samples", type=int, default=200000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_mi)

    p = sub.add_parser("sample", help="draw model samples into a symbol file")
    p.add_argument("--model", required=True, help=_MODEL_HELP)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True)
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("train", help="train the toy codec per a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_train)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
