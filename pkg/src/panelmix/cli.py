"""Command-line front end.

Subcommands: simulate | fit | forecast | evaluate | mc | diagnose.
Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.
Every run is a pure function of (config, input files, seed): reruns write
byte-identical outputs.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from panelmix import __version__
from panelmix.config import ConfigError, RunConfig, apply_hyper_overrides
from panelmix.evaluation import EvalReport, pit, report_table, significance_stars
from panelmix.panel import PanelData, PanelError, load_panel
from panelmix.priors import PredictorSpec, elicit_defaults, param_marginal_logpdf
from panelmix.samplers.gibbs import PosteriorDraws, run_chain
from panelmix.truths import truth_from_json, truth_to_json

__all__ = ["main"]


def _provenance(cfg: RunConfig, seed) -> str:
    return f"panelmix {__version__} config={cfg.hash} seed={seed}"


def _load_config(path: str) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    return RunConfig.from_text(text)


def _resolve_panel(cfg: RunConfig, seed: int | None):
    """Panel + optional truth from either the data file or the DGP section."""
    if cfg.data is not None:
        path = cfg.data.get("path")
        if path is None:
            raise ConfigError("data.path is required")
        try:
            with open(path) as fh:
                data = load_panel(fh, cfg.schema(), T=cfg.data.get("t"))
        except OSError as exc:
            raise PanelError(f"cannot read panel {path!r}: {exc}") from exc
        truth = None
        truth_path = cfg.data.get("truth")
        if truth_path:
            with open(truth_path) as fh:
                truth = truth_from_json(fh.read())
        return data, truth
    from panelmix.simlab import simulate

    dgp = cfg.dgp_spec()
    if seed is not None:
        dgp = dataclasses.replace(dgp, seed=seed)
    return simulate(dgp)


def _resolved_specs(cfg: RunConfig, data: PanelData, truth) -> list[PredictorSpec]:
    base_hyper = None
    out = []
    for spec, overrides in cfg.predictors:
        if spec.variant == "oracle":
            if truth is None:
                raise ConfigError("oracle predictor requires simulated data or a truth file")
            out.append(dataclasses.replace(spec, truth=truth))
            continue
        if spec.hyper is None:
            if base_hyper is None:
                base_hyper = elicit_defaults(data)
            hyper = apply_hyper_overrides(base_hyper, overrides)
            spec = dataclasses.replace(spec, hyper=hyper, truth=None)
        out.append(spec)
    if not out:
        raise ConfigError("config defines no predictors")
    return out


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    if cfg.dgp is None:
        raise ConfigError("simulate requires a dgp.* section")
    from panelmix.simlab import simulate

    dgp = cfg.dgp_spec()
    if args.seed is not None:
        dgp = dataclasses.replace(dgp, seed=args.seed)
    data, truth = simulate(dgp)
    out = args.out or cfg.out_dir
    os.makedirs(out, exist_ok=True)
    panel_path = os.path.join(out, "panel.csv")
    header_extra = []
    d_w = data.d_w
    w_cols = [f"w{j}" for j in range(1, d_w)]
    with open(panel_path, "w") as fh:
        fh.write(f"# {_provenance(cfg, dgp.seed)}\n")
        fh.write("id,time,y" + ("," + ",".join(w_cols) if w_cols else "") + "\n")
        T = data.T
        for i in range(data.N):
            for t in range(T + 2):
                y = data.y[i, t]
                row = [str(i), str(t), repr(float(y)) if np.isfinite(y) else ""]
                for j in range(1, d_w):
                    v = data.w[i, t, j] if t <= T else np.nan
                    row.append(repr(float(v)) if np.isfinite(v) else "")
                fh.write(",".join(row) + "\n")
    with open(os.path.join(out, "truth.json"), "w") as fh:
        fh.write(truth_to_json(truth))
    print(f"wrote {panel_path} ({data.N} units, periods 0..{data.T + 1})")
    return 0


def _fit_one(spec, data, chain_cfg, seed, chain_id, out, diag, prov):
    name = spec.name
    diag_path = os.path.join(out, f"diagnostics_{name}_chain{chain_id}.csv") if diag else None
    ckpt_path = os.path.join(out, f"checkpoint_{name}_chain{chain_id}.json")
    draws = run_chain(
        spec,
        data,
        n_sim=int(chain_cfg["n_sim"]),
        burn_in=int(chain_cfg["burn_in"]),
        thin=int(chain_cfg["thin"]),
        seed=seed,
        chain_id=chain_id,
        diagnostics_path=diag_path,
        checkpoint_path=ckpt_path,
    )
    draws.provenance["config"] = prov
    path = os.path.join(out, f"draws_{name}_chain{chain_id}.npz")
    draws.save(path)
    return path


def cmd_fit(args) -> int:
    cfg = _load_config(args.config)
    seed = args.seed if args.seed is not None else int(cfg.chain.get("seed", 0))
    data, truth = _resolve_panel(cfg, seed if cfg.dgp is not None else None)
    specs = [s for s in _resolved_specs(cfg, data, truth) if s.variant != "oracle"]
    out = args.out or cfg.out_dir
    os.makedirs(out, exist_ok=True)
    n_chains = int(cfg.chain.get("chains", 1))
    prov = _provenance(cfg, seed)
    if args.resume:
        if len(specs) != 1 or n_chains != 1:
            raise ConfigError("--resume applies to a single predictor, single chain")
        spec = specs[0]
        draws = run_chain(
            spec,
            data,
            n_sim=int(cfg.chain["n_sim"]),
            burn_in=int(cfg.chain["burn_in"]),
            thin=int(cfg.chain["thin"]),
            seed=seed,
            chain_id=0,
            resume_from=args.resume,
        )
        draws.provenance["config"] = prov
        path = os.path.join(out, f"draws_{spec.name}_chain0.npz")
        draws.save(path)
        print(f"wrote {path}")
        return 0
    tasks = [(spec, c) for spec in specs for c in range(n_chains)]
    paths = []
    if args.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futs = [
                pool.submit(_fit_one, spec, data, cfg.chain, seed, c, out, cfg.diagnostics, prov)
                for spec, c in tasks
            ]
            paths = [f.result() for f in futs]
    else:
        for spec, c in tasks:
            paths.append(_fit_one(spec, data, cfg.chain, seed, c, out, cfg.diagnostics, prov))
    for p in paths:
        print(f"wrote {p}")
    return 0


def cmd_forecast(args) -> int:
    cfg = _load_config(args.config)
    data, truth = _resolve_panel(cfg, args.seed)
    from panelmix.forecasting import oracle_density_all, sp_density_all

    out = args.out or cfg.out_dir
    os.makedirs(out, exist_ok=True)
    prov = _provenance(cfg, args.seed)
    draws_paths = args.draws
    if not draws_paths:
        raise ConfigError("forecast requires at least one draws file")
    for path in draws_paths:
        draws = PosteriorDraws.load(path)
        name = os.path.basename(path).replace("draws_", "").replace(".npz", "")
        means, variances = sp_density_all(draws, data)
        points = means.mean(axis=0)
        csv_path = os.path.join(out, f"forecast_{name}.csv")
        with open(csv_path, "w") as fh:
            fh.write(f"# {prov}\n")
            fh.write("unit,point\n")
            for i in range(data.N):
                fh.write(f"{i},{points[i]!r}\n")
        mix_path = os.path.join(out, f"forecast_{name}.mix.jsonl")
        S = means.shape[0]
        with open(mix_path, "w") as fh:
            fh.write(json.dumps({"provenance": prov, "n_units": data.N, "draws": S}) + "\n")
            for i in range(data.N):
                rec = {
                    "unit": i,
                    "means": [float(v) for v in means[:, i]],
                    "variances": [float(v) for v in variances[:, i]],
                }
                fh.write(json.dumps(rec) + "\n")
        print(f"wrote {csv_path} and {mix_path}")
    return 0


def _load_mix(path):
    units = {}
    with open(path) as fh:
        header = json.loads(fh.readline())
        for line in fh:
            rec = json.loads(line)
            units[rec["unit"]] = (np.asarray(rec["means"]), np.asarray(rec["variances"]))
    return header, units


def cmd_evaluate(args) -> int:
    cfg = _load_config(args.config)
    data, truth = _resolve_panel(cfg, args.seed)
    y_next = data.y[:, data.T + 1]
    usable = data.has_holdout()
    if not usable.any():
        raise PanelError("no units with observed holdout outcomes")
    out = args.out or cfg.out_dir
    os.makedirs(out, exist_ok=True)
    benchmark = str(cfg.mc.get("benchmark", ""))
    report = EvalReport(n_units=int(usable.sum()), benchmark=benchmark)
    from scipy.special import logsumexp, ndtr

    names = []
    for path in args.forecasts:
        name = os.path.basename(path).replace("forecast_", "").replace(".mix.jsonl", "")
        names.append(name)
        _, units = _load_mix(path)
        errs = np.empty(report.n_units)
        lsc = np.empty(report.n_units)
        pit_vals = np.empty(report.n_units)
        row = 0
        for i in np.where(usable)[0]:
            m, v = units[int(i)]
            y = y_next[i]
            lp = -0.5 * (np.log(2 * np.pi * v) + (y - m) ** 2 / v)
            lsc[row] = logsumexp(lp) - np.log(m.size)
            errs[row] = y - m.mean()
            pit_vals[row] = float(ndtr((y - m) / np.sqrt(v)).mean())
            row += 1
        report.add(name, errs, lsc, pit_vals)
    if not report.benchmark or report.benchmark not in report.rows:
        report.benchmark = names[0]
    table = report.table(oracle="oracle")
    rep_path = os.path.join(out, "report.csv")
    with open(rep_path, "w") as fh:
        fh.write(f"# {_provenance(cfg, args.seed)}\n")
        cols = "predictor,mse,lps_n,mse_pct_dev,lps_n_dev,dm_stat,dm_p,ag_stat,ag_p,stars\n"
        fh.write(cols)
        for r in table:
            stars = "" if np.isnan(r["ag_p"]) else significance_stars(r["ag_p"])
            fh.write(
                f"{r['predictor']},{r['mse']!r},{r['lps_n']!r},{r['mse_pct_dev']!r},"
                f"{r['lps_n_dev']!r},{r['dm_stat']!r},{r['dm_p']!r},{r['ag_stat']!r},"
                f"{r['ag_p']!r},{stars}\n"
            )
    for name in names:
        res = pit(report.rows[name]["pit"])
        pit_path = os.path.join(out, f"pit_{name}.csv")
        with open(pit_path, "w") as fh:
            fh.write(f"# {_provenance(cfg, args.seed)}\n")
            fh.write(f"# band_lo={res.band_lo!r} band_hi={res.band_hi!r} bins={res.bins}\n")
            fh.write("bin,count,density\n")
            dens = res.density_heights()
            for b in range(res.bins):
                fh.write(f"{b},{res.counts[b]},{dens[b]!r}\n")
    print(report_table(report))
    print(f"wrote {rep_path}")
    return 0


def cmd_mc(args) -> int:
    cfg = _load_config(args.config)
    if cfg.dgp is None:
        raise ConfigError("mc requires a dgp.* section")
    from panelmix.simlab import run_mc

    dgp = cfg.dgp_spec()
    if args.seed is not None:
        dgp = dataclasses.replace(dgp, seed=args.seed)
    data, truth = _resolve_panel(cfg, dgp.seed)
    specs = _resolved_specs(cfg, data, truth)
    reps = int(cfg.mc.get("repetitions", 1))
    benchmark = cfg.mc.get("benchmark") or None
    result = run_mc(dgp, specs, cfg.chain, reps, benchmark=benchmark, jobs=args.jobs)
    out = args.out or cfg.out_dir
    os.makedirs(out, exist_ok=True)
    csv_path = os.path.join(out, "mc_result.csv")
    with open(csv_path, "w") as fh:
        fh.write(result.to_csv(provenance=_provenance(cfg, dgp.seed)))
    txt_path = os.path.join(out, "mc_result.txt")
    with open(txt_path, "w") as fh:
        fh.write(result.to_text())
    print(result.to_text())
    print(f"wrote {csv_path}")
    return 0


def _rolling_mean(x: np.ndarray, window: int) -> np.ndarray:
    out = np.empty_like(x)
    csum = np.concatenate([[0.0], np.cumsum(x)])
    for i in range(x.size):
        lo = max(0, i - window + 1)
        out[i] = (csum[i + 1] - csum[lo]) / (i + 1 - lo)
    return out


def _autocorr(x: np.ndarray, max_lag: int) -> tuple[np.ndarray, bool]:
    n = x.size
    xc = x - x.mean()
    denom = float(xc @ xc)
    lags = min(max_lag, n - 1)
    out = np.zeros(lags + 1)
    if denom == 0.0:
        return out, True
    for k in range(lags + 1):
        out[k] = float(xc[: n - k] @ xc[k:]) / denom
    return out, False


def cmd_diagnose(args) -> int:
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    cfg = _load_config(args.config) if args.config else None
    hyper = None
    if cfg is not None:
        try:
            data, _ = _resolve_panel(cfg, args.seed)
            hyper = elicit_defaults(data)
        except Exception:
            hyper = None
    for path in args.draws:
        draws = PosteriorDraws.load(path)
        if draws.S == 0:
            raise PanelError(f"draws file {path} is empty")
        name = os.path.basename(path).replace("draws_", "").replace(".npz", "")
        scalars = {"sigma2": draws.sigma2.mean(axis=1), "lambda_1": draws.lam[:, 0, 0]}
        for j in range(draws.beta.shape[1]):
            scalars[f"beta{j}"] = draws.beta[:, j]
        if np.isfinite(draws.alpha_lam).any():
            scalars["alpha_lam"] = draws.alpha_lam
        window = min(1000, draws.S)
        flagged = window < 1000
        for key, series in scalars.items():
            spath = os.path.join(out, f"diag_{name}_{key}.csv")
            roll = _rolling_mean(series, window)
            ac, degenerate = _autocorr(series, 100)
            with open(spath, "w") as fh:
                fh.write(f"# panelmix {__version__} rolling_window={window}")
                fh.write(" (shrunk)\n" if flagged else "\n")
                if degenerate:
                    fh.write("# autocorrelation undefined for constant chain; zeros emitted\n")
                fh.write("draw,value,rolling_mean\n")
                for s in range(series.size):
                    fh.write(f"{s},{series[s]!r},{roll[s]!r}\n")
            apath = os.path.join(out, f"diag_{name}_{key}_acf.csv")
            with open(apath, "w") as fh:
                fh.write("lag,autocorr\n")
                for k in range(ac.size):
                    fh.write(f"{k},{ac[k]!r}\n")
            hpath = os.path.join(out, f"diag_{name}_{key}_hist.csv")
            counts, edges = np.histogram(series, bins=40)
            prior_dens = _prior_density(key, edges, hyper)
            with open(hpath, "w") as fh:
                fh.write("bin_lo,bin_hi,count,prior_density\n")
                for b in range(counts.size):
                    pd = prior_dens[b] if prior_dens is not None else np.nan
                    fh.write(f"{edges[b]!r},{edges[b + 1]!r},{counts[b]},{pd!r}\n")
        print(f"wrote diagnostics for {name}")
    return 0


def _prior_density(key: str, edges: np.ndarray, hyper):
    if hyper is None:
        return None
    mid = 0.5 * (edges[:-1] + edges[1:])
    try:
        if key.startswith("beta"):
            j = int(key[4:])
            var = hyper.psi0_beta[j] * hyper.b0_sigma2
            return np.exp(-0.5 * (mid - hyper.m0_beta[j]) ** 2 / var) / np.sqrt(2 * np.pi * var)
        if key == "sigma2":
            from scipy.stats import invgamma

            return invgamma(hyper.a0_sigma2, scale=hyper.b0_sigma2).pdf(mid)
        if key == "alpha_lam":
            from scipy.stats import gamma as gamma_dist

            return gamma_dist(hyper.lam.a0_alpha, scale=1.0 / hyper.lam.b0_alpha).pdf(mid)
        if key == "lambda_1":
            return np.exp(param_marginal_logpdf(hyper.lam, mid[:, None] if hyper.lam.d == 1 else mid))
    except Exception:
        return None
    return None


# ---------------------------------------------------------------------------


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="panelmix", description=__doc__)
    parser.add_argument("--version", action="version", version=f"panelmix {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="run-config file")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--jobs", type=int, default=1, help="max parallel workers")
        p.add_argument("--out", default=None, help="output directory")

    common(sub.add_parser("simulate", help="simulate a panel + truth sidecar"))
    p_fit = sub.add_parser("fit", help="run posterior chains, write draw files")
    common(p_fit)
    p_fit.add_argument("--resume", default=None, help="checkpoint file to continue")
    p_fc = sub.add_parser("forecast", help="per-unit predictive densities from draws")
    common(p_fc)
    p_fc.add_argument("draws", nargs="+", help="draws .npz files")
    p_ev = sub.add_parser("evaluate", help="score forecasts against the holdout")
    common(p_ev)
    p_ev.add_argument("forecasts", nargs="+", help="forecast .mix.jsonl files")
    common(sub.add_parser("mc", help="full Monte Carlo experiment"))
    p_dg = sub.add_parser("diagnose", help="chain diagnostics CSVs")
    common(p_dg, config_required=False)
    p_dg.add_argument("draws", nargs="+", help="draws .npz files")

    args = parser.parse_args(argv)
    handlers = {
        "simulate": cmd_simulate,
        "fit": cmd_fit,
        "forecast": cmd_forecast,
        "evaluate": cmd_evaluate,
        "mc": cmd_mc,
        "diagnose": cmd_diagnose,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, ValueError) as exc:
        if isinstance(exc, PanelError):
            print(f"data error: {exc}", file=sys.stderr)
            return 3
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (OSError,) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (np.linalg.LinAlgError, FloatingPointError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
