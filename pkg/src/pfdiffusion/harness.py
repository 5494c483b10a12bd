"""Experiment runner behind the CLI.

Each command executes seeded runs of the particle filter on a declared
problem and persists results as per-run JSON reports plus aggregate CSV
tables. Every CSV row carries the config hash; re-running a command with
the same config and seeds reproduces all non-timing fields exactly.
Wall-clock time is reported but never asserted anywhere; instrumented
particle-step counts are the cost proxy.
"""

import csv
import io
import json
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, Problem, config_hash
from .filtering import RunReport, run_particle_filter
from .metrics import l2_error, psnr, ssim

__all__ = [
    "execute_run",
    "sweep_particles",
    "sweep_pruning",
    "compare_repeated_baseline",
    "run_single",
    "verify_checks",
]

RUN_CSV_COLUMNS = [
    "config_hash",
    "seed",
    "n0",
    "prune_period",
    "t_steps",
    "psnr",
    "ssim",
    "l2_error",
    "l2_to_posterior_mean",
    "prior_mean_l2",
    "residual_sq",
    "particle_steps",
    "wall_ms",
    "baseline_equivalent",
]

SWEEP_CSV_COLUMNS = ["config_hash", "seeds", "n0", "metric", "mean", "std", "n_seeds"]

PRUNING_CSV_COLUMNS = [
    "config_hash",
    "seeds",
    "prune_period",
    "n_seeds",
    "l2_error_mean",
    "l2_error_std",
    "l2_to_posterior_mean_mean",
    "l2_to_posterior_mean_std",
    "psnr_mean",
    "residual_sq_mean",
    "particle_steps_per_run",
    "wall_ms_mean",
]

COMPARE_CSV_COLUMNS = [
    "config_hash",
    "seed",
    "method",
    "n0",
    "l2_error",
    "l2_to_posterior_mean",
    "residual_sq",
    "particle_steps",
    "step_ratio",
    "wall_ms",
]


def _atomic_write(path: Path, data: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_csv(path: Path, columns: list[str], rows: list[dict]) -> None:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({c: _csv_cell(row.get(c)) for c in columns})
    _atomic_write(path, buf.getvalue())


def _csv_cell(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return repr(value)
    return value


def run_single(problem: Problem, filter_cfg, seed: int, cfg_echo: dict) -> RunReport:
    """One filter run plus metric computation against the known signal."""
    estimate, report = run_particle_filter(
        M=problem.measurement,
        A=problem.operator,
        codec=problem.codec,
        model=problem.model,
        s=problem.schedule,
        sampler_cfg=problem.sampler_cfg,
        filter_cfg=filter_cfg,
        seed=seed,
        x_star=problem.x_star,
    )
    metrics = {
        "psnr": psnr(problem.x_star, estimate, problem.max_value),
        "ssim": _maybe_ssim(problem.x_star, estimate, problem.max_value),
        "l2_error": l2_error(problem.x_star, estimate),
        "residual_sq": report.final_residual_sq,
        "prior_mean_l2": None,
        "l2_to_posterior_mean": None,
    }
    # Error of the trivial predict-the-prior-mean baseline, for context.
    prior_mean_x = problem.codec.decode(_prior_mean(problem))
    metrics["prior_mean_l2"] = l2_error(problem.x_star, prior_mean_x)
    if problem.posterior is not None:
        metrics["l2_to_posterior_mean"] = l2_error(problem.posterior.mean, estimate)
    report.metrics = metrics
    report.config = cfg_echo
    return report


def _prior_mean(problem: Problem) -> np.ndarray:
    logw, means, _ = problem.model.prior_components()
    return np.exp(logw) @ means


def _maybe_ssim(reference, estimate, max_value):
    try:
        return ssim(reference, estimate, max_value=max_value)
    except ValueError:
        return None  # signal smaller than the window


def _cfg_echo(cfg: ExperimentConfig) -> dict:
    return {k: v for k, v in cfg.raw.items() if k != "output"}


def _report_row(chash: str, report: RunReport) -> dict:
    m = report.metrics
    return {
        "config_hash": chash,
        "seed": report.seed,
        "n0": report.n0,
        "prune_period": report.prune_period,
        "t_steps": report.t_steps,
        "psnr": m["psnr"],
        "ssim": m["ssim"],
        "l2_error": m["l2_error"],
        "l2_to_posterior_mean": m["l2_to_posterior_mean"],
        "prior_mean_l2": m["prior_mean_l2"],
        "residual_sq": m["residual_sq"],
        "particle_steps": report.particle_steps,
        "wall_ms": report.wall_ms,
        "baseline_equivalent": report.n0 == 1,
    }


def _run_seeds(problem, filter_cfg, seeds, cfg_echo, threads=1):
    if threads <= 1:
        return [run_single(problem, filter_cfg, s, cfg_echo) for s in seeds]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(
            pool.map(lambda s: run_single(problem, filter_cfg, s, cfg_echo), seeds)
        )


def _dump_report(out_dir: Path, chash: str, report: RunReport, tag: str = "run") -> None:
    path = out_dir / f"{tag}_{chash}_seed{report.seed}.json"
    _atomic_write(path, json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n")


def execute_run(cfg: ExperimentConfig, threads: int = 1) -> list[RunReport]:
    """One filter run per configured seed; JSON per run + aggregate CSV."""
    problem = cfg.build_problem()
    filter_cfg = cfg.build_filter_cfg()
    chash = config_hash(cfg)
    echo = _cfg_echo(cfg)
    reports = _run_seeds(problem, filter_cfg, cfg.seeds, echo, threads)
    if "json" in cfg.formats:
        for report in reports:
            _dump_report(cfg.out_dir, chash, report)
    if "csv" in cfg.formats:
        rows = [_report_row(chash, r) for r in reports]
        _write_csv(cfg.out_dir / f"runs_{chash}.csv", RUN_CSV_COLUMNS, rows)
    return reports


_SWEEP_METRICS = ["psnr", "l2_error", "l2_to_posterior_mean", "residual_sq"]


def _seed_span(seeds: list[int]) -> str:
    return f"{seeds[0]}:{len(seeds)}" if seeds else ""


def sweep_particles(cfg: ExperimentConfig, ns: list[int], threads: int = 1) -> list[dict]:
    """Per-population-size aggregate statistics over the seed set."""
    problem = cfg.build_problem()
    chash = config_hash(cfg)
    echo = _cfg_echo(cfg)
    rows = []
    for n0 in ns:
        filter_cfg = cfg.build_filter_cfg(n0=n0)
        reports = _run_seeds(problem, filter_cfg, cfg.seeds, echo, threads)
        for metric in _SWEEP_METRICS:
            values = [r.metrics[metric] for r in reports if r.metrics[metric] is not None]
            if not values:
                continue
            rows.append(
                {
                    "config_hash": chash,
                    "seeds": _seed_span(cfg.seeds),
                    "n0": n0,
                    "metric": metric,
                    "mean": float(np.mean(values)),
                    "std": float(np.std(values, ddof=1)) if len(values) > 1 else 0.0,
                    "n_seeds": len(values),
                }
            )
    if "csv" in cfg.formats:
        _write_csv(cfg.out_dir / f"sweep_particles_{chash}.csv", SWEEP_CSV_COLUMNS, rows)
    return rows


def sweep_pruning(cfg: ExperimentConfig, rs: list[int], threads: int = 1) -> list[dict]:
    """Per-pruning-period aggregates plus the instrumented step totals."""
    problem = cfg.build_problem()
    chash = config_hash(cfg)
    echo = _cfg_echo(cfg)
    rows = []
    for r_period in rs:
        filter_cfg = cfg.build_filter_cfg(prune_period=r_period)
        reports = _run_seeds(problem, filter_cfg, cfg.seeds, echo, threads)
        steps = {r.particle_steps for r in reports}
        l2 = [r.metrics["l2_error"] for r in reports]
        post = [
            r.metrics["l2_to_posterior_mean"]
            for r in reports
            if r.metrics["l2_to_posterior_mean"] is not None
        ]
        rows.append(
            {
                "config_hash": chash,
                "seeds": _seed_span(cfg.seeds),
                "prune_period": r_period,
                "n_seeds": len(reports),
                "l2_error_mean": float(np.mean(l2)),
                "l2_error_std": float(np.std(l2, ddof=1)) if len(l2) > 1 else 0.0,
                "l2_to_posterior_mean_mean": float(np.mean(post)) if post else None,
                "l2_to_posterior_mean_std": (
                    float(np.std(post, ddof=1)) if len(post) > 1 else None
                ),
                "psnr_mean": float(np.mean([r.metrics["psnr"] for r in reports])),
                "residual_sq_mean": float(
                    np.mean([r.metrics["residual_sq"] for r in reports])
                ),
                "particle_steps_per_run": steps.pop() if len(steps) == 1 else sorted(steps),
                "wall_ms_mean": float(np.mean([r.wall_ms for r in reports])),
            }
        )
    if "csv" in cfg.formats:
        _write_csv(cfg.out_dir / f"sweep_pruning_{chash}.csv", PRUNING_CSV_COLUMNS, rows)
    return rows


def _derived_seed(seed: int, j: int) -> int:
    return int(np.random.SeedSequence(entropy=seed, spawn_key=(j,)).generate_state(1)[0])


def compare_repeated_baseline(
    cfg: ExperimentConfig, n0: int, threads: int = 1
) -> list[dict]:
    """Filter with N0 particles vs best of N0 independent single runs.

    The baseline picks its winner by final measurement misfit, since
    ground truth is unavailable at inference time; oracle columns are
    reported alongside for diagnosis.
    """
    problem = cfg.build_problem()
    chash = config_hash(cfg)
    echo = _cfg_echo(cfg)
    filter_cfg = cfg.build_filter_cfg(n0=n0)
    single_cfg = cfg.build_filter_cfg(n0=1)
    rows = []
    for seed in cfg.seeds:
        filt = run_single(problem, filter_cfg, seed, echo)
        baseline_seeds = [_derived_seed(seed, j) for j in range(n0)]
        singles = _run_seeds(problem, single_cfg, baseline_seeds, echo, threads)
        best = min(singles, key=lambda r: r.metrics["residual_sq"])
        baseline_steps = sum(r.particle_steps for r in singles)
        ratio = baseline_steps / filt.particle_steps
        rows.append(
            {
                "config_hash": chash,
                "seed": seed,
                "method": "particle_filter",
                "n0": n0,
                "l2_error": filt.metrics["l2_error"],
                "l2_to_posterior_mean": filt.metrics["l2_to_posterior_mean"],
                "residual_sq": filt.metrics["residual_sq"],
                "particle_steps": filt.particle_steps,
                "step_ratio": ratio,
                "wall_ms": filt.wall_ms,
            }
        )
        rows.append(
            {
                "config_hash": chash,
                "seed": seed,
                "method": "repeated_best",
                "n0": n0,
                "l2_error": best.metrics["l2_error"],
                "l2_to_posterior_mean": best.metrics["l2_to_posterior_mean"],
                "residual_sq": best.metrics["residual_sq"],
                "particle_steps": baseline_steps,
                "step_ratio": ratio,
                "wall_ms": float(sum(r.wall_ms for r in singles)),
            }
        )
    if "csv" in cfg.formats:
        _write_csv(cfg.out_dir / f"compare_baseline_{chash}.csv", COMPARE_CSV_COLUMNS, rows)
    return rows


# -- built-in verification suite ------------------------------------------


def verify_checks(rng_seed: int = 0) -> list[tuple[str, bool, str]]:
    """Fast self-checks of the core numerics (adjoints, scores, oracles).

    Returns (name, passed, detail) triples; the CLI turns any failure
    into exit code 2.
    """
    from .operators import (
        BlockDownsample,
        GaussianBlur,
        Identity,
        IdentityCodec,
        InpaintingMask,
        Measurement,
        OrthonormalCodec,
    )
    from .oracle import grid_posterior, linear_gaussian_posterior
    from .sampler import SamplerConfig, measurement_gradient
    from .schedule import build_linear_schedule
    from .score import GaussianScore, GmmScore

    rng = np.random.default_rng(rng_seed)
    checks = []

    def run_check(name, fn):
        try:
            detail = fn() or "ok"
            checks.append((name, True, detail))
        except AssertionError as exc:
            checks.append((name, False, str(exc)))

    def adjoint_ok():
        ops = [
            Identity(6),
            InpaintingMask.from_indices(6, [0, 2, 5]),
            GaussianBlur.from_sigma((6,), 1.0, 5),
            GaussianBlur.from_sigma((4, 4), 1.0, 3),
            BlockDownsample((6,), 2),
            BlockDownsample((4, 4), 2),
        ]
        worst = 0.0
        for op in ops:
            for _ in range(100):
                x = rng.standard_normal(op.in_dim)
                u = rng.standard_normal(op.out_dim)
                lhs = float(op.apply(x) @ u)
                rhs = float(x @ op.adjoint(u))
                scale = max(abs(lhs), abs(rhs), 1e-12)
                worst = max(worst, abs(lhs - rhs) / scale)
        assert worst < 1e-10, f"adjoint mismatch {worst:.2e}"
        return f"max relative mismatch {worst:.2e} over 6 operator kinds"

    def codec_ok():
        codecs = [IdentityCodec(4), OrthonormalCodec.random(5, 3, seed=1)]
        worst = 0.0
        for codec in codecs:
            for _ in range(100):
                z = rng.standard_normal(codec.latent_dim)
                worst = max(worst, float(np.max(np.abs(codec.encode(codec.decode(z)) - z))))
        assert worst < 1e-8, f"left-inverse violation {worst:.2e}"
        return f"max |E(D(z)) - z| = {worst:.2e}"

    def score_ok():
        s = build_linear_schedule(T=50)
        models = [
            GaussianScore(mean=[0.3, -0.2], var=[1.5, 0.5]),
            GmmScore(
                weights=[0.4, 0.6],
                means=[[-2.0, 0.0], [2.0, 0.5]],
                variances=[[0.5, 1.0], [1.0, 0.3]],
            ),
        ]
        worst = 0.0
        for model in models:
            for _ in range(50):
                z = rng.standard_normal(2) * 2
                t = int(rng.integers(1, 51))
                h = 1e-4 * max(1.0, float(np.max(np.abs(z))))
                g = np.empty(2)
                for i in range(2):
                    zp, zm = z.copy(), z.copy()
                    zp[i] += h
                    zm[i] -= h
                    g[i] = (model.logpdf(zp, t, s) - model.logpdf(zm, t, s)) / (2 * h)
                sc = model.score(z, t, s)
                rel = np.max(np.abs(sc - g)) / max(1.0, float(np.max(np.abs(g))))
                worst = max(worst, rel)
        assert worst < 1e-5, f"score vs finite difference {worst:.2e}"
        return f"max relative error {worst:.2e}"

    def degeneracy_ok():
        from .filtering import effective_sample_size

        for _ in range(2000):
            n = int(rng.integers(2, 65))
            w = rng.dirichlet(np.ones(n))
            ess = effective_sample_size(w)
            assert 1.0 - 1e-9 <= ess <= n + 1e-9, f"ess {ess} outside [1, {n}]"
        return "1 <= ess <= N on 2000 random simplex points"

    def oracle_ok():
        A = InpaintingMask.from_indices(2, [0])
        M = Measurement(y=np.array([0.7, 0.0]), sigma_nu=0.05, operator_id=A.operator_id)
        model = GaussianScore(mean=[0.0, 0.0], var=[1.0, 1.0])
        conj = linear_gaussian_posterior(model.mean, model.var, A, M)
        grid = grid_posterior(model, A, M, bounds=[(-6, 6), (-6, 6)], resolution=401)
        err = float(np.max(np.abs(conj.mean - grid.mean)))
        assert err < 1e-3, f"oracle disagreement {err:.2e}"
        return f"conjugate vs grid mean differ by {err:.2e}"

    def gradient_ok():
        s = build_linear_schedule(T=50)
        model = GaussianScore(mean=[0.0, 0.0], var=[1.0, 2.0])
        codec = IdentityCodec(2)
        A = InpaintingMask.from_indices(2, [0])
        M = Measurement(y=np.array([0.4, 0.0]), sigma_nu=0.01, operator_id=A.operator_id)
        worst = 0.0
        for _ in range(25):
            z = rng.standard_normal(2)
            t = int(rng.integers(1, 51))
            ga = measurement_gradient(
                z, t, M, A, codec, model, s, SamplerConfig(gradient_mode="analytic")
            )
            gf = measurement_gradient(
                z, t, M, A, codec, model, s, SamplerConfig(gradient_mode="finite_difference")
            )
            rel = np.linalg.norm(ga - gf) / max(np.linalg.norm(gf), 1e-12)
            worst = max(worst, float(rel))
        assert worst < 1e-4, f"gradient mismatch {worst:.2e}"
        return f"analytic vs finite difference {worst:.2e}"

    run_check("operator adjoints", adjoint_ok)
    run_check("codec left inverse", codec_ok)
    run_check("score vs log-density gradient", score_ok)
    run_check("degeneracy bounds", degeneracy_ok)
    run_check("posterior oracles agree", oracle_ok)
    run_check("guidance gradient fidelity", gradient_ok)
    return checks
