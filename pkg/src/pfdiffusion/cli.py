"""Command-line interface.

Subcommands: run, sweep-particles, sweep-pruning, compare-baseline,
verify. Exit codes: 0 success, 1 configuration error, 2 numerical
failure (including failed verification checks).
"""

import sys

import click

from .errors import ConfigError, NumericalError

_SEED_HELP = "Seed override: an integer, a comma list '0,1,2', or 'base:count'."


def _parse_int_spec(value: str) -> list[int]:
    value = value.strip()
    try:
        if ":" in value:
            base, count = value.split(":")
            base, count = int(base), int(count)
            if count < 1:
                raise ValueError
            return list(range(base, base + count))
        if "," in value:
            return [int(v) for v in value.split(",") if v.strip()]
        return [int(value)]
    except ValueError:
        raise ConfigError(f"bad integer spec {value!r}; use INT, 'a,b,c' or 'base:count'")


def _load(config_path, seeds, out, formats):
    from .config import ExperimentConfig, load_config

    cfg = load_config(config_path)
    if seeds:
        cfg.seeds = _parse_int_spec(seeds)
    if out:
        from pathlib import Path

        cfg.out_dir = Path(out)
    if formats:
        cfg.formats = tuple(formats)
    return cfg


@click.group()
def cli():
    """Particle-filtered guided diffusion for linear inverse problems."""


_common = [
    click.option("--config", "config_path", required=True, type=click.Path(), help="YAML experiment file."),
    click.option("--seeds", default=None, help=_SEED_HELP),
    click.option("--out", default=None, type=click.Path(), help="Output directory override."),
    click.option(
        "--format",
        "formats",
        multiple=True,
        type=click.Choice(["json", "csv"]),
        help="Restrict output formats.",
    ),
    click.option("--threads", default=1, show_default=True, help="Concurrent seed workers."),
]


def _with_common(fn):
    for opt in reversed(_common):
        fn = opt(fn)
    return fn


@cli.command("run")
@_with_common
def cmd_run(config_path, seeds, out, formats, threads):
    """One filter run per seed; writes JSON reports and runs CSV."""
    from .harness import execute_run

    cfg = _load(config_path, seeds, out, formats)
    reports = execute_run(cfg, threads=threads)
    for r in reports:
        click.echo(
            f"seed {r.seed}: l2_error={r.metrics['l2_error']:.6g} "
            f"psnr={r.metrics['psnr']:.2f}dB steps={r.particle_steps}"
        )
    click.echo(f"wrote {len(reports)} report(s) to {cfg.out_dir}")


@cli.command("sweep-particles")
@_with_common
@click.option("--ns", default="1,5,10", show_default=True, help="Comma list of population sizes.")
def cmd_sweep_particles(config_path, seeds, out, formats, threads, ns):
    """Ablation over the initial particle count."""
    from .harness import sweep_particles

    cfg = _load(config_path, seeds, out, formats)
    ns_list = _parse_int_spec(ns)
    rows = sweep_particles(cfg, ns_list, threads=threads)
    for row in rows:
        if row["metric"] == "l2_error":
            click.echo(
                f"N0={row['n0']}: l2_error {row['mean']:.6g} +- {row['std']:.3g} "
                f"({row['n_seeds']} seeds)"
            )
    click.echo(f"wrote sweep to {cfg.out_dir}")


@cli.command("sweep-pruning")
@_with_common
@click.option("--rs", default="10,20,30", show_default=True, help="Comma list of pruning periods.")
def cmd_sweep_pruning(config_path, seeds, out, formats, threads, rs):
    """Ablation over the pruning period."""
    from .harness import sweep_pruning

    cfg = _load(config_path, seeds, out, formats)
    rows = sweep_pruning(cfg, _parse_int_spec(rs), threads=threads)
    for row in rows:
        click.echo(
            f"R={row['prune_period']}: steps/run={row['particle_steps_per_run']} "
            f"l2_error {row['l2_error_mean']:.6g} +- {row['l2_error_std']:.3g}"
        )
    click.echo(f"wrote sweep to {cfg.out_dir}")


@cli.command("compare-baseline")
@_with_common
@click.option("--n0", default=10, show_default=True, help="Population size to compare.")
def cmd_compare_baseline(config_path, seeds, out, formats, threads, n0):
    """Filter vs best-of-N repeated single runs."""
    from .harness import compare_repeated_baseline

    cfg = _load(config_path, seeds, out, formats)
    rows = compare_repeated_baseline(cfg, n0, threads=threads)
    for row in rows:
        click.echo(
            f"seed {row['seed']} {row['method']}: l2={row['l2_error']:.6g} "
            f"steps={row['particle_steps']} ratio={row['step_ratio']:.2f}"
        )
    click.echo(f"wrote comparison to {cfg.out_dir}")


@cli.command("verify")
@click.option("--seed", default=0, show_default=True)
def cmd_verify(seed):
    """Run the built-in oracle and property checks."""
    from .harness import verify_checks

    checks = verify_checks(seed)
    failed = 0
    for name, ok, detail in checks:
        marker = "PASS" if ok else "FAIL"
        click.echo(f"[{marker}] {name}: {detail}")
        failed += 0 if ok else 1
    if failed:
        raise NumericalError(f"{failed} verification check(s) failed")
    click.echo(f"all {len(checks)} checks passed")


def main():
    try:
        cli(standalone_mode=False)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(1)
    except click.UsageError as exc:
        click.echo(f"usage error: {exc}", err=True)
        sys.exit(1)
    except NumericalError as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        sys.exit(2)
    except click.exceptions.Abort:
        sys.exit(1)
    sys.exit(0)


if __name__ == "__main__":
    main()
