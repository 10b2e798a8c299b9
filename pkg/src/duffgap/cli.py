"""Command-line front end.

Every command validates its whole configuration and finishes all
computation before the first output file is written.
"""

from __future__ import annotations

import csv
import functools
import json
import math
import sys
from pathlib import Path

import click
import numpy as np

from . import asymptotics, config, lyapunov
from .beam_ops import beam_eigenvalues
from .dynamics import integrate
from .errors import ConfigError, DuffGapError, HorizonTooShort

EXIT_VIOLATION = 1
EXIT_ERROR = 2

EIGS_COLUMNS = ("index", "lambda", "exact", "rel_error", "kind", "k")


def _fmt(x):
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return f"{x:.17g}" if isinstance(x, float) else str(x)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(x) for x in r])


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"not serialisable: {type(o).__name__}")


def common_options(fn):
    @click.option("--config", "config_path", type=click.Path(dir_okay=False), required=True, help="JSON scenario file.")
    @click.option("--out", "out_dir", type=click.Path(file_okay=False), default=".", show_default=True, help="Output directory.")
    @click.option("--seed", type=int, default=None, help="Overrides the seed of random initial data.")
    @click.option("--workers", type=click.IntRange(min=1), default=1, show_default=True, help="Parallel sweep workers.")
    @click.option("--figures/--no-figures", default=None, help="Also render PNG figures.")
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        return fn(*args, **kwargs)

    return wrapper


def _fail(command, exc):
    click.echo(f"{command}: {type(exc).__name__}: {exc}", err=True)
    sys.exit(EXIT_ERROR)


def _load(config_path):
    return config.build_scenario(config.load_config(config_path))


def _figures_wanted(flag, sc):
    return bool(sc.section("outputs").get("figures", False)) if flag is None else flag


def _out(out_dir):
    p = Path(out_dir)
    p.mkdir(parents=True, exist_ok=True)
    return p


@click.group()
def main():
    """Gap-regime Kirchhoff-type beam: spectra, constants, simulation and sweeps."""


@main.command("eigs")
@common_options
def cmd_eigs(config_path, out_dir, seed, workers, figures):
    """Pencil eigenvalues, with exact beam values for finite-difference pairs."""
    try:
        sc = _load(config_path)
        lams = sc.spectrum.lambdas
        exact = beam_eigenvalues(len(lams)) if sc.is_fd else [(None, "", "")] * len(lams)
        rows = []
        for i, lam in enumerate(lams):
            ex, kind, k = exact[i]
            rel = abs(lam - ex) / ex if ex is not None else None
            rows.append((i + 1, float(lam), ex, rel, kind, k))
        want_fig = _figures_wanted(figures, sc)
    except (DuffGapError, ValueError) as exc:
        _fail("eigs", exc)
    out = _out(out_dir)
    _write_csv(out / "eigs.csv", EIGS_COLUMNS, rows)
    for r in rows:
        click.echo("  ".join(_fmt(x) if not isinstance(x, float) else f"{x:.10g}" for x in r))
    if want_fig:
        from .plotting import plot_eigs

        plot_eigs(out / "eigs.png", [r[1] for r in rows], [r[2] for r in rows] if sc.is_fd else None)


def _constants(sc):
    lam = sc.lam
    mode = sc.mode()
    return mode, lyapunov.certified_constants(sc.pair, sc.spectrum, mode, lam)


@main.command("constants")
@common_options
def cmd_constants(config_path, out_dir, seed, workers, figures):
    """Certified constant chain with the binding inequality of each constant."""
    try:
        sc = _load(config_path)
        mode, c = _constants(sc)
        slack = c.verify()
        doc = {
            "lambda": sc.lam,
            "lambda1": sc.spectrum.lambda1,
            "lambda2": sc.spectrum.lambda2,
            "lambda0": mode.lambda0,
            "mu1": c.mu1,
            "mu2": c.mu2,
            "mu3": c.mu3,
            "mu3_exact": mode.mu3_exact,
            "constants": [{"name": k, "value": v, "binding": b} for k, v, b in c.table()],
            "eps0_certified": c.eps0_certified,
            "inequality_slack": slack,
        }
    except (DuffGapError, ValueError) as exc:
        _fail("constants", exc)
    out = _out(out_dir)
    _write_json(out / "constants.json", doc)
    for k, v, b in c.table():
        click.echo(f"{k:14s} {v:.10g}  [{b}]")


@main.command("simulate")
@common_options
def cmd_simulate(config_path, out_dir, seed, workers, figures):
    """Integrate one trajectory, monitor every certified inequality and classify it.

    Exits with status 1 if any inequality is violated beyond its slack.
    """
    try:
        sc = _load(config_path)
        lam = sc.lam
        mode, c = _constants(sc)
        forcing = config.build_forcing(sc, c)
        s0 = config.build_initial(sc, seed)
        opts = config.integrator_options(sc)
        mon = sc.section("monitor")
        tail = float(mon.get("tail_fraction", asymptotics.TAIL_FRACTION))
        traj = integrate(sc.pair, lam, forcing, s0, opts["T"], tol=opts["tol"], stride=opts["stride"], scheme=opts["scheme"])
        report = lyapunov.monitor(traj, forcing, sc.pair, lam, sc.spectrum, mode, c, slack=float(mon.get("slack", lyapunov.DEFAULT_SLACK)))
        try:
            lab = asymptotics.classify(traj, sc.pair, sc.spectrum, lam, tail)
            label = {"sigma": lab.sigma, "label": lab.name, "tail_metric": lab.tail_metric, "margin": lab.margin}
        except HorizonTooShort as exc:
            label = {"skipped": str(exc)}
        try:
            ub = asymptotics.ultimate_bound_check(traj, sc.pair, c, forcing, tail)
            ultimate = {"tail_value": ub.tail_value, "bound": ub.bound, "status": "PASS" if ub.passed else "FAIL"}
        except HorizonTooShort as exc:
            ultimate = {"status": "SKIPPED", "reason": str(exc)}
        sl = traj.tail(tail)
        if traj.t[sl].size >= asymptotics.MIN_TAIL_SAMPLES:
            fsup = float(forcing.norm(traj.t[sl]).max())
            f_tail = float(report.F[sl].max())
            f_bound = c.M1 * fsup**2 + lyapunov.DEFAULT_SLACK * (1.0 + abs(f_tail))
            f_check = {"tail_F": f_tail, "bound": f_bound, "status": "PASS" if f_tail <= f_bound else "FAIL"}
        else:
            f_check = {"status": "SKIPPED", "reason": "tail window too short"}
        summary = report.summary(tail)
        summary.update(
            {
                "basin": label,
                "ultimate_bound": ultimate,
                "tail_F_bound": f_check,
                "integrator": {**opts, "accepted": traj.n_accepted, "rejected": traj.n_rejected},
                "forcing": {"kind": forcing.kind, "amplitude": forcing.bound},
            }
        )
        want_traj = bool(sc.section("outputs").get("trajectory", True))
        want_fig = _figures_wanted(figures, sc)
    except (DuffGapError, ValueError, np.linalg.LinAlgError) as exc:
        _fail("simulate", exc)
    out = _out(out_dir)
    if want_traj:
        traj.write_csv(out / "trajectory.csv")
    report.write_csv(out / "energy.csv")
    _write_json(out / "summary.json", summary)
    if want_fig:
        from .plotting import plot_energies, plot_phase

        plot_energies(out / "energy.png", report, c.sigma0)
        plot_phase(out / "phase.png", report)
    click.echo(
        f"basin={label.get('label', 'n/a')} tail_metric={label.get('tail_metric', float('nan')):.3e} "
        f"violations={report.n_violations}"
    )
    if report.n_violations:
        sys.exit(EXIT_VIOLATION)


@main.command("sweep")
@common_options
def cmd_sweep(config_path, out_dir, seed, workers, figures):
    """Classify seeded random initial data; rows are written in seed order."""
    try:
        sc = _load(config_path)
        lam = sc.lam
        section = sc.section("sweep")
        if not section:
            raise ConfigError("this command needs a 'sweep' section", where="sweep")
        _, c = _constants(sc)
        forcing = config.build_forcing(sc, c)
        opts = config.integrator_options(sc)
        tail = float(sc.section("monitor").get("tail_fraction", asymptotics.TAIL_FRACTION))
        base = section.get("seed", 0) if seed is None else seed
        data = [
            asymptotics.random_initial_state(
                sc.spectrum, base + i, radius=section.get("radius", 3.0), velocity_radius=section.get("velocity_radius"),
                modes=section.get("modes"), flip=section.get("flip", False),
            )
            for i in range(section["count"])
        ]
        if section.get("flip", False):
            forcing = forcing.negated()
        rows = asymptotics.basin_sweep(
            sc.pair, lam, sc.spectrum, forcing, data, opts["T"], tol=opts["tol"], stride=opts["stride"],
            tail_fraction=tail, workers=workers,
        )
        want_fig = _figures_wanted(figures, sc)
    except (DuffGapError, ValueError) as exc:
        _fail("sweep", exc)
    out = _out(out_dir)
    asymptotics.write_sweep_csv(out / "sweep.csv", rows)
    asymptotics.write_sweep_json(out / "sweep.json", rows, forcing)
    if want_fig:
        from .plotting import plot_sweep

        plot_sweep(out / "sweep.png", data, rows)
    click.echo(json.dumps(asymptotics.sweep_summary(rows, forcing)["counts"], sort_keys=True))


@main.command("verify")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None, help="Write verify.json here.")
@click.option("--seed", type=int, default=0, show_default=True)
def cmd_verify(out_dir, seed):
    """Run the built-in property checks; exits 1 if any fails."""
    from .selfcheck import run_suite

    results = run_suite(seed)
    for r in results:
        click.echo(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail}")
    if out_dir is not None:
        _write_json(_out(out_dir) / "verify.json", [r.__dict__ for r in results])
    if not all(r.passed for r in results):
        sys.exit(EXIT_VIOLATION)


if __name__ == "__main__":  # pragma: no cover
    main()
