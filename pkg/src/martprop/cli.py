"""Command-line front end.

Validation happens before any computation; every report embeds the fully
resolved config and seed so runs are reproducible byte-for-byte.  Exit
codes: 0 success, 1 validation/config error, 2 numerical failure,
3 self-test failure.
"""

from __future__ import annotations

import sys

import click

from . import catalog, config as cfgmod, report as repmod
from .errors import (
    ConfigError,
    DegenerateDiffusion,
    DimensionMismatch,
    EvalDomain,
    ExprSyntaxError,
    IndexOutOfRange,
    JumpBoundViolation,
    MartpropError,
    PlanTooCoarse,
    PreconditionViolated,
    QuadratureFailure,
    UnboundedOnCompact,
    UnknownIdentifier,
    ValidationError,
)
from .feller import martingale_verdict
from .hilbert import (
    check_conditions,
    estimate_hilbert_expectation,
    hilbert_novikov_estimate,
    sample_path_array,
)
from .jumpkit import validate as validate_jump
from .jumpkit import verdict_jump, verify_compensator_identity
from .mc import (
    SimConfig,
    deficit_for,
    estimate_mean_direct,
    localized_bound_check,
    novikov_estimate,
)

_VALIDATION_ERRORS = (ConfigError, ValidationError, ExprSyntaxError,
                      UnknownIdentifier, DimensionMismatch,
                      IndexOutOfRange, PreconditionViolated)
_NUMERICAL_ERRORS = (QuadratureFailure, PlanTooCoarse, UnboundedOnCompact,
                     JumpBoundViolation, EvalDomain, DegenerateDiffusion)


def _common(fn):
    fn = click.option("--config", "config_path", type=click.Path(),
                      default=None, help="JSON config file.")(fn)
    fn = click.option("--preset", default=None,
                      help="Named preset from the built-in catalog.")(fn)
    fn = click.option("--seed", type=int, default=None,
                      help="Override the RNG seed.")(fn)
    fn = click.option("--threads", type=int, default=1,
                      help="Worker threads (never affects outputs).")(fn)
    fn = click.option("--output", "output_path", default=None,
                      help="Report destination ('-' for stdout).")(fn)
    fn = click.option("--format", "fmt",
                      type=click.Choice(["json", "csv"]),
                      default="json", help="Report format.")(fn)
    return fn


def _resolve(config_path, preset, seed, kind=None):
    raw = cfgmod.load_file(config_path) if config_path else {}
    rc = cfgmod.resolve(raw, preset_name=preset, seed=seed)
    if kind is not None and rc.kind != kind:
        raise ConfigError(
            f"this command needs a {kind} config, got {rc.kind}")
    return rc


def _emit(rep, rc, output_path, fmt, curve=None):
    if fmt == "csv":
        if curve is None:
            raise ConfigError("csv format is only available for "
                              "commands that produce a curve",
                              field="--format")
        text = repmod.curve_csv(curve)
    else:
        text = repmod.render_json(rep)
    if output_path in (None, "-"):
        click.echo(text, nl=False)
    else:
        with open(output_path, "w") as fh:
            fh.write(text)


def _echo_estimate(label, est):
    flag = "  [heavy-tail]" if est.heavy_tail_flag else ""
    click.echo(f"{label}: {est.mean:.6f} +/- {est.std_error:.6f} "
               f"(n_eff={est.n_effective}){flag}", err=True)


def _echo_curve(curve):
    click.echo(f"{'level':>8} {'time_cap':>9} {'survival':>10} "
               f"{'std_error':>10}", err=True)
    for (m, cap, q, se) in curve.entries:
        click.echo(f"{m:8g} {cap:9g} {q:10.6f} {se:10.6f}", err=True)
    click.echo(f"deficit: {curve.deficit:.6f}  "
               f"converged: {curve.converged}", err=True)


def _run(body):
    try:
        body()
    except _VALIDATION_ERRORS as exc:
        fld = getattr(exc, "field", "")
        prefix = f"{fld}: " if fld else ""
        click.echo(f"error: {prefix}{exc}", err=True)
        sys.exit(1)
    except _NUMERICAL_ERRORS + (MartpropError,) as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        sys.exit(2)


@click.group()
@click.version_option()
def main():
    """Martingale-property analysis of stochastic exponentials."""


@main.command()
def presets():
    """List the built-in example presets."""
    for name in catalog.names():
        click.echo(f"{name}: {catalog.get(name).description}")


@main.command()
@_common
@click.option("--with-mc", is_flag=True,
              help="Attach a Monte Carlo cross-check (direct mean and "
                   "localized deficit curve).")
def classify(config_path, preset, seed, threads, output_path, fmt,
             with_mc):
    """Feller-test classification of a scalar diffusion exponential."""
    def body():
        rc = _resolve(config_path, preset, seed, kind="diffusion")
        verdict = martingale_verdict(rc.spec, rc.exponent)
        click.echo(f"classification: {verdict.classification.value}",
                   err=True)
        estimates = curves = None
        curve = None
        if with_mc:
            direct = estimate_mean_direct(rc.spec, rc.exponent, rc.t,
                                          rc.mc, threads=threads)
            curve = deficit_for(rc.spec, rc.exponent, rc.plan, rc.t,
                                rc.mc, threads=threads,
                                raise_on_coarse=False)
            _echo_estimate("direct mean", direct)
            _echo_curve(curve)
            estimates = {"direct_mean": repmod.mc_estimate_dict(direct)}
            curves = {"deficit": repmod.deficit_curve_dict(curve)}
        rep = repmod.build_report("classify", rc,
                                  verdict=verdict.to_dict(),
                                  estimates=estimates, curves=curves)
        _emit(rep, rc, output_path, fmt, curve=curve)
    _run(body)


@main.command()
@_common
def deficit(config_path, preset, seed, threads, output_path, fmt):
    """Localized martingale-deficit curve for a diffusion exponential."""
    def body():
        rc = _resolve(config_path, preset, seed, kind="diffusion")
        localized_bound_check(rc.spec, rc.exponent, rc.plan)
        curve = deficit_for(rc.spec, rc.exponent, rc.plan, rc.t, rc.mc,
                            threads=threads, raise_on_coarse=False)
        _echo_curve(curve)
        rep = repmod.build_report(
            "deficit", rc,
            curves={"deficit": repmod.deficit_curve_dict(curve)})
        _emit(rep, rc, output_path, fmt, curve=curve)
    _run(body)


@main.command()
@_common
def novikov(config_path, preset, seed, threads, output_path, fmt):
    """Monte Carlo probe of Novikov's condition E[exp(q/2 . t)]."""
    def body():
        rc = _resolve(config_path, preset, seed)
        if rc.kind == "diffusion":
            est = novikov_estimate(rc.spec, rc.exponent, rc.t, rc.mc,
                                   threads=threads)
        elif rc.kind == "hilbert":
            est = hilbert_novikov_estimate(rc.functional, rc.covariance,
                                           rc.t, rc.mc, threads=threads)
        else:
            raise ConfigError("novikov needs a diffusion or hilbert "
                              "config")
        _echo_estimate("novikov mean", est)
        rep = repmod.build_report(
            "novikov", rc,
            estimates={"novikov": repmod.mc_estimate_dict(est)})
        _emit(rep, rc, output_path, fmt)
    _run(body)


@main.command()
@_common
def jump(config_path, preset, seed, threads, output_path, fmt):
    """Jump-diffusion density-process analysis."""
    def body():
        rc = _resolve(config_path, preset, seed, kind="jump")
        validate_jump(rc.triplet, rc.girsanov)
        verdict = verdict_jump(rc.triplet, rc.girsanov, rc.t, rc.plan,
                               rc.mc)
        comp = verify_compensator_identity(rc.triplet, rc.girsanov,
                                           rc.mc, rc.t)
        click.echo(f"classification: {verdict.classification.value}",
                   err=True)
        curve = verdict.deficit_curve
        if curve is not None:
            _echo_curve(curve)
        click.echo(f"compensator identity: "
                   f"{'pass' if comp.passed else 'FAIL'} "
                   f"(gap {comp.mean_gap:.3e} +/- {comp.std_error:.3e})",
                   err=True)
        rep = repmod.build_report(
            "jump", rc, verdict=verdict.to_dict(),
            estimates={"compensator_identity": comp.to_dict()},
            curves={"deficit": repmod.deficit_curve_dict(curve)}
            if curve is not None else None)
        _emit(rep, rc, output_path, fmt, curve=curve)
    _run(body)


@main.command()
@_common
@click.option("--condition-paths", type=int, default=128,
              help="Paths used for the empirical condition checks.")
def hilbert(config_path, preset, seed, threads, output_path, fmt,
            condition_paths):
    """Cylindrical exponent over truncated Q-Brownian motion."""
    def body():
        rc = _resolve(config_path, preset, seed, kind="hilbert")
        rc.functional.check_modes(rc.covariance.modes)
        cond_cfg = SimConfig(n_paths=condition_paths,
                             dt_max=rc.mc.dt_max, horizon=rc.t,
                             seed=rc.mc.seed, adaptive=False,
                             explosion_guard=rc.mc.explosion_guard)
        times, states = sample_path_array(rc.covariance, cond_cfg,
                                          condition_paths)
        cond = check_conditions(rc.functional, rc.covariance, times,
                                states)
        direct, curve = estimate_hilbert_expectation(
            rc.functional, rc.covariance, rc.t, rc.plan, rc.mc,
            threads=threads, conditions=cond)
        click.echo(f"conditions: "
                   f"{'pass' if cond.passed else 'FAIL'} "
                   f"(L_hat={cond.lipschitz_hat:.4f}, "
                   f"lambda_hat={cond.growth_hat:.4f})", err=True)
        _echo_estimate("direct mean", direct)
        _echo_curve(curve)
        rep = repmod.build_report(
            "hilbert", rc,
            estimates={"direct_mean": repmod.mc_estimate_dict(direct),
                       "conditions": cond.to_dict()},
            curves={"deficit": repmod.deficit_curve_dict(curve)})
        _emit(rep, rc, output_path, fmt, curve=curve)
    _run(body)


@main.command()
@click.option("--threads", type=int, default=1)
@click.option("--fast", is_flag=True,
              help="Skip the slowest criteria (runs 1, 6, 9 only).")
def selftest(threads, fast):
    """Run the built-in acceptance suite; exit 3 on any failure."""
    from . import acceptance
    results = acceptance.run_all(threads=threads, fast=fast)
    failed = False
    for (name, passed, details) in results:
        status = "PASS" if passed else "FAIL"
        click.echo(f"{status}  {name}: {details}")
        failed = failed or not passed
    if failed:
        sys.exit(3)


if __name__ == "__main__":
    main()
