"""Feller's test for explosion of a 1-d homogeneous diffusion.

For dX = b(X)dt + sigma(X)dW on (l, r) with c = sigma^2, the scale density
is s'(x) = exp(-int_xi^x 2b/c dz) and the explosion functional is

    v(e) = int_xi^e s'(y) int_xi^y [2 / (c(z) s'(z))] dz dy.

The diffusion is non-explosive iff v = infinity at both endpoints.  Because
s' ranges over exp(+-huge), every integral here is carried in the log
domain; the improper limits are probed along a geometric sequence toward
the endpoint and declared infinite/finite from the partial-integral
behavior (see feller_v).

Combined with the Girsanov modification this yields the martingale verdict
for Z = E(beta(X).X^c): Z is a true martingale iff the modified diffusion
(drift b + c beta) is non-explosive, provided the original one is.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import (DegenerateDiffusion, MartpropError, PreconditionViolated,
                     QuadratureFailure)
from .model import (Classification, DiffusionSpec, ExponentSpec,
                    MartingaleVerdict, modified_drift,
                    require_scalar_homogeneous)
from .quad import CumulativeIntegral, _logaddexp, log_quad_adaptive

DIVERGENCE_THRESHOLD = 1e12
PROBE_REL_TOL = 1e-3
# increments of a doubling-probe partial integral that shrink no faster
# than this ratio over three consecutive probes indicate (at least)
# logarithmic divergence
FLAT_RATIO = 0.999
MAX_PROBES_INFINITE = 42
MAX_PROBES_FINITE_ENDPOINT = 48


@dataclass
class VSide:
    """Verdict for one endpoint of the v-integral."""

    status: str                 # "finite" | "infinite" | "failed"
    value: float = math.nan     # finite value when status == "finite"
    reason: str = ""
    probes_used: int = 0
    log_partial: float = -math.inf

    def to_dict(self):
        d = {"status": self.status, "probes_used": self.probes_used}
        if self.status == "finite":
            d["value"] = self.value
        if self.reason:
            d["reason"] = self.reason
        return d


@dataclass
class FellerReport:
    v_left: VSide
    v_right: VSide
    xi: float
    conclusion: str = ""        # "Explosive" | "NonExplosive" | "Unknown"
    diagnostics: list = field(default_factory=list)

    def __post_init__(self):
        if not self.conclusion:
            if (self.v_left.status == "failed"
                    or self.v_right.status == "failed"):
                self.conclusion = "Unknown"
            elif (self.v_left.status == "infinite"
                    and self.v_right.status == "infinite"):
                self.conclusion = "NonExplosive"
            else:
                self.conclusion = "Explosive"

    def to_dict(self):
        return {"conclusion": self.conclusion, "xi": self.xi,
                "v_left": self.v_left.to_dict(),
                "v_right": self.v_right.to_dict(),
                "diagnostics": list(self.diagnostics)}


def _coefficients(spec):
    b_expr = spec.b[0]
    c_expr = spec.c_expr(0, 0)

    def b(z):
        return b_expr.eval_raw(0.0, z)

    def c(z):
        value = c_expr.eval_raw(0.0, z)
        if not value > 0.0:
            raise DegenerateDiffusion(
                f"c({z}) = {value} is not positive")
        if not math.isfinite(value):
            raise DegenerateDiffusion(f"c({z}) is not finite")
        return value

    return b, c


def scale_density(spec: DiffusionSpec, x: float, xi: float) -> float:
    """s'(x) = exp(-int_xi^x 2 b/c dz) for a 1-d homogeneous spec."""
    require_scalar_homogeneous(spec, "scale_density")
    return math.exp(log_scale_density(spec, x, xi))


def log_scale_density(spec: DiffusionSpec, x: float, xi: float) -> float:
    b, c = _coefficients(spec)
    g = CumulativeIntegral(lambda z: 2.0 * b(z) / c(z), xi)
    return -g.at(x)


def feller_v(spec: DiffusionSpec, endpoint: str, xi: float,
             tolerance: float = PROBE_REL_TOL) -> VSide:
    """Evaluate v at one endpoint ("left"/"right") of the state interval.

    Probe points march geometrically toward the endpoint; the partial
    integral is declared infinite once it exceeds DIVERGENCE_THRESHOLD or
    its per-probe increments stop decaying, and finite once the increments
    fall below tolerance * value while decaying.  Raises QuadratureFailure
    when the probes are exhausted undecided.
    """
    require_scalar_homogeneous(spec, "feller_v")
    l, r = spec.intervals[0]
    if endpoint == "right":
        direction, bound = 1.0, r
    elif endpoint == "left":
        direction, bound = -1.0, l
    else:
        raise ValueError(f"endpoint must be 'left' or 'right', got {endpoint!r}")
    if not l < xi < r:
        raise PreconditionViolated(
            f"reference point xi={xi} outside the state interval ({l}, {r})")

    b, c = _coefficients(spec)
    g = CumulativeIntegral(lambda z: 2.0 * b(z) / c(z), xi)

    def phi(u):
        return xi + direction * u

    def log_inner_integrand(u):
        z = phi(u)
        return math.log(2.0) - math.log(c(z)) + g.at(z)

    # probe sequence in the distance coordinate u >= 0
    if math.isinf(bound):
        step = max(1.0, abs(xi))
        probes = [step * 2.0 ** k for k in range(MAX_PROBES_INFINITE)]
    else:
        span = abs(bound - xi)
        probes = [span * (1.0 - 2.0 ** -(k + 1))
                  for k in range(MAX_PROBES_FINITE_ENDPOINT)]

    # fail fast on a degenerate diffusion coefficient: c must be positive
    # and finite along the probe path before any quadrature is attempted
    c(phi(0.0))
    for u_k in probes[:8]:
        for frac in (0.25, 0.5, 0.75, 1.0):
            c(phi(frac * u_k))

    log_v = -math.inf
    log_inner_prefix = -math.inf
    prev_increments = []  # log of per-probe increments
    u_prev = 0.0
    for k, u_k in enumerate(probes):
        prefix = log_inner_prefix
        lo = u_prev

        def log_outer_integrand(u):
            z = phi(u)
            if u <= lo:
                log_inner = prefix
            else:
                log_inner = _logaddexp(
                    prefix, log_quad_adaptive(log_inner_integrand, lo, u))
            return -g.at(z) + log_inner

        log_dv = log_quad_adaptive(log_outer_integrand, u_prev, u_k)
        log_inner_prefix = _logaddexp(
            log_inner_prefix, log_quad_adaptive(log_inner_integrand,
                                                u_prev, u_k))
        log_v = _logaddexp(log_v, log_dv)
        u_prev = u_k
        prev_increments.append(log_dv)

        if log_v > math.log(DIVERGENCE_THRESHOLD):
            return VSide("infinite", reason="partial integral exceeded "
                         "divergence threshold", probes_used=k + 1,
                         log_partial=log_v)
        if len(prev_increments) >= 4:
            ratios = [prev_increments[-i] - prev_increments[-i - 1]
                      for i in (1, 2, 3)]
            if all(rho >= math.log(FLAT_RATIO) for rho in ratios):
                return VSide("infinite", reason="non-decaying probe "
                             "increments (divergent tail)",
                             probes_used=k + 1, log_partial=log_v)
        if (len(prev_increments) >= 2
                and log_dv < log_v + math.log(tolerance)
                and log_dv < prev_increments[-2] + math.log(0.5)):
            return VSide("finite", value=math.exp(log_v),
                         probes_used=k + 1, log_partial=log_v)

    raise QuadratureFailure(
        f"feller_v undecided after {len(probes)} probes toward the "
        f"{endpoint} endpoint (log partial = {log_v:.3g})")


def classify_explosion(spec: DiffusionSpec, xi: float = None) -> FellerReport:
    """Run Feller's test at both endpoints and combine into a report."""
    require_scalar_homogeneous(spec, "classify_explosion")
    if xi is None:
        xi = spec.x0[0]
    sides = {}
    diagnostics = []
    for endpoint in ("left", "right"):
        try:
            sides[endpoint] = feller_v(spec, endpoint, xi)
        except (QuadratureFailure, DegenerateDiffusion, MartpropError) as exc:
            sides[endpoint] = VSide("failed", reason=str(exc))
            diagnostics.append(f"{endpoint}: {exc}")
    return FellerReport(v_left=sides["left"], v_right=sides["right"],
                        xi=xi, diagnostics=diagnostics)


def _grid_check_bounded(exprs, intervals, n_points=201):
    """Empirical local-boundedness check; returns failure strings."""
    import numpy as np
    failures = []
    (l, r) = intervals[0]
    lo = l if math.isfinite(l) else -50.0
    hi = r if math.isfinite(r) else 50.0
    pad = (hi - lo) * 1e-9
    xs = np.linspace(lo + pad, hi - pad, n_points)
    for e in exprs:
        values = e.eval_array(0.0, xs)
        if not np.all(np.isfinite(values)):
            bad = xs[~np.isfinite(values)][0]
            failures.append(
                f"{e.render()} is non-finite near x={bad:g}")
    return failures


def martingale_verdict(spec: DiffusionSpec, exp: ExponentSpec,
                       xi: float = None,
                       grid_checks: str = "gate") -> MartingaleVerdict:
    """Classify Z = E(beta(X).X^c) via Feller's test on both dynamics.

    grid_checks: "gate" raises PreconditionViolated when c <= 0 on the
    validation grid and downgrades to Inconclusive on soft failures;
    "warn" only records notes.
    """
    require_scalar_homogeneous(spec, "martingale_verdict")
    notes = []
    b, c = _coefficients(spec)
    # hard check: c > 0 on a validation grid
    hard = []
    (l, r) = spec.intervals[0]
    lo = l if math.isfinite(l) else -50.0
    hi = r if math.isfinite(r) else 50.0
    n = 201
    for i in range(n):
        z = lo + (hi - lo) * (i + 0.5) / n
        try:
            c(z)
        except DegenerateDiffusion as exc:
            hard.append(str(exc))
            break
    if hard:
        if grid_checks == "gate":
            raise PreconditionViolated("; ".join(hard))
        notes.extend(hard)
    soft = _grid_check_bounded(list(spec.b) + list(exp.beta),
                               spec.intervals)
    if soft:
        notes.extend(soft)
        if grid_checks == "gate":
            notes.append("coefficient boundedness check failed; "
                         "verdict downgraded to Inconclusive")
            return MartingaleVerdict(Classification.INCONCLUSIVE,
                                     notes=notes)

    report_orig = classify_explosion(spec, xi=xi)
    report_mod = classify_explosion(modified_drift(spec, exp), xi=xi)
    notes.append("uniqueness of the semimartingale problem is assumed, "
                 "not verified")

    if report_orig.conclusion == "NonExplosive":
        if report_mod.conclusion == "NonExplosive":
            classification = Classification.TRUE_MARTINGALE
        elif report_mod.conclusion == "Explosive":
            classification = Classification.STRICT_LOCAL
        else:
            classification = Classification.INCONCLUSIVE
            notes.append("modified dynamics: Feller test inconclusive")
    else:
        classification = Classification.INCONCLUSIVE
        if report_orig.conclusion == "Explosive":
            notes.append(
                "original dynamics explosive: outside the scope of the "
                "Feller pipeline; use the localized deficit estimator "
                "restricted to [0, explosion)")
        else:
            notes.append("original dynamics: Feller test inconclusive")
    return MartingaleVerdict(classification,
                             feller_original=report_orig,
                             feller_modified=report_mod,
                             notes=notes)
