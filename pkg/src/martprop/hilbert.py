"""Truncated Hilbert-space Brownian motion and path-functional exponents.

A Q-Brownian motion with nuclear covariance Q is realized by spectral
truncation: K independent scalar Brownian modes with variances given by
Q's eigenvalues.  The exponent phi may look at the whole past of the path
(predictably, through sup over times strictly before t); the flagship
example is the running supremum W* = sup_{s<.} W_s, for which
Z = E(phi(W).W) is a true martingale even though Novikov's condition
fails for large horizons.

Every finite truncation is itself a legitimate instance of the underlying
existence/uniqueness theorem, so desk-scale verification on truncations is
faithful; convergence in the number of modes is reported, not proven.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .expr import CoefficientExpr
from .mc import DeficitCurve, MCEstimate, PathRecord, SimConfig, TerminalStatus
from .model import LocalizationPlan
from .rng import path_generator

_HILBERT_CHUNK = 512


@dataclass(frozen=True)
class CovarianceSpec:
    """Spectrum of the covariance operator: diag(eigenvalues)."""

    modes: int
    eigenvalues: tuple

    def __post_init__(self):
        object.__setattr__(self, "eigenvalues",
                           tuple(float(v) for v in self.eigenvalues))
        if self.modes < 1:
            raise ValidationError("modes must be positive")
        if len(self.eigenvalues) != self.modes:
            raise ValidationError(
                f"expected {self.modes} eigenvalues, "
                f"got {len(self.eigenvalues)}")
        if any(v <= 0 for v in self.eigenvalues):
            raise ValidationError("eigenvalues must be positive")
        for a, b in zip(self.eigenvalues, self.eigenvalues[1:]):
            if b > a:
                raise ValidationError("eigenvalues must be nonincreasing")

    @classmethod
    def dyadic(cls, modes):
        return cls(modes=modes,
                   eigenvalues=tuple(2.0 ** -(k + 1) for k in range(modes)))


@dataclass(frozen=True)
class FunctionalSpec:
    """The exponent phi: (t, path up to t) -> H.

    kind "pointwise": one expression per mode, phi_k = expr_k(t, W_k(t-)).
    kind "running_sup": phi(t) = sup_{s<t}(weights . W(s)) * direction.
    """

    kind: str
    exprs: tuple = ()
    weights: tuple = ()
    direction: tuple = ()
    claimed_lipschitz: float = None
    claimed_growth: float = None

    def __post_init__(self):
        if self.kind == "pointwise":
            exprs = []
            for e in self.exprs:
                exprs.append(e if isinstance(e, CoefficientExpr)
                             else CoefficientExpr.parse(str(e)))
            object.__setattr__(self, "exprs", tuple(exprs))
            if not self.exprs:
                raise ValidationError("pointwise phi needs expressions")
        elif self.kind == "running_sup":
            w = np.asarray(self.weights, dtype=np.float64)
            d = np.asarray(self.direction, dtype=np.float64)
            if w.size == 0 or d.size == 0:
                raise ValidationError(
                    "running_sup needs weights and direction")
            for name, v in (("weights", w), ("direction", d)):
                nrm = float(np.linalg.norm(v))
                if abs(nrm - 1.0) > 1e-9:
                    raise ValidationError(
                        f"{name} must have unit norm, got {nrm}")
            object.__setattr__(self, "weights", tuple(w.tolist()))
            object.__setattr__(self, "direction", tuple(d.tolist()))
        else:
            raise ValidationError(
                f"unknown functional kind {self.kind!r}")

    def check_modes(self, modes):
        n = len(self.exprs) if self.kind == "pointwise" \
            else len(self.weights)
        if n != modes:
            raise ValidationError(
                f"functional spans {n} modes, covariance has {modes}")
        if self.kind == "running_sup" and len(self.direction) != modes:
            raise ValidationError("direction length must equal modes")

    @classmethod
    def running_sup(cls, modes, mode_index=0, claimed_lipschitz=1.0,
                    claimed_growth=1.0):
        w = [0.0] * modes
        w[mode_index] = 1.0
        return cls(kind="running_sup", weights=tuple(w), direction=tuple(w),
                   claimed_lipschitz=claimed_lipschitz,
                   claimed_growth=claimed_growth)


def _grid(config, eval_times):
    steps = max(1, int(math.ceil(config.horizon / config.dt_max)))
    times = set(np.linspace(0.0, config.horizon, steps + 1).tolist())
    times.update(float(t) for t in eval_times)
    return np.array(sorted(times))


def phi_values(phi: FunctionalSpec, cov: CovarianceSpec, times,
               states) -> np.ndarray:
    """phi along recorded paths; states has shape (..., T, K).

    Predictable convention: at grid index i the running sup is taken over
    indices strictly before i (empty sup = 0), so phi(0) = phi(., 0).
    """
    phi.check_modes(cov.modes)
    states = np.asarray(states, dtype=np.float64)
    single = states.ndim == 2
    if single:
        states = states[None]
    n, T, K = states.shape
    out = np.empty((n, T, K))
    if phi.kind == "pointwise":
        for k, e in enumerate(phi.exprs):
            for i in range(T):
                out[:, i, k] = e.eval_array(times[i], states[:, i, k])
    else:
        w = np.asarray(phi.weights)
        d = np.asarray(phi.direction)
        proj = states @ w                        # (n, T)
        run = np.maximum.accumulate(proj, axis=1)
        sup_before = np.concatenate(
            [np.zeros((n, 1)), run[:, :-1]], axis=1)
        out = sup_before[:, :, None] * d[None, None, :]
    return out[0] if single else out


def _run_hilbert_chunk(cov, phi, config, indices, levels, eval_times,
                       modified):
    lam = np.asarray(cov.eigenvalues)
    K = cov.modes
    grid = _grid(config, eval_times)
    T = len(grid)
    n = len(indices)
    L, E = len(levels), len(eval_times)
    eval_lookup = {t: j for j, t in enumerate(eval_times)}

    normals = np.empty((n, T - 1, K))
    for row, idx in enumerate(indices):
        gen = path_generator(config.seed, int(idx))
        normals[row] = gen.standard_normal((T - 1, K))

    w = None
    d = None
    if phi.kind == "running_sup":
        w = np.asarray(phi.weights)
        d = np.asarray(phi.direction)

    x = np.zeros((n, K))
    sup_before = np.zeros(n)         # running sup strictly before t
    logz = np.zeros(n)
    nov = np.zeros(n)                # int ||Q^{1/2} phi||^2 ds
    passage = np.full((n, L), math.inf)
    crossed = np.zeros((n, L), dtype=bool)
    logz_evals = np.full((n, E), math.nan)
    nov_evals = np.full((n, E), math.nan)
    sqrt_lam = np.sqrt(lam)

    for i in range(1, T):
        t0, t1 = grid[i - 1], grid[i]
        dt = t1 - t0
        if phi.kind == "running_sup":
            phi_now = sup_before[:, None] * d[None, :]
        else:
            phi_now = np.empty((n, K))
            for k, e in enumerate(phi.exprs):
                phi_now[:, k] = e.eval_array(t0, x[:, k])
        dW = normals[:, i - 1, :] * (sqrt_lam * math.sqrt(dt))[None, :]
        if modified:
            dW = dW + lam[None, :] * phi_now * dt
        qphi2 = np.sum(lam[None, :] * phi_now * phi_now, axis=1)
        logz += np.sum(phi_now * dW, axis=1) - 0.5 * qphi2 * dt
        nov += qphi2 * dt
        x += dW
        if w is not None:
            sup_before = np.maximum(sup_before, x @ w)
        if L:
            norm = np.sqrt(np.sum(x * x, axis=1))
            newly = (~crossed) & (norm[:, None] >= np.asarray(levels)[None])
            if np.any(newly):
                rows, cols = np.nonzero(newly)
                passage[rows, cols] = t1
                crossed[rows, cols] = True
        j = eval_lookup.get(float(t1))
        if j is not None:
            logz_evals[:, j] = logz
            nov_evals[:, j] = nov
    return logz_evals, nov_evals, passage, x, grid


def _run_hilbert(cov, phi, config, levels=(), eval_times=None,
                 modified=False, threads=1):
    phi.check_modes(cov.modes)
    if eval_times is None:
        eval_times = (config.horizon,)
    eval_times = tuple(sorted(set(float(t) for t in eval_times)))
    indices = np.arange(config.n_paths)
    chunks = [indices[i:i + _HILBERT_CHUNK]
              for i in range(0, len(indices), _HILBERT_CHUNK)]

    def work(chunk):
        return _run_hilbert_chunk(cov, phi, config, chunk, levels,
                                  eval_times, modified)

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(c) for c in chunks]
    logz = np.concatenate([p[0] for p in parts])
    nov = np.concatenate([p[1] for p in parts])
    passage = np.concatenate([p[2] for p in parts])
    final = np.concatenate([p[3] for p in parts])
    return logz, nov, passage, final, parts[0][4], eval_times


def simulate_q_brownian(cov: CovarianceSpec, config: SimConfig,
                        path_index: int) -> PathRecord:
    """One truncated Q-Brownian path on the time grid (dim = modes)."""
    gen = path_generator(config.seed, int(path_index))
    grid = _grid(config, (config.horizon,))
    T = len(grid)
    normals = gen.standard_normal((T - 1, cov.modes))
    sqrt_lam = np.sqrt(np.asarray(cov.eigenvalues))
    dt = np.diff(grid)
    increments = normals * sqrt_lam[None, :] * np.sqrt(dt)[:, None]
    states = np.concatenate([np.zeros((1, cov.modes)),
                             np.cumsum(increments, axis=0)])
    return PathRecord(times=grid, states=states,
                      terminal_status=TerminalStatus(
                          "ReachedHorizon", time=float(grid[-1])))


def sample_path_array(cov: CovarianceSpec, config: SimConfig, n: int):
    """(times, states) with states of shape (n, T, modes); desk scale."""
    grid = _grid(config, (config.horizon,))
    out = np.empty((n, len(grid), cov.modes))
    for p in range(n):
        out[p] = simulate_q_brownian(cov, config, p).states
    return grid, out


@dataclass
class ConditionsReport:
    lipschitz_hat: float
    growth_hat: float
    claimed_lipschitz: float
    claimed_growth: float
    lipschitz_passed: bool
    growth_passed: bool
    n_paths: int
    notes: list = field(default_factory=list)

    @property
    def passed(self):
        return self.lipschitz_passed and self.growth_passed

    def to_dict(self):
        return {"lipschitz_hat": self.lipschitz_hat,
                "growth_hat": self.growth_hat,
                "claimed_lipschitz": self.claimed_lipschitz,
                "claimed_growth": self.claimed_growth,
                "lipschitz_passed": self.lipschitz_passed,
                "growth_passed": self.growth_passed,
                "passed": self.passed, "n_paths": self.n_paths,
                "notes": list(self.notes)}


def check_conditions(phi: FunctionalSpec, cov: CovarianceSpec, times,
                     states) -> ConditionsReport:
    """Empirical local-Lipschitz and linear-growth checks.

    Over sampled path pairs and grid times, estimates
    L_hat = max ||Q phi(t,w) - Q phi(t,w*)|| / sup_{s<t} ||w - w*|| and
    growth_hat = max ||Q^{1/2} phi(t,w)||^2 / (1 + sup_{s<t} ||w||^2).
    Passes when the claimed constants dominate; report-only.
    """
    phi.check_modes(cov.modes)
    states = np.asarray(states, dtype=np.float64)
    n, T, K = states.shape
    lam = np.asarray(cov.eigenvalues)
    phis = phi_values(phi, cov, times, states)          # (n, T, K)
    notes = []
    if phi.kind == "pointwise":
        p0 = phi_values(phi, cov, times, np.zeros((1, T, K)))
        if float(np.max(np.abs(np.diff(p0[0], axis=0)))) > 1e-12:
            notes.append("phi(., 0) is not constant in time; proceeding "
                         "(uniqueness is assumed, not verified)")

    norms = np.sqrt(np.sum(states * states, axis=2))    # (n, T)
    run_norm = np.maximum.accumulate(norms, axis=1)
    sup_norm_before = np.concatenate(
        [np.zeros((n, 1)), run_norm[:, :-1]], axis=1)
    qphi2 = np.sum(lam[None, None, :] * phis * phis, axis=2)
    growth_hat = float(np.max(qphi2 / (1.0 + sup_norm_before ** 2)))

    lips = 0.0
    for a in range(n - 1):
        b = a + 1
        diff_phi = np.sqrt(np.sum(
            (lam[None, :] * (phis[a] - phis[b])) ** 2, axis=1))   # (T,)
        diff_path = np.sqrt(np.sum((states[a] - states[b]) ** 2, axis=1))
        run_diff = np.maximum.accumulate(diff_path)
        sup_before = np.concatenate([[0.0], run_diff[:-1]])
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(sup_before > 0, diff_phi / sup_before, 0.0)
        lips = max(lips, float(np.max(ratio)))

    cl = phi.claimed_lipschitz
    cg = phi.claimed_growth
    return ConditionsReport(
        lipschitz_hat=lips, growth_hat=growth_hat,
        claimed_lipschitz=cl if cl is not None else math.nan,
        claimed_growth=cg if cg is not None else math.nan,
        lipschitz_passed=(cl is None or lips <= cl + 1e-9),
        growth_passed=(cg is None or growth_hat <= cg + 1e-9),
        n_paths=n, notes=notes)


def estimate_hilbert_expectation(phi: FunctionalSpec, cov: CovarianceSpec,
                                 t: float, plan: LocalizationPlan,
                                 config: SimConfig, threads=1,
                                 conditions: ConditionsReport = None):
    """Direct mean of Z_t plus the localized deficit curve.

    Z = E(phi(W).W) with log Z = sum_k int phi_k dW^k - 0.5 int
    ||Q^{1/2} phi||^2 ds.  The deficit simulates the modified dynamics
    (drift Q phi) and measures survival below each plan level.
    """
    if t > config.horizon:
        raise ValidationError("t must not exceed the horizon")
    cfg = SimConfig(n_paths=config.n_paths, dt_max=min(config.dt_max, t),
                    horizon=t, seed=config.seed, adaptive=False,
                    explosion_guard=config.explosion_guard)
    notes = []
    if conditions is not None and not conditions.passed:
        notes.append("conditions report failed; estimates are not "
                     "certified (verdict Inconclusive)")
    logz, _, _, _, _, _ = _run_hilbert(cov, phi, cfg, eval_times=(t,),
                                       threads=threads)
    direct = MCEstimate.from_samples(np.exp(logz[:, 0]), notes=notes)

    config.check_plan(plan)
    _, _, passage, _, _, _ = _run_hilbert(cov, phi, cfg,
                                          levels=plan.levels,
                                          eval_times=(t,), modified=True,
                                          threads=threads)
    entries = []
    for j, (m, cap) in enumerate(zip(plan.levels, plan.time_caps)):
        if cap <= t:
            q_hat, se = 0.0, 0.0
        else:
            survived = passage[:, j] > t
            q_hat = float(np.mean(survived))
            se = math.sqrt(q_hat * (1.0 - q_hat) / config.n_paths)
        entries.append((m, cap, q_hat, se))
    q_last, se_last = entries[-1][2], entries[-1][3]
    q_prev, se_prev = entries[-2][2], entries[-2][3]
    curve = DeficitCurve(
        entries=entries, extrapolated_expectation=q_last,
        converged=abs(q_last - q_prev) <= 2.0 * (se_last + se_prev),
        notes=list(notes))
    return direct, curve


def hilbert_novikov_estimate(phi: FunctionalSpec, cov: CovarianceSpec,
                             t: float, config: SimConfig,
                             threads=1) -> MCEstimate:
    """Sample mean of exp(0.5 int ||Q^{1/2} phi||^2 ds) under the
    original dynamics; the running-sup example makes this diverge for
    large t while Z stays a true martingale."""
    cfg = SimConfig(n_paths=config.n_paths, dt_max=min(config.dt_max, t),
                    horizon=t, seed=config.seed, adaptive=False,
                    explosion_guard=config.explosion_guard)
    _, nov, _, _, _, _ = _run_hilbert(cov, phi, cfg, eval_times=(t,),
                                      threads=threads)
    with np.errstate(over="ignore"):
        samples = np.exp(0.5 * nov[:, 0])
    notes = []
    if np.any(np.isinf(samples)):
        notes.append("overflowing samples clipped to 1e308")
        samples = np.minimum(samples, 1e308)
    return MCEstimate.from_samples(samples, notes=notes)
