import math

import numpy as np
import pytest

from martprop.errors import ValidationError
from martprop.jumpkit import (
    Atom,
    DiscreteDist,
    GirsanovData,
    JumpTriplet,
    atom_delta_R,
    atom_delta_R_closed_form,
    compute_R,
    compute_Uhat,
    compute_Uprime,
    simulate_jump_exponential,
    stopped_mean,
    validate,
    verdict_jump,
    verify_compensator_identity,
)
from martprop.mc import SimConfig
from martprop.model import Classification, DiffusionSpec, LocalizationPlan

BM = DiffusionSpec.scalar("0", "1")
UNIT = DiscreteDist((1.0,), (1.0,))
POISSON_U4 = (JumpTriplet(base=BM, cp_rate=1.0, cp_dist=UNIT),
              GirsanovData(K="0", U="4"))
ATOM_HALF = (JumpTriplet(base=BM, atoms=(
    Atom(time=0.5, mass=0.5, dist=UNIT),)),
    GirsanovData(K="0", U="1.5"))


# --- discrete laws ------------------------------------------------------------

def test_discrete_dist_validation():
    with pytest.raises(ValidationError):
        DiscreteDist((1.0, 2.0), (0.5,))
    with pytest.raises(ValidationError):
        DiscreteDist((1.0, 2.0), (0.6, 0.6))
    with pytest.raises(ValidationError):
        DiscreteDist((1.0, 1.0), (0.5, 0.5))
    with pytest.raises(ValidationError):
        DiscreteDist((0.0,), (1.0,))  # zero is not a jump


def test_discrete_dist_expect_sample_reweight():
    d = DiscreteDist((1.0, -2.0), (0.25, 0.75))
    assert d.expect(lambda v: v) == pytest.approx(-1.25)
    assert d.sample(0.1) == 1.0
    assert d.sample(0.9) == -2.0
    rw = d.reweighted(lambda v: abs(v))
    assert rw.probs == pytest.approx((0.25 / 1.75, 1.5 / 1.75))


# --- atom bookkeeping -----------------------------------------------------------

def test_uhat_and_uprime():
    trip, gd = ATOM_HALF
    assert compute_Uhat(trip, gd, 0.5) == pytest.approx(0.75)
    assert compute_Uhat(trip, gd, 0.25) == 0.0
    # at the atom: U' = 0.5 + (0.75 - 0.5)/(1 - 0.5) = 1 exactly
    assert compute_Uprime(gd, trip, 0.5, 1.0) == pytest.approx(1.0)
    # elsewhere: U' = U - 1
    assert compute_Uprime(gd, trip, 0.1, 1.0) == pytest.approx(0.5)


def test_uprime_zero_over_zero_convention_at_full_mass():
    trip = JumpTriplet(base=BM, atoms=(
        Atom(time=0.5, mass=1.0, dist=UNIT),))
    gd = GirsanovData(K="0", U="1")
    validate(trip, gd)
    assert compute_Uprime(gd, trip, 0.5, 1.0) == 0.0


def test_atom_delta_R_sum_equals_closed_form():
    trip, gd = ATOM_HALF
    atom = trip.atoms[0]
    dr = atom_delta_R(atom, gd, trip)
    cf = atom_delta_R_closed_form(atom, gd, trip)
    assert abs(dr - cf) / abs(cf) < 1e-12
    # hand value: 0.5(1-sqrt(1.5))^2 + (sqrt(0.5)-sqrt(0.25))^2
    ref = (0.5 * (1 - math.sqrt(1.5)) ** 2
           + (math.sqrt(0.5) - 0.5) ** 2)
    assert dr == pytest.approx(ref, rel=1e-14)


# --- admissibility validation ----------------------------------------------------

def test_validate_accepts_catalog_pairs():
    validate(*POISSON_U4)
    validate(*ATOM_HALF)


def test_validate_rejects_nonpositive_U():
    with pytest.raises(ValidationError):
        validate(JumpTriplet(base=BM, cp_rate=1.0, cp_dist=UNIT),
                 GirsanovData(K="0", U="x - 1"))  # U(1) = 0


def test_validate_rejects_uhat_above_one():
    trip = JumpTriplet(base=BM, atoms=(
        Atom(time=0.5, mass=0.5, dist=UNIT),))
    with pytest.raises(ValidationError):
        validate(trip, GirsanovData(K="0", U="3"))  # Uhat = 1.5


def test_validate_rejects_uhat_one_with_partial_mass():
    trip = JumpTriplet(base=BM, atoms=(
        Atom(time=0.5, mass=0.5, dist=UNIT),))
    with pytest.raises(ValidationError):
        validate(trip, GirsanovData(K="0", U="2"))  # Uhat = 1, a = 0.5


def test_validate_full_mass_needs_uhat_one():
    trip = JumpTriplet(base=BM, atoms=(
        Atom(time=0.5, mass=1.0, dist=UNIT),))
    with pytest.raises(ValidationError):
        validate(trip, GirsanovData(K="0", U="1.5"))
    validate(trip, GirsanovData(K="0", U="1"))


# --- Hellinger-type process R -----------------------------------------------------

def test_R_pure_poisson_closed_form():
    trip, gd = POISSON_U4
    grid = np.linspace(0.0, 1.0, 101)
    r = compute_R(trip, gd, grid)
    # R_t = lambda t (1 - sqrt(4))^2 = t
    assert r.R[-1] == pytest.approx(1.0, rel=1e-12)
    assert np.all(np.diff(r.R) >= 0.0)


def test_R_constant_K_exact():
    trip = JumpTriplet(base=BM)
    r = compute_R(trip, GirsanovData(K="3", U="1"),
                  np.linspace(0.0, 2.0, 41))
    assert r.R[-1] == pytest.approx(18.0, rel=1e-12)  # K^2 c t


def test_R_state_dependent_K_needs_path():
    trip = JumpTriplet(base=BM)
    gd = GirsanovData(K="x", U="1")
    with pytest.raises(ValidationError):
        compute_R(trip, gd, np.linspace(0.0, 1.0, 11))
    grid = np.linspace(0.0, 1.0, 11)
    r = compute_R(trip, gd, grid, path_states=np.full(11, 2.0))
    assert r.R[-1] == pytest.approx(4.0, rel=1e-12)


def test_R_atom_jump_at_atom_time():
    trip, gd = ATOM_HALF
    grid = np.linspace(0.0, 1.0, 101)
    r = compute_R(trip, gd, grid)
    before = r.R[grid < 0.5][-1]
    at = r.R[grid >= 0.5][0]
    assert at - before == pytest.approx(
        atom_delta_R(trip.atoms[0], gd, trip), rel=1e-12)


# --- simulation ---------------------------------------------------------------------

CFG = SimConfig(n_paths=2000, dt_max=0.01, horizon=1.0, seed=13,
                adaptive=False)


def test_simulation_deterministic():
    trip, gd = POISSON_U4
    r1 = simulate_jump_exponential(trip, gd, CFG, eval_times=(1.0,))
    r2 = simulate_jump_exponential(trip, gd, CFG, eval_times=(1.0,))
    np.testing.assert_array_equal(r1.z_final, r2.z_final)


def test_delta_N_stays_above_minus_one():
    for trip, gd in (POISSON_U4, ATOM_HALF):
        res = simulate_jump_exponential(trip, gd, CFG, eval_times=(1.0,))
        assert float(np.min(res.min_delta_N)) > -1.0
        assert np.all(res.z_final > 0.0)


def test_stopped_mean_is_one_within_noise():
    for trip, gd in (POISSON_U4, ATOM_HALF):
        est = stopped_mean(trip, gd, 1.0, 16.0,
                           SimConfig(n_paths=4000, dt_max=0.01,
                                     horizon=1.0, seed=21))
        assert abs(est.mean - 1.0) <= 3.0 * est.std_error


def test_compensator_identity():
    trip, gd = POISSON_U4
    rep = verify_compensator_identity(
        trip, gd, SimConfig(n_paths=4000, dt_max=0.005, horizon=1.0,
                            seed=17), 1.0)
    assert rep.passed


def test_verdict_true_martingale_for_bounded_K():
    trip = JumpTriplet(base=BM, cp_rate=1.0, cp_dist=UNIT)
    gd = GirsanovData(K="tanh(x)", U="1")
    plan = LocalizationPlan(levels=(8.0, 16.0, 24.0, 32.0),
                            time_caps=(2.0, 2.0, 2.0, 2.0))
    v = verdict_jump(trip, gd, 1.0, plan,
                     SimConfig(n_paths=2000, dt_max=0.01, horizon=1.0,
                               seed=19))
    assert v.classification is Classification.TRUE_MARTINGALE


def test_verdict_strict_local_for_cubic_K():
    trip = JumpTriplet(base=BM)
    gd = GirsanovData(K="x^3", U="1")
    plan = LocalizationPlan(levels=(8.0, 16.0, 24.0, 32.0),
                            time_caps=(2.0, 2.0, 2.0, 2.0))
    v = verdict_jump(trip, gd, 1.0, plan,
                     SimConfig(n_paths=2000, dt_max=0.005, horizon=1.0,
                               seed=19))
    assert v.classification is Classification.STRICT_LOCAL
    assert v.deficit_curve.deficit > 0.1
