import math
import warnings
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lcfshape import samples
from lcfshape.elasticity import face_area
from lcfshape.errors import NumericError, SaturatedLifeWarning
from lcfshape.lcf import (
    LOG_N_MIN, cmb, cmb_derivative, cmb_inverse, density, det_life, fatigue_chain, neuber,
    neuber_derivative, objective_J, pof, ramberg_osgood, ramberg_osgood_derivative, weibull_scale,
)
from lcfshape.model import solve
from lcfshape.samples import STEEL


def _random_materials(n, seed):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        yield replace(STEEL, E=rng.uniform(5e4, 3e5), K=rng.uniform(500, 2000),
                      n_prime=rng.uniform(0.05, 0.3), sigma_f=rng.uniform(500, 1500),
                      b=rng.uniform(-0.15, -0.05), eps_f=rng.uniform(0.1, 1.0),
                      c=rng.uniform(-0.8, -0.4), m=rng.uniform(2, 10)), rng.uniform(1, 3000)


def _bisect(f, lo, hi, n=200):
    flo = f(lo)
    for _ in range(n):
        mid = 0.5 * (lo + hi)
        if np.sign(f(mid)) == np.sign(flo):
            lo, flo = mid, f(mid)
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_neuber_of_zero_is_zero():
    assert neuber(0.0, STEEL) == 0.0


def test_neuber_elastic_limit():
    se = 1e-3
    assert neuber(se, STEEL) == pytest.approx(se, rel=1e-3)


def test_neuber_matches_bisection_oracle():
    for mat, se in _random_materials(100, 0):
        p = 1 / mat.n_prime
        f = lambda s: s**2 / mat.E + s * (s / mat.K) ** p - se**2 / mat.E
        assert neuber(se, mat) == pytest.approx(_bisect(f, 0.0, se), rel=1e-10)


def test_neuber_residual_and_hyperbola_identity():
    for mat, se in _random_materials(100, 1):
        s = neuber(se, mat)
        t = se**2 / mat.E
        assert abs(s**2 / mat.E + s * (s / mat.K) ** (1 / mat.n_prime) - t) <= 1e-12 * t
        assert ramberg_osgood(s, mat) * s == pytest.approx(t, rel=1e-10)
        assert s <= se


def test_neuber_vectorised_and_monotone():
    se = np.linspace(0, 2000, 41)
    s = neuber(se, STEEL)
    assert s[0] == 0 and np.all(np.diff(s) > 0)


def test_nan_propagates_through_chain():
    assert math.isnan(neuber(math.nan, STEEL))
    assert math.isnan(fatigue_chain(math.nan, STEEL).log_Ndet[0])


def test_neuber_rejects_negative():
    with pytest.raises(ValueError):
        neuber(-1.0, STEEL)


def test_ramberg_osgood_limits():
    assert ramberg_osgood(0.0, STEEL) == 0.0
    stiff = replace(STEEL, K=1e12)
    eps = ramberg_osgood(100.0, stiff)
    assert abs(eps - 100.0 / STEEL.E) < 1e-15


def test_cmb_inverse_at_one_cycle():
    eps = STEEL.sigma_f / STEEL.E * 2**STEEL.b + STEEL.eps_f * 2**STEEL.c
    assert cmb_inverse(eps, STEEL) == pytest.approx(0.0, abs=1e-12)


def test_cmb_roundtrip_over_random_parameters():
    rng = np.random.default_rng(3)
    for mat, _ in _random_materials(100, 4):
        logn = rng.uniform(LOG_N_MIN, math.log(1e14))
        eps = float(cmb(logn, mat))
        assert float(cmb(cmb_inverse(eps, mat), mat)) == pytest.approx(eps, rel=1e-10)


@settings(max_examples=50, deadline=None)
@given(a=st.floats(1e-5, 0.5), b=st.floats(1e-5, 0.5))
def test_cmb_inverse_is_decreasing(a, b):
    if a == b:
        return
    lo, hi = sorted((a, b))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SaturatedLifeWarning)
        n_lo, n_hi = cmb_inverse(np.array([lo, hi]), STEEL)
    assert n_lo >= n_hi
    if hi < cmb(LOG_N_MIN, STEEL):
        assert n_lo > n_hi


def test_cmb_saturation_warns_and_clamps():
    with pytest.warns(SaturatedLifeWarning):
        out = cmb_inverse(10.0, STEEL)
    assert out == LOG_N_MIN


def test_cmb_rejects_nonpositive_strain():
    with pytest.raises(ValueError):
        cmb_inverse(0.0, STEEL)


def test_small_strain_keeps_finite_large_life():
    logn = cmb_inverse(1e-5, STEEL)
    assert math.log(1e14) < logn < math.inf
    assert float(cmb(logn, STEEL)) == pytest.approx(1e-5, rel=1e-10)


def test_chain_derivatives_match_fd():
    rng = np.random.default_rng(5)
    for mat, se in _random_materials(20, 6):
        se = rng.uniform(50, 1500)
        h = 1e-6 * se
        s = neuber(se, mat)
        fd = (neuber(se + h, mat) - neuber(se - h, mat)) / (2 * h)
        assert neuber_derivative(se, s, mat) == pytest.approx(fd, rel=1e-7)
        fd = (ramberg_osgood(s + h, mat) - ramberg_osgood(s - h, mat)) / (2 * h)
        assert ramberg_osgood_derivative(s, mat) == pytest.approx(fd, rel=1e-7)
        logn = rng.uniform(0, 25)
        fd = (cmb(logn + 1e-6, mat) - cmb(logn - 1e-6, mat)) / 2e-6
        assert cmb_derivative(logn, mat) == pytest.approx(fd, rel=1e-7)
        _, d = fatigue_chain(se, mat, derivative=True)
        fd = (fatigue_chain(se + h, mat).log_Ndet - fatigue_chain(se - h, mat).log_Ndet) / (2 * h)
        assert d[0] == pytest.approx(fd[0], rel=1e-7)


def test_chain_at_zero_stress():
    st_, d = fatigue_chain(np.array([0.0, 100.0]), STEEL, derivative=True)
    assert st_.log_Ndet[0] == math.inf and d[0] == 0.0
    assert density(st_.log_Ndet, STEEL)[0] == 0.0


def test_chain_state_invariants():
    se = np.linspace(10, 2000, 50)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SaturatedLifeWarning)
        st_ = fatigue_chain(se, STEEL)
    assert np.all(st_.sigma_elpl <= se)
    assert np.all(st_.eps_a >= st_.sigma_elpl / STEEL.E)
    assert np.all(np.isfinite(st_.log_Ndet))
    rho = density(st_.log_Ndet, STEEL)
    assert np.all(np.diff(rho) >= 0)


def test_pof_and_weibull_scale():
    assert pof(0.0, 1e4, STEEL) == 0.0
    assert weibull_scale(1.0, replace(STEEL, m=2.0)) == pytest.approx(1.0)
    assert weibull_scale(16.0, replace(STEEL, m=4.0)) == pytest.approx(0.5)
    assert weibull_scale(0.0, STEEL) == math.inf
    n = np.logspace(1, 6, 30)
    P = [pof(1e-30, x, STEEL) for x in n]
    assert np.all(np.diff(P) > 0)


def test_weibull_identity_random():
    rng = np.random.default_rng(7)
    for _ in range(200):
        mat = replace(STEEL, m=rng.uniform(1, 15))
        J = 10 ** rng.uniform(-40, 2)
        eta = weibull_scale(J, mat)
        assert pof(J, eta, mat) == pytest.approx(1 - math.exp(-1), abs=1e-12)


def test_zero_displacement_gives_zero_objective(rod_hex8):
    m = rod_hex8.mesh
    assert objective_J(m, STEEL, np.zeros(m.n_dofs)).J == 0.0


def test_constant_stress_face_closed_form():
    t = 400.0
    s = samples.bar(length=4.0, width=1.5, cells=(4, 2, 2), kind="hex8", g=t, clamp="roller")
    p = s.problem()
    U = solve(p).U
    obj = objective_J(p.mesh, STEEL, U)
    logn = fatigue_chain(t, STEEL).log_Ndet[0]
    area = face_area(p.mesh, p.mesh.surface_faces)
    assert obj.J == pytest.approx(area * math.exp(-STEEL.m * logn), rel=1e-10)
    assert obj.J == pytest.approx(obj.per_face.sum(), rel=1e-15)


def test_objective_is_additive_over_face_partitions(rod_hex20):
    p = rod_hex20.problem()
    U = solve(p).U
    faces = p.mesh.surface_faces
    whole = objective_J(p.mesh, STEEL, U).J
    halves = sum(objective_J(p.mesh, STEEL, U, faces=f).J for f in (faces[::2], faces[1::2]))
    assert halves == pytest.approx(whole, rel=1e-13)


def test_face_rule_refinement_converges():
    p = samples.bent_rod(cells=(20, 4, 4)).problem()
    U = solve(p).U
    J = {k: objective_J(p.mesh, STEEL, U, face_order=k).J for k in (2, 3, 4, 5, 6, 10)}
    errs = [abs(J[k] - J[10]) for k in (2, 3, 4, 5, 6)]
    assert np.all(np.diff(errs) < 0)
    assert errs[-1] <= 1e-6 * J[10]


def test_more_load_means_larger_objective(rod_hex8):
    p = rod_hex8.problem()
    J1 = objective_J(p.mesh, STEEL, solve(p).U).J
    p2 = replace(p, loadcase=p.loadcase.scaled(1.5))
    assert objective_J(p2.mesh, STEEL, solve(p2).U).J > J1


def test_nan_density_is_numeric_error(rod_hex8):
    m = rod_hex8.mesh
    U = np.zeros(m.n_dofs)
    U[5] = np.nan
    with pytest.raises(NumericError):
        objective_J(m, STEEL, U)


def test_det_life_uniform_bar():
    s = samples.bar(length=4.0, width=1.0, cells=(4, 2, 2), kind="hex8", g=300.0, clamp="roller")
    p = s.problem()
    nodes, logn, node, mn = det_life(p.mesh, STEEL, solve(p).U)
    np.testing.assert_allclose(logn, logn[0], rtol=1e-10)
    assert mn == pytest.approx(logn[0])


def test_det_life_minimum_at_bottom_of_bend(rod_hex20):
    p = rod_hex20.problem()
    _, _, node, mn = det_life(p.mesh, STEEL, solve(p).U)
    x = p.mesh.nodes[node]
    assert 0.3 * 40 < x[0] < 0.7 * 40
    assert x[2] < 4.0 * math.sin(math.pi * x[0] / 40)  # below the centre line
    p2 = replace(p, loadcase=p.loadcase.scaled(2.0))
    assert det_life(p2.mesh, STEEL, solve(p2).U)[3] < mn
