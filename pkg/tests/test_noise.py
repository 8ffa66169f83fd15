import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eitmemory import noise
from eitmemory.errors import DegenerateSpanError, PhysicsError, StokesNormError, UnsupportedParametersError
from eitmemory.noise import StokesVector, fidelity
from eitmemory.spectral import SpectralCurve


def random_stokes(rng, n):
    v = rng.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v * rng.random((n, 1)) ** (1 / 3)


# -- fidelity ----------------------------------------------------------------

def test_fidelity_examples():
    assert fidelity(StokesVector(0, 0, 1), StokesVector(0, 0, 1)) == pytest.approx(1.0, abs=1e-12)
    assert fidelity(StokesVector(1, 0, 0), StokesVector(-1, 0, 0)) == pytest.approx(0.0, abs=1e-12)
    expected = 0.5 * (1 + 0.4 + math.sqrt(0.36 * 0.75))
    assert fidelity(StokesVector(0, 0, 0.8), StokesVector(0, 0, 0.5)) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(0.9598, abs=5e-5)


def test_fidelity_symmetric_and_bounded_on_many_pairs():
    rng = np.random.default_rng(8)
    a, b = random_stokes(rng, 20000), random_stokes(rng, 20000)
    for x, y in zip(a, b):
        sx, sy = StokesVector.from_array(x), StokesVector.from_array(y)
        f = fidelity(sx, sy)
        assert 0.0 <= f <= 1.0
        assert f == fidelity(sy, sx)


def test_stokes_norm_violation():
    with pytest.raises(StokesNormError):
        StokesVector(0.8, 0.7, 0.0)
    with pytest.raises(StokesNormError):
        StokesVector(float("nan"), 0, 0)


@given(st.floats(0, 1), st.floats(0, 1))
def test_qber_complements_fidelity(f, _):
    r = noise.fidelity_report(f)
    assert r.qber + r.fidelity == 1.0


# -- background mixing model -------------------------------------------------

@pytest.mark.parametrize("sbr, reported, tol", [(2.9, 0.866, 0.01), (3.7, 0.90, 0.01), (25.0, 0.98, 0.005)])
def test_sbr_to_fidelity_reported_pairs(sbr, reported, tol):
    assert abs(noise.sbr_to_fidelity(sbr) - reported) <= tol


def test_sbr_to_fidelity_limits_and_errors():
    assert noise.sbr_to_fidelity(0.0) == 0.5
    assert noise.sbr_to_fidelity(2.9) == pytest.approx(3.4 / 3.9)
    with pytest.raises(ValueError):
        noise.sbr_to_fidelity(-1.0)
    with pytest.raises(ValueError):
        noise.sbr_to_fidelity(1.0, intrinsic_fidelity=0.4)


@given(st.floats(0, 1e6), st.floats(0, 1e6), st.floats(0.5, 1.0))
def test_sbr_to_fidelity_monotone(s1, s2, f0):
    lo, hi = sorted((s1, s2))
    assert noise.sbr_to_fidelity(lo, f0) <= noise.sbr_to_fidelity(hi, f0)


@given(st.floats(0.01, 100), st.floats(0.5, 1.0), st.sampled_from(list(noise.BASIS_STATES)))
def test_depolarize_is_consistent_with_mixing_model(sbr, f0, label):
    s = noise.BASIS_STATES[label]
    out = noise.depolarize(s, sbr, f0)
    assert fidelity(s, out) == pytest.approx(noise.sbr_to_fidelity(sbr, f0), abs=1e-12)


# -- classical thresholds ----------------------------------------------------

def test_thresholds_and_margins():
    th = noise.classical_thresholds(1, 0.05)
    assert (th.intercept_resend, th.nonunitary) == (0.71, 0.836)
    r = noise.fidelity_report(0.866, th)
    assert r.vs_intercept_resend == 0.156
    assert r.vs_nonunitary_bound == 0.03
    assert r.beats_classical
    with pytest.raises(UnsupportedParametersError):
        noise.classical_thresholds(2, 0.1)


# -- frame alignment ---------------------------------------------------------

def test_align_identity_and_exact_rotation():
    inputs = list(noise.BASIS_STATES.values())
    same = noise.align_frames(inputs, inputs)
    assert np.allclose(same.rotation, np.eye(3), atol=1e-12)
    assert same.mean_fidelity == pytest.approx(1.0, abs=1e-12)
    rot = noise.rotation_matrix([0, 0, 1], math.pi / 2)
    turned = [StokesVector.from_array(rot @ s.as_array()) for s in inputs]
    fit = noise.align_frames(inputs, turned)
    assert np.allclose(fit.rotation @ rot, np.eye(3), atol=1e-12)
    assert fit.mean_fidelity == pytest.approx(1.0, abs=1e-12)


def test_align_recovers_rotation_from_noisy_shrunk_data():
    rng = np.random.default_rng(11)
    inputs = list(noise.BASIS_STATES.values())
    for _ in range(20):
        axis = rng.normal(size=3)
        rot = noise.rotation_matrix(axis, rng.uniform(0, math.pi))
        outs = [StokesVector.from_array(0.6 * rot @ s.as_array() + 0.01 * rng.normal(size=3)) for s in inputs]
        fit = noise.align_frames(inputs, outs)
        assert math.degrees(noise.rotation_angle(fit.rotation @ rot)) < 2.0
        assert np.allclose(fit.rotation @ fit.rotation.T, np.eye(3), atol=1e-10)
        assert np.linalg.det(fit.rotation) == pytest.approx(1.0, abs=1e-10)


def test_align_rejects_collinear_inputs():
    ins = [StokesVector(1, 0, 0), StokesVector(-1, 0, 0), StokesVector(0.5, 0, 0)]
    with pytest.raises(DegenerateSpanError):
        noise.align_frames(ins, ins)


# -- SBR curves --------------------------------------------------------------

def test_sbr_ratio_and_tie_break():
    x = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
    eta = SpectralCurve.from_grid(x, [0.06, 0.12, 0.06, 0.12, 0.06])
    t = SpectralCurve.from_grid(x, np.ones(5))
    q = SpectralCurve.from_grid(x, np.full(5, 0.01))
    rep = noise.sbr_curve(eta, t, q, floor=0.01)
    assert rep.sbr_curve.values[2] == pytest.approx(3.0)
    assert rep.optimal_delta == -1.0


@given(st.floats(1e-3, 1e3))
def test_sbr_optimum_invariant_under_scaling(scale):
    x = np.linspace(-1e9, 1e9, 81)
    eta = SpectralCurve.from_grid(x, np.exp(-((x - 3e8) / 4e8) ** 2))
    t = SpectralCurve.from_grid(x, 1 - 0.5 * np.exp(-(x / 5e8) ** 2))
    q = SpectralCurve.from_grid(x, 0.1 + np.exp(-(x / 2e8) ** 2))
    a = noise.sbr_curve(eta, t, q, 0.01)
    b = noise.sbr_curve(eta.with_values(scale * eta.values), t, q, 0.01)
    assert a.optimal_delta == b.optimal_delta


def test_uniform_background_follows_signal():
    x = np.linspace(-1e9, 1e9, 81)
    eta = SpectralCurve.from_grid(x, np.exp(-((x - 2.5e8) / 3e8) ** 2))
    ones = SpectralCurve.from_grid(x, np.ones_like(x))
    assert noise.sbr_curve(eta, ones, ones).optimal_delta == eta.argmax_delta()


def test_sbr_nonpositive_denominator():
    x = np.array([0.0, 1.0])
    c = SpectralCurve.from_grid(x, [1.0, 1.0])
    z = SpectralCurve.from_grid(x, [0.0, 1.0])
    with pytest.raises(PhysicsError):
        noise.sbr_curve(c, c, z, floor=0.0)


# -- lifetime ----------------------------------------------------------------

def test_lifetime_exact_recovery():
    t = np.array([1e-6, 10e-6, 30e-6, 50e-6])
    fit = noise.lifetime_fit(list(zip(t, 0.1 * np.exp(-t / 20e-6))))
    assert fit.eta0 == pytest.approx(0.1, rel=1e-6)
    assert fit.tau_c == pytest.approx(20e-6, rel=1e-6)


def test_lifetime_two_points_interpolate():
    fit = noise.lifetime_fit([(1e-6, 0.2), (5e-6, 0.05)])
    assert fit(1e-6) == pytest.approx(0.2, rel=1e-12)
    assert fit(5e-6) == pytest.approx(0.05, rel=1e-12)


def test_lifetime_measured_points():
    pts = [(1e-6, 0.11), (14e-6, 0.056), (28e-6, 0.031), (42e-6, 0.011)]
    fit = noise.lifetime_fit(pts)
    assert 15e-6 <= fit.tau_c <= 25e-6
    assert fit.residuals.shape == (4,)
    with pytest.raises(ValueError):
        noise.lifetime_fit([(1e-6, 0.1), (2e-6, 0.0)])
