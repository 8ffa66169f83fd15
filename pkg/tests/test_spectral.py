import math

import numpy as np
import pytest

from eitmemory import spectral
from eitmemory.errors import CoverageError, GridMismatchError
from eitmemory.spectral import (
    AbsorptionLine, EtalonParams, SpectralCurve, TransmissionModel, VelocityDistribution, broaden,
    cascade_transmission, etalon_fwhm, etalon_transmission, filter_background, manifold_compose,
    medium_transmission, velocity_weight,
)


def brute_force_broaden(values, step, w_d, i_max, periodic=False):
    """Direct double loop over output bins and kernel offsets, no vectorisation."""
    n = len(values)
    norm = 0.0
    for i in range(-i_max, i_max + 1):
        norm += 1.0 / (1.0 + (2.0 * i * step) ** 2 / w_d ** 2)
    out = [0.0] * n
    for j in range(n):
        acc = 0.0
        for i in range(-i_max, i_max + 1):
            k = j + i
            if periodic:
                k %= n
            elif k < 0 or k >= n:
                continue
            acc += values[k] / (1.0 + (2.0 * i * step) ** 2 / w_d ** 2)
        out[j] = acc / norm
    return out


# -- velocity distribution ---------------------------------------------------

def test_velocity_peak_value():
    dist = VelocityDistribution(960e6)
    expected_per_mhz = math.sqrt(math.log(2)) / (960 * math.sqrt(math.pi))
    assert expected_per_mhz == pytest.approx(4.893e-4, abs=5e-8)
    assert velocity_weight(0.0, dist) * 1e6 == pytest.approx(expected_per_mhz, rel=1e-12)


def test_velocity_half_max_and_tail():
    dist = VelocityDistribution(960e6)
    assert velocity_weight(480e6, dist) == 0.5 * velocity_weight(0.0, dist)
    assert velocity_weight(1e15, dist) < 1e-20


# -- broadening --------------------------------------------------------------

def test_broaden_matches_direct_sum():
    rng = np.random.default_rng(4)
    step, w_d = 10e6, 960e6
    values = rng.random(4096)
    i_max = int(math.ceil(3 * w_d / step))
    curve = SpectralCurve(values, -2048 * step, step)
    fast = broaden(curve, VelocityDistribution(w_d)).values
    slow = np.array(brute_force_broaden(values.tolist(), step, w_d, i_max))
    assert np.max(np.abs(fast - slow)) <= 1e-10


def test_broaden_periodic_matches_direct_sum_and_fixes_constants():
    rng = np.random.default_rng(5)
    step, w_d = 20e6, 960e6
    values = rng.random(600)
    i_max = int(math.ceil(3 * w_d / step))
    curve = SpectralCurve(values, 0.0, step)
    fast = broaden(curve, VelocityDistribution(w_d), mode="periodic").values
    slow = np.array(brute_force_broaden(values.tolist(), step, w_d, i_max, periodic=True))
    assert np.max(np.abs(fast - slow)) <= 1e-10
    flat = broaden(SpectralCurve(np.full(600, 3.7), 0.0, step), VelocityDistribution(w_d), mode="periodic")
    assert np.max(np.abs(flat.values - 3.7)) <= 1e-10


def test_broaden_delta_reproduces_distribution_shape():
    step = 10e6
    dist = VelocityDistribution()
    values = np.zeros(2001)
    values[1000] = 1.0
    out = broaden(SpectralCurve(values, -1000 * step, step), dist).values
    offsets = np.arange(-288, 289) * step
    shape = velocity_weight(offsets, dist)
    got = out[1000 - 288:1000 + 289]
    assert np.allclose(got / got.max(), shape / shape.max(), atol=1e-14)


def test_broaden_narrow_line_takes_distribution_width():
    step = 2e6
    x = np.arange(-2500, 2501) * step
    narrow = np.exp(-4 * math.log(2) * (x / 10e6) ** 2)
    out = broaden(SpectralCurve.from_grid(x, narrow), VelocityDistribution())
    assert spectral.fwhm(out) == pytest.approx(960e6, rel=0.05)


def test_broaden_preserves_area_and_never_raises_maximum():
    step = 5e6
    x = np.arange(-2000, 2001) * step
    y = np.exp(-((x - 1e8) / 50e6) ** 2) + 0.3 * np.exp(-((x + 4e8) / 20e6) ** 2)
    curve = SpectralCurve.from_grid(x, y)
    out = broaden(curve, VelocityDistribution())
    assert out.values.max() <= curve.values.max()
    assert out.integral() == pytest.approx(curve.integral(), rel=0.01)


def test_broaden_window_too_small():
    curve = SpectralCurve(np.ones(10), 0.0, 10e6)
    with pytest.raises(CoverageError):
        broaden(curve, VelocityDistribution(), i_max=10)


# -- manifold composition ----------------------------------------------------

def test_manifold_compose_limits():
    step = 5e6
    x = np.arange(-800, 801) * step
    a = SpectralCurve.from_grid(x, np.exp(-(x / 100e6) ** 2))
    b = SpectralCurve.from_grid(x, np.exp(-((x - 5e7) / 60e6) ** 2))
    assert manifold_compose(a, b, weight2=0.0) == a
    assert np.array_equal(manifold_compose(a, b, splitting=0.0).values, a.values + b.values)


def test_manifold_compose_places_second_line():
    step = 1e6
    x = np.arange(-3000, 3001) * step
    g = SpectralCurve.from_grid(x, np.exp(-4 * math.log(2) * (x / 50e6) ** 2))
    out = manifold_compose(g, g).values
    left = x[np.argmax(np.where(x < -400e6, out, -1))]
    right = x[np.argmax(np.where(x > -400e6, out, -1))]
    assert abs((right - left) - 814.5e6) <= step


def test_grid_mismatch():
    a = SpectralCurve(np.ones(5), 0.0, 1.0)
    b = SpectralCurve(np.ones(5), 0.0, 2.0)
    with pytest.raises(GridMismatchError):
        manifold_compose(a, b)
    with pytest.raises(GridMismatchError):
        SpectralCurve.from_grid([0.0, 1.0, 3.0], [1, 2, 3])


# -- etalons -----------------------------------------------------------------

def test_etalon_peak_and_antinode():
    e = EtalonParams()
    assert etalon_transmission(0.0, e) == pytest.approx((1 - 2e-4) ** 2, abs=1e-12)
    anti = (1 - 0.9955) ** 2 * (1 - 2e-4) ** 2 / (1 + 0.9955) ** 2
    assert etalon_transmission(6.8e9, e) == pytest.approx(anti, rel=1e-9)
    assert anti == pytest.approx(5.08e-6, rel=0.01)


def test_etalon_periodicity_exact():
    e = EtalonParams(detuning_offset=3e6)
    d = np.array([0.0, 1.7e6, -4.4e7, 3.3e8])
    base = etalon_transmission(d, e)
    for k in (1, 2, -3):
        assert np.array_equal(etalon_transmission(d + k * e.fsr, e), base)


def test_etalon_fwhm_against_finesse():
    e = EtalonParams()
    assert etalon_fwhm(e) == pytest.approx(e.fwhm_estimate, rel=0.02)
    assert etalon_fwhm(e) == pytest.approx(19.5e6, rel=0.02)


def test_cascade_properties():
    e1, e2 = EtalonParams(), EtalonParams(fsr=9.1e9, detuning_offset=2e6)
    d = np.linspace(-2e10, 2e10, 10001)
    t1, t2 = etalon_transmission(d, e1), etalon_transmission(d, e2)
    both = cascade_transmission([e1, e2], d)
    assert np.array_equal(cascade_transmission([e1], d), t1)
    assert np.allclose(both, t1 * t2, rtol=1e-15)
    assert np.all(both <= np.minimum(t1, t2))
    assert np.all((both >= 0) & (both <= 1))
    assert cascade_transmission([e1, e1], 0.0) == pytest.approx((1 - 2e-4) ** 4, abs=1e-12)
    with pytest.raises(ValueError):
        cascade_transmission([], d)


def test_filter_background_transparent_and_sifting():
    step = 1e6
    x = np.arange(-500, 14001) * step
    sc = np.zeros_like(x)
    sc[500] = 3.0 / step
    st = np.zeros_like(x)
    st[500 + 13600] = 2.0 / step
    qs, qt = SpectralCurve.from_grid(x, sc), SpectralCurve.from_grid(x, st)
    clear = filter_background(qs, qt, [EtalonParams(r=1e-12, a=0.0)])
    assert clear.total[0] == pytest.approx(5.0, rel=1e-9)
    only = filter_background(qs, qt.with_values(np.zeros_like(x)), [EtalonParams()])
    assert only.total[0] == pytest.approx(3.0 * (1 - 2e-4) ** 2, rel=1e-12)


def test_stokes_suppression_by_detuned_fsr():
    equal = [EtalonParams(), EtalonParams()]
    swapped = [EtalonParams(), EtalonParams(fsr=13.6e9 / 1.5)]
    _, st_equal = spectral.filter_fractions(equal, 12e6, 1e6)
    sc_swap, st_swap = spectral.filter_fractions(swapped, 12e6, 1e6)
    assert st_equal > 0.5
    assert 10 * math.log10(st_equal / st_swap) > 40
    assert sc_swap > 0.3


# -- transmission ------------------------------------------------------------

def test_transmission_model():
    d = np.linspace(-3e9, 3e9, 601)
    assert np.all(medium_transmission(d, TransmissionModel((AbsorptionLine(0.0, 0.0),))).values == 1.0)
    one = TransmissionModel((AbsorptionLine(0.0, 2.0),))
    assert one(0.0) == pytest.approx(math.exp(-2), rel=1e-12)
    t = medium_transmission(d).values
    assert np.all((t >= 0) & (t <= 1))


def test_measured_table_round_trip(tmp_path):
    path = tmp_path / "t.txt"
    path.write_text("# delta transmission\n-1e9 0.5\n0 0.1\n1e9 0.6\n")
    table = spectral.load_transmission_table(path)
    assert table(5e8) == pytest.approx(0.35)
    with pytest.raises(CoverageError):
        table(2e9)


def test_room_temperature_response_needs_coverage():
    cold = SpectralCurve(np.ones(11), -1e9, 2e8)
    with pytest.raises(CoverageError):
        spectral.room_temperature_response(cold, np.linspace(-5e8, 5e8, 11))


def test_room_temperature_response_of_flat_curve():
    w = VelocityDistribution()
    cold = SpectralCurve(np.ones(301), -7.5e9, 5e7)
    out = spectral.room_temperature_response(cold, np.linspace(-1e9, 1e9, 41), w, weight2=0.0)
    assert np.allclose(out.values, 1.0, atol=1e-12)
