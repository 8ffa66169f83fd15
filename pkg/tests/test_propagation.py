import math
from dataclasses import replace

import numpy as np
import pytest

from eitmemory.core import TWO_PI
from eitmemory.errors import EmptyWindowError, GridResolutionError
from eitmemory.harness.params import load_calibration
from eitmemory.propagation import (
    MediumGrid, PulseEnvelope, StorageProtocol, StorageResult, background_emission_scan,
    background_photons, efficiency_bandwidth_scan, propagate, storage_efficiency, substeps_for,
)


@pytest.fixture(scope="module")
def cal():
    return load_calibration()


@pytest.fixture(scope="module")
def setup(cal):
    params = cal.atom()
    return params, cal.medium(params), cal.protocol()


def test_empty_medium_is_identity(setup):
    params, medium, protocol = setup
    empty = medium.with_atoms(0.0, params)
    res = propagate(protocol, empty, params)
    assert np.max(np.abs(res.probe_out.samples - res.probe_in.samples)) <= 1e-10
    assert np.all(res.stokes_out.samples == 0)
    # only the Gaussian tail of the input falls inside the retrieval window
    tail = protocol.probe.energy(*protocol.roi) / protocol.probe.energy()
    assert res.efficiency == pytest.approx(tail, abs=1e-12)
    assert res.efficiency < 1e-6


def test_two_level_absorption_matches_beer_lambert(setup):
    params, _, protocol = setup
    od = 2.0
    medium = MediumGrid.from_optical_depth(od, params, n_slices=100)
    long_probe = StorageProtocol.standard(pulse_fwhm=2e-6, storage_time=2e-6).without_control()
    res = propagate(long_probe, medium, params)
    ratio = res.probe_out.energy() / res.probe_in.energy()
    assert ratio == pytest.approx(math.exp(-od), rel=0.02)


def test_no_retrieval_without_control(setup):
    params, medium, protocol = setup
    res = propagate(protocol.without_control(), medium, params)
    assert res.efficiency <= 1e-6
    assert res.probe_out.energy() < 1e-3 * res.probe_in.energy()


def test_resonant_storage_in_expected_range(setup):
    params, medium, protocol = setup
    res = propagate(protocol, medium, params)
    assert 0.01 <= res.efficiency <= 0.20
    # retrieved light sits after the read switch-on, not in the leakage
    start, _ = protocol.roi
    leak = res.probe_out.energy(None, protocol.control.write_end)
    assert res.probe_out.energy(start, None) > 0.5 * res.efficiency * res.probe_in.energy()
    assert leak + res.probe_out.energy(start, None) <= res.probe_in.energy()


def test_energy_bookkeeping(setup):
    params, medium, protocol = setup
    for delta in (0.0, 2e8, -7e8):
        res = propagate(protocol, medium, params.detuned(TWO_PI * delta))
        assert res.probe_out.energy() <= res.probe_in.energy() * (1 + 1e-9)


def test_grid_convergence(cal):
    params = cal.atom()
    coarse = propagate(cal.protocol(), cal.medium(params), params).efficiency
    fine_cal = cal.with_overrides([("medium.n_slices", 200), ("protocol.dt", 1e-9)])
    fine = propagate(fine_cal.protocol(), fine_cal.medium(params), params).efficiency
    assert abs(fine - coarse) / fine < 0.02


def test_stokes_vanishes_without_virtual_coupling(setup):
    params, medium, protocol = setup
    p = replace(params, alpha=0.0).detuned(TWO_PI * 3e8)
    res = propagate(protocol, medium, p)
    assert np.all(res.stokes_out.samples == 0)
    q_sc, q_st = background_photons(protocol.control_only(), medium, p)
    assert q_st == 0.0 and q_sc > 0.0


def test_scatter_vanishes_for_closed_dynamics(setup):
    params, medium, protocol = setup
    p = replace(params, alpha=0.0, gamma12=0.0)
    q_sc, q_st = background_photons(protocol.control_only(), medium, p)
    assert q_sc <= 1e-15
    assert q_st == 0.0


def test_both_background_components_positive(setup):
    params, medium, protocol = setup
    q_sc, q_st = background_photons(protocol.control_only(), medium, params)
    assert q_sc > 0 and q_st > 0


def test_three_level_limit_is_symmetric(setup):
    params, medium, protocol = setup
    p = replace(params, alpha=0.0)
    grid = np.array([-3e8, -1e8, 1e8, 3e8])
    eta = efficiency_bandwidth_scan(grid, protocol, medium, p).values
    assert eta[0] == pytest.approx(eta[3], rel=0.01)
    assert eta[1] == pytest.approx(eta[2], rel=0.01)


def test_single_point_scan_equals_direct_run(setup):
    params, medium, protocol = setup
    curve = efficiency_bandwidth_scan([0.0], protocol, medium, params)
    assert curve.count == 1
    assert curve.values[0] == propagate(protocol, medium, params).efficiency


def test_background_scan_matches_point_runs(setup):
    params, medium, protocol = setup
    grid = np.array([-1e8, 0.0, 1e8])
    sc, st = background_emission_scan(grid, protocol.control_only(), medium, params)
    for d, a, b in zip(grid, sc.values, st.values):
        assert (a, b) == background_photons(protocol.control_only(), medium, params.detuned(TWO_PI * d))


def test_full_run_background_matches_control_only_run(setup):
    params, medium, protocol = setup
    full = propagate(protocol.control_only(), medium, params.detuned(TWO_PI * 1e8))
    fast = background_photons(protocol.control_only(), medium, params.detuned(TWO_PI * 1e8))
    assert full.background_photons["scatter"] == pytest.approx(fast[0], rel=1e-9)
    assert full.background_photons["stokes"] == pytest.approx(fast[1], rel=1e-9)


def test_substeps_keep_fast_phase_small(setup):
    params, _, _ = setup
    k = substeps_for(params.detuned(TWO_PI * 2e9), 2e-9)
    assert 2e9 * 2e-9 / k <= 0.5


# -- efficiency definition ---------------------------------------------------

def _result_with_output(protocol, out):
    probe = protocol.probe
    env = PulseEnvelope(out, probe.dt, probe.t0)
    zero = PulseEnvelope.zeros(out.size, probe.dt, probe.t0)
    return StorageResult(probe, env, zero, np.zeros(out.size), 0.0)


def test_efficiency_definition_examples(setup):
    _, _, protocol = setup
    probe = protocol.probe
    start, stop = protocol.roi
    t = probe.times
    inside = (t >= start) & (t < stop)
    e_in = probe.energy()
    n = int(inside.sum())
    full = np.zeros(t.size, dtype=complex)
    full[inside] = math.sqrt(e_in / (n * probe.dt))
    assert storage_efficiency(_result_with_output(protocol, full), protocol) == pytest.approx(1.0)
    half = full / math.sqrt(2)
    assert storage_efficiency(_result_with_output(protocol, half), protocol) == pytest.approx(0.5)
    assert storage_efficiency(_result_with_output(protocol, np.zeros(t.size)), protocol) == 0.0


def test_efficiency_needs_input_energy(setup):
    _, _, protocol = setup
    silent = protocol.control_only()
    with pytest.raises(EmptyWindowError):
        storage_efficiency(_result_with_output(silent, np.zeros(silent.probe.samples.size)), silent)


def test_under_resolved_pulse_rejected(setup):
    params, medium, _ = setup
    protocol = StorageProtocol.standard(pulse_fwhm=3e-9, dt=2e-9, storage_time=100e-9, edge=10e-9)
    with pytest.raises(GridResolutionError):
        propagate(protocol, medium, params)
