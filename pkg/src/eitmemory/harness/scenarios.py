"""Scenario implementations.

Each scenario takes a resolved :class:`Calibration` and a
:class:`ScenarioConfig` and returns a :class:`ScenarioOutput`: result tables
plus summary metrics.  Sweep points are independent and may run in a
process pool; results are merged in grid order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import noise, spectral
from ..core import TWO_PI
from ..errors import PhysicsError
from ..propagation import background_photons, propagate, scan_many
from ..spectral import SpectralCurve
from .export import Table


@dataclass
class ScenarioOutput:
    tables: list
    summary: dict = field(default_factory=dict)


class ScenarioError(PhysicsError):
    """A sweep point failed; ``partial`` holds the tables that did complete."""

    def __init__(self, message, partial=(), failed_points=()):
        super().__init__(message)
        self.partial = list(partial)
        self.failed_points = list(failed_points)


# --------------------------------------------------------------------------
# point workers (top level so that they pickle)
# --------------------------------------------------------------------------

def _eta_worker(args):
    delta, protocol, medium, params = args
    try:
        return ("ok", propagate(protocol, medium, params.detuned(TWO_PI * delta)).efficiency)
    except PhysicsError as exc:
        return ("error", f"{type(exc).__name__} at detuning {delta:.6g} Hz: {exc}")


def _background_worker(args):
    delta, protocol, medium, params = args
    try:
        return ("ok", background_photons(protocol, medium, params.detuned(TWO_PI * delta)))
    except PhysicsError as exc:
        return ("error", f"{type(exc).__name__} at detuning {delta:.6g} Hz: {exc}")


def _run_points(worker, grid, protocol, medium, params, jobs, name, columns):
    """Evaluate ``worker`` on every grid point; raise with the completed rows on failure."""
    items = [(float(d), protocol, medium, params) for d in grid]
    results = scan_many(worker, items, jobs)
    failed = [(float(d), r[1]) for d, r in zip(grid, results) if r[0] != "ok"]
    if failed:
        good = [(d, r[1]) for d, r in zip(grid, results) if r[0] == "ok"]
        cols = {columns[0]: np.array([d for d, _ in good])}
        vals = np.array([np.atleast_1d(v) for _, v in good]).reshape(len(good), -1)
        for k, col in enumerate(columns[1:]):
            cols[col] = vals[:, k] if len(good) else np.array([])
        partial = Table(name + "_partial", cols) if len(good) else None
        raise ScenarioError(failed[0][1], [partial] if partial else [], [d for d, _ in failed])
    return np.array([r[1] for r in results], dtype=float)


# --------------------------------------------------------------------------
# warm-vapour pipeline
# --------------------------------------------------------------------------

def lattice(lo: float, hi: float, step: float) -> np.ndarray:
    """Multiples of ``step`` covering ``[lo, hi]``."""
    k0 = math.floor(lo / step + 1e-9)
    k1 = math.ceil(hi / step - 1e-9)
    return step * np.arange(k0, k1 + 1)


@dataclass(frozen=True)
class WarmCurves:
    """Cold-atom scans and the warm-vapour curves sampled on ``deltas``."""

    deltas: np.ndarray
    eta_cold: SpectralCurve | None
    scatter_cold: SpectralCurve | None
    stokes_cold: SpectralCurve | None
    eta_rt: np.ndarray | None
    t_rt: np.ndarray
    scatter_rt: np.ndarray | None
    stokes_rt: np.ndarray | None
    floor: float | None

    @property
    def q_rt(self) -> np.ndarray:
        return self.scatter_rt + self.stokes_rt


def _warm(cold: SpectralCurve, points, cal, weight2) -> np.ndarray:
    rt = cal.values["room_temperature"]
    return spectral.room_temperature_values(cold, points, cal.velocity(), rt["splitting"], weight2,
                                            fine_step=rt["fine_step"])


def warm_curves(cal, deltas, jobs: int = 1, efficiency: bool = True, background: bool = True) -> WarmCurves:
    """Run the cold scans needed for ``deltas`` and fold them into warm-vapour curves."""
    rt = cal.values["room_temperature"]
    deltas = np.atleast_1d(np.asarray(deltas, dtype=float))
    params = cal.atom()
    medium = cal.medium(params)
    protocol = cal.protocol()
    reach = 3.0 * rt["w_d"]
    # the second line reads the cold curve at delta + splitting, so the upper
    # end is extended to keep that shifted copy defined inside the window
    lo = min(deltas.min(), 0.0) - reach
    hi = max(deltas.max(), 0.0) + reach + rt["splitting"]

    eta_cold = scatter_cold = stokes_cold = None
    eta_rt = scatter_rt = stokes_rt = None
    floor = None
    if efficiency:
        grid = lattice(lo, hi, rt["cold_step"])
        vals = _run_points(_eta_worker, grid, protocol, medium, params, jobs, "eta_cold",
                           ("delta_Hz", "eta_cold"))
        eta_cold = SpectralCurve.from_grid(grid, vals)
        eta_rt = _warm(eta_cold, deltas, cal, rt["eta_weight2"])
    if background:
        grid = lattice(lo, hi, rt["fine_step"])
        vals = _run_points(_background_worker, grid, protocol.control_only(), medium, params, jobs,
                           "background_cold", ("delta_Hz", "q_scatter_photons", "q_stokes_photons"))
        vals = vals.reshape(-1, 2)
        scatter_cold = SpectralCurve.from_grid(grid, vals[:, 0])
        stokes_cold = SpectralCurve.from_grid(grid, vals[:, 1])
        w2 = rt["background_weight2"]
        scatter_rt = _warm(scatter_cold, deltas, cal, w2)
        stokes_rt = _warm(stokes_cold, deltas, cal, w2)
        q0 = _warm(scatter_cold, [0.0], cal, w2) + _warm(stokes_cold, [0.0], cal, w2)
        floor = rt["floor_fraction"] * float(q0[0])
    t_rt = spectral.medium_transmission(deltas, cal.transmission_model()).values
    return WarmCurves(deltas, eta_cold, scatter_cold, stokes_cold, eta_rt, t_rt, scatter_rt, stokes_rt, floor)


def _at(deltas, values, where):
    return float(np.interp(where, deltas, values))


# --------------------------------------------------------------------------
# scenarios
# --------------------------------------------------------------------------

def efficiency_sweep(cal, config) -> ScenarioOutput:
    grid = config.grid.points()
    w = warm_curves(cal, grid, config.jobs, background=False)
    signal = w.eta_rt * w.t_rt
    cold_on_grid = np.interp(grid, w.eta_cold.deltas, w.eta_cold.values)
    table = Table("efficiency", {
        "delta_Hz": grid,
        "eta_cold": cold_on_grid,
        "eta_rt": w.eta_rt,
        "t_rt": w.t_rt,
        "eta_rt_t_rt": signal,
    })
    cold_table = Table("eta_cold_scan", {"delta_Hz": w.eta_cold.deltas, "eta_cold": w.eta_cold.values})
    k = int(np.argmax(signal))
    op = cal.values["room_temperature"]["operating_point"]
    split = cal.values["room_temperature"]["splitting"]
    summary = {
        "max_eta_t_delta_Hz": float(grid[k]),
        "max_eta_t": float(signal[k]),
        "max_eta_t_offset_from_line1_Hz": float(abs(grid[k])),
        "max_eta_t_offset_from_line2_Hz": float(abs(grid[k] + split)),
        "operating_point_Hz": op,
        "eta_t_at_operating_point": _at(grid, signal, op),
        "eta_cold_max": float(w.eta_cold.values.max()),
        "eta_cold_at_resonance": _at(w.eta_cold.deltas, w.eta_cold.values, 0.0),
    }
    return ScenarioOutput([table, cold_table], summary)


def _fwhm_report(curve: SpectralCurve) -> tuple:
    width = spectral.fwhm(curve, allow_truncated=True)
    try:
        spectral.fwhm(curve)
        truncated = False
    except PhysicsError:
        truncated = True
    return width, truncated


def background_sweep(cal, config) -> ScenarioOutput:
    grid = config.grid.points()
    w = warm_curves(cal, grid, config.jobs, efficiency=False)
    sc = np.interp(grid, w.scatter_cold.deltas, w.scatter_cold.values)
    st = np.interp(grid, w.stokes_cold.deltas, w.stokes_cold.values)
    table = Table("background", {
        "delta_Hz": grid,
        "q_scatter_cold_photons": sc,
        "q_stokes_cold_photons": st,
        "q_scatter_rt_photons": w.scatter_rt,
        "q_stokes_rt_photons": w.stokes_rt,
        "q_total_rt_photons": w.q_rt,
    })
    sc_w, sc_trunc = _fwhm_report(SpectralCurve.from_grid(grid, sc))
    st_w, st_trunc = _fwhm_report(SpectralCurve.from_grid(grid, st))
    summary = {
        "scatter_fwhm_Hz": sc_w,
        "scatter_fwhm_truncated": sc_trunc,
        "stokes_fwhm_Hz": st_w,
        "stokes_fwhm_truncated": st_trunc,
        "stokes_to_scatter_fwhm_ratio": st_w / sc_w if sc_w > 0 else float("inf"),
        "technical_floor_photons": w.floor,
    }
    return ScenarioOutput([table], summary)


def sbr_sweep(cal, config) -> ScenarioOutput:
    grid = config.grid.points()
    w = warm_curves(cal, grid, config.jobs)
    photons = cal.values["protocol"]["photons"]
    eta = SpectralCurve.from_grid(grid, photons * w.eta_rt)
    report = noise.sbr_curve(eta, SpectralCurve.from_grid(grid, w.t_rt),
                             SpectralCurve.from_grid(grid, w.q_rt), w.floor)
    table = Table("sbr", {
        "delta_Hz": grid,
        "eta_t": eta.values * w.t_rt,
        "q_scatter_photons": w.scatter_rt,
        "q_stokes_photons": w.stokes_rt,
        "sbr": report.sbr_curve.values,
    })
    op = cal.values["room_temperature"]["operating_point"]
    summary = {
        "optimal_delta_Hz": report.optimal_delta,
        "sbr_at_optimum": report.sbr_at_optimum,
        "technical_floor_photons": report.floor,
        "floor_fraction": cal.values["room_temperature"]["floor_fraction"],
        "operating_point_Hz": op,
        "sbr_at_operating_point": _at(grid, report.sbr_curve.values, op),
        "eta_t_at_operating_point": _at(grid, eta.values * w.t_rt, op),
        "max_eta_t_delta_Hz": float(grid[int(np.argmax(eta.values * w.t_rt))]),
    }
    return ScenarioOutput([table], summary)


def etalon_scan(cal, config) -> ScenarioOutput:
    f = cal.values["filter"]
    offsets = config.grid.points()
    params = cal.atom()
    medium = cal.medium(params)
    protocol = cal.protocol().control_only()
    delta = f["scan_delta"]
    status = _background_worker((delta, protocol, medium, params))
    if status[0] != "ok":
        raise ScenarioError(status[1], failed_points=[delta])
    q_scatter, q_stokes = status[1]

    n_lo = math.ceil(f["span"] / f["resolution"])
    n_hi = math.ceil((f["stokes_offset"] + f["span"]) / f["resolution"])
    freq = f["resolution"] * np.arange(-n_lo, n_hi + 1)
    sc, st = spectral.background_spectrum(freq, q_scatter, q_stokes, f["scatter_linewidth"],
                                          f["stokes_linewidth"], f["stokes_offset"])
    cascade = cal.cascade()
    filtered = spectral.filter_background(sc, st, cascade, offsets)
    table = Table("etalon_scan", {
        "etalon_offset_Hz": offsets,
        "scatter_photons": filtered.scatter,
        "stokes_photons": filtered.stokes,
        "total_photons": filtered.total,
        "transmitted_fraction": filtered.normalized,
    })
    equal = cal.cascade(swap_fsr=f["fsr"])
    frac = spectral.filter_fractions(cascade, f["scatter_linewidth"], f["stokes_linewidth"], f["stokes_offset"],
                                     resolution=f["resolution"], span=f["span"])
    frac_equal = spectral.filter_fractions(equal, f["scatter_linewidth"], f["stokes_linewidth"],
                                           f["stokes_offset"], resolution=f["resolution"], span=f["span"])
    summary = {
        "scan_delta_Hz": delta,
        "scatter_photons_in": q_scatter,
        "stokes_photons_in": q_stokes,
        "scatter_line_center_Hz": float(sc.deltas[int(np.argmax(sc.values))]),
        "stokes_line_center_Hz": float(st.deltas[int(np.argmax(st.values))]),
        "scatter_transmission": frac[0],
        "stokes_transmission": frac[1],
        "stokes_transmission_equal_fsr": frac_equal[1],
        "stokes_suppression_dB": 10.0 * math.log10(frac_equal[1] / frac[1]) if frac[1] > 0 else float("inf"),
        "etalon_fwhm_Hz": [spectral.etalon_fwhm(e) for e in cascade],
    }
    return ScenarioOutput([table], summary)


def model_sbr(cal, jobs: int = 1) -> tuple:
    """Single-rail and qubit (possibly dual-rail) SBR at the operating point."""
    rt = cal.values["room_temperature"]
    op = rt["operating_point"]
    w = warm_curves(cal, [op], jobs)
    signal = cal.values["protocol"]["photons"] * float(w.eta_rt[0] * w.t_rt[0])
    background = float(w.q_rt[0]) + w.floor
    single = signal / background
    return single, (single / 2.0 if rt["dual_rail"] else single)


def qubit_fidelity(cal, config) -> ScenarioOutput:
    q = cal.values["qubit"]
    summary = {}
    if q["sbr"] >= 0:
        sbr = q["sbr"]
        summary["sbr_source"] = "configured"
    else:
        single, sbr = model_sbr(cal, config.jobs)
        summary["sbr_source"] = "model"
        summary["sbr_single_rail"] = single
    thresholds = noise.classical_thresholds(q["mean_photons"], q["efficiency"])
    rng = np.random.default_rng(config.seed)
    truth = noise.rotation_matrix([1.0, 1.0, 1.0], math.radians(q["rotation_deg"]))
    labels = list(noise.BASIS_STATES)
    inputs = [noise.BASIS_STATES[k] for k in labels]

    def channel(s):
        v = truth @ noise.depolarize(s, sbr, q["intrinsic_fidelity"]).as_array()
        v = v + q["noise"] * rng.standard_normal(3)
        n = np.linalg.norm(v)
        return noise.StokesVector.from_array(v / n if n > 1.0 else v)

    outputs = [channel(s) for s in inputs]
    fit = noise.align_frames(inputs, outputs)
    report = noise.fidelity_report(fit.mean_fidelity, thresholds)
    model_f = noise.sbr_to_fidelity(sbr, q["intrinsic_fidelity"])
    nf_sbr = sbr * q["noise_free_suppression"]
    recovered = noise.rotation_angle(fit.rotation @ truth)
    table = Table("qubit_fidelity", {
        "state": labels,
        "s1_in": [s.s1 for s in inputs],
        "s2_in": [s.s2 for s in inputs],
        "s3_in": [s.s3 for s in inputs],
        "s1_out": [s.s1 for s in fit.aligned_outputs],
        "s2_out": [s.s2 for s in fit.aligned_outputs],
        "s3_out": [s.s3 for s in fit.aligned_outputs],
        "fidelity": fit.fidelities,
    })
    summary.update({
        "sbr": sbr,
        "mean_fidelity": report.fidelity,
        "qber": report.qber,
        "margin_intercept_resend": report.vs_intercept_resend,
        "margin_nonunitary": report.vs_nonunitary_bound,
        "beats_classical": report.beats_classical,
        "model_fidelity": model_f,
        "rotation_error_deg": math.degrees(recovered),
        "noise_free_sbr": nf_sbr,
        "noise_free_fidelity": noise.sbr_to_fidelity(nf_sbr, q["intrinsic_fidelity"]),
    })
    return ScenarioOutput([table], summary)


def parse_points(text: str) -> list:
    """``"t1:eta1, t2:eta2"`` to a list of float pairs."""
    points = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        t, _, eta = chunk.partition(":")
        points.append((float(t), float(eta)))
    return points


def lifetime_fit(cal, config) -> ScenarioOutput:
    try:
        points = parse_points(cal.values["lifetime"]["points"])
    except ValueError as exc:
        from ..errors import RangeError
        raise RangeError(f"lifetime.points: {exc}") from None
    try:
        fit = noise.lifetime_fit(points)
    except ValueError as exc:
        raise PhysicsError(f"lifetime fit: {exc}") from None
    t = np.array([p[0] for p in points])
    table = Table("lifetime", {
        "storage_time_s": t,
        "eta_measured": np.array([p[1] for p in points]),
        "eta_fit": fit(t),
        "log_residual": fit.residuals,
    })
    summary = {"eta0": fit.eta0, "tau_c_s": fit.tau_c, "rms_log_residual": fit.rms_residual}
    return ScenarioOutput([table], summary)


SCENARIOS = {
    "efficiency-sweep": efficiency_sweep,
    "background-sweep": background_sweep,
    "sbr-sweep": sbr_sweep,
    "etalon-scan": etalon_scan,
    "qubit-fidelity": qubit_fidelity,
    "lifetime-fit": lifetime_fit,
}
