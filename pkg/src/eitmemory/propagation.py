"""Maxwell-Bloch propagation of a weak probe through a driven four-level medium.

The probe carries on average about one photon, so the atoms respond
linearly to it.  Each propagation is split into

* a background trajectory ``rho_bg(t)`` driven by the control alone.  It is
  the same in every slice because the control is undepleted;
* the first-order response ``X(z, t)`` to the probe field, which obeys
  ``dX/dt = L(t) X + E(z, t) b(t)`` with ``b = i Omega_p [sigma_31, rho_bg]``;
* the field equation ``dE/dz = i kappa rho_31`` in the retarded frame.

The control is piecewise constant over a time step, so the atomic part is
advanced with exact matrix exponentials and the forcing is interpolated
linearly across the step.  Along ``z`` the field uses the box (midpoint)
scheme, which is A-stable however large the optical depth of one slice.
Only the part of ``rho_31`` proportional to ``E`` couples back into the
probe; the part proportional to ``conj(E)`` (phase-conjugate four-wave
mixing through the virtual state) is dropped.

Background light has two channels.  Incoherent scatter is spontaneous
emission out of |3>, ``2 (Gamma_31 + Gamma_32) rho_33`` per atom.  The
Stokes field is the coherent Raman field radiated by ``rho_42`` plus the
spontaneous Raman emission ``2 Gamma_42 rho_44`` per atom; both are counted
as Stokes photons because they sit at the same frequency.

Fields are in units of sqrt(photons / s): ``sum |E|^2 dt`` is a photon
number, so a probe with unit energy holds one photon on average.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.signal import lfilter

from .core import N_LEVELS, TWO_PI, AtomFieldParams, exponential_step, sigma, superoperator_parts
from .errors import EmptyWindowError, GridResolutionError, InvariantViolation, PhysicsError
from .spectral import SpectralCurve, check_uniform

logger = logging.getLogger(__name__)

SPEED_OF_LIGHT = 299_792_458.0

# row-major positions of matrix elements inside vec(rho)
_I31 = 2 * N_LEVELS + 0
_I33 = 2 * N_LEVELS + 2
_I42 = 3 * N_LEVELS + 1
_I24 = 1 * N_LEVELS + 3
_I44 = 3 * N_LEVELS + 3


# --------------------------------------------------------------------------
# data types
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PulseEnvelope:
    """Complex field samples on the grid ``t0 + k dt``."""

    samples: np.ndarray
    dt: float
    t0: float = 0.0

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=complex)
        if s.ndim != 1:
            raise ValueError("pulse samples must be 1-D")
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt!r}")
        if not np.all(np.isfinite(s)):
            raise ValueError("pulse samples must be finite")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @classmethod
    def gaussian(cls, fwhm: float, center: float, dt: float, duration: float,
                 photons: float = 1.0, t0: float = 0.0) -> "PulseEnvelope":
        """Gaussian intensity profile normalised to ``photons`` on the sampled grid."""
        n = int(math.floor(duration / dt + 1e-9)) + 1
        t = t0 + dt * np.arange(n)
        shape = np.exp(-2.0 * math.log(2.0) * ((t - center) / fwhm) ** 2)
        norm = math.sqrt(np.sum(shape ** 2) * dt)
        return cls(math.sqrt(photons) * shape / norm, dt, t0)

    @classmethod
    def zeros(cls, n: int, dt: float, t0: float = 0.0) -> "PulseEnvelope":
        return cls(np.zeros(n, dtype=complex), dt, t0)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.samples.size)

    @property
    def intensity(self) -> np.ndarray:
        return np.abs(self.samples) ** 2

    def energy(self, start: float | None = None, stop: float | None = None) -> float:
        """``sum |E|^2 dt`` over samples with ``start <= t < stop``."""
        mask = _window_mask(self.times, start, stop, self.dt)
        return float(np.sum(self.intensity[mask]) * self.dt)


def _window_mask(times, start, stop, dt):
    mask = np.ones(times.size, dtype=bool)
    tol = 1e-6 * dt
    if start is not None:
        mask &= times >= start - tol
    if stop is not None:
        mask &= times < stop - tol
    return mask


@dataclass(frozen=True)
class MediumGrid:
    """Discretised vapour column.

    ``coupling_prefactor`` is ``Omega_p N / c`` in rad/(s m) per unit
    coherence; ``stokes_prefactor`` plays the same role for the Stokes
    channel (``None`` means equal to the probe value).  ``collection`` is
    the number of detected scatter photons per unit of ``2 (G31 + G32) rho_33``
    and atom, i.e. the fraction of spontaneous emission that falls into the
    detected mode.
    """

    n_slices: int
    length: float
    atom_number: float
    coupling_prefactor: float
    stokes_prefactor: float | None = None
    collection: float = 0.0

    def __post_init__(self):
        if int(self.n_slices) != self.n_slices or self.n_slices < 1:
            raise ValueError(f"n_slices must be an integer >= 1, got {self.n_slices!r}")
        if not self.length > 0:
            raise ValueError(f"length must be > 0, got {self.length!r}")
        if self.atom_number < 0 or self.coupling_prefactor < 0 or self.collection < 0:
            raise ValueError("atom_number, coupling_prefactor and collection must be >= 0")

    @classmethod
    def for_params(cls, params: AtomFieldParams, atom_number: float, length: float = 0.075,
                   n_slices: int = 200, stokes_ratio: float = 1.0, collection: float = 0.0) -> "MediumGrid":
        kappa = params.omega_p * atom_number / SPEED_OF_LIGHT
        return cls(n_slices, length, atom_number, kappa, stokes_ratio * kappa, collection)

    @classmethod
    def from_optical_depth(cls, optical_depth: float, params: AtomFieldParams, length: float = 0.075,
                           n_slices: int = 200, stokes_ratio: float = 1.0,
                           collection: float = 0.0) -> "MediumGrid":
        """Medium whose resonant two-level intensity optical depth is ``optical_depth``."""
        gamma = coherence_decay(params)
        atom_number = optical_depth * gamma * SPEED_OF_LIGHT / (2.0 * params.omega_p ** 2 * length)
        return cls.for_params(params, atom_number, length, n_slices, stokes_ratio, collection)

    @property
    def dz(self) -> float:
        return self.length / self.n_slices

    @property
    def kappa_stokes(self) -> float:
        return self.coupling_prefactor if self.stokes_prefactor is None else self.stokes_prefactor

    def optical_depth(self, params: AtomFieldParams) -> float:
        return 2.0 * self.coupling_prefactor * params.omega_p * self.length / coherence_decay(params)

    def with_atoms(self, atom_number: float, params: AtomFieldParams) -> "MediumGrid":
        ratio = 1.0 if self.coupling_prefactor == 0 else self.kappa_stokes / self.coupling_prefactor
        return MediumGrid.for_params(params, atom_number, self.length, self.n_slices, ratio, self.collection)


def coherence_decay(params: AtomFieldParams) -> float:
    """Decay rate of rho_31 in the absence of fields.

    The optional |2> -> |1> companion term does not touch rho_31.
    """
    return params.gamma31 + params.gamma32 + params.gamma12


@dataclass(frozen=True)
class ControlSchedule:
    """On / off / on control with raised-cosine edges.

    ``off_time`` and ``on_time`` are the midpoints of the write switch-off and
    read switch-on edges; each edge lasts ``edge`` seconds.
    """

    off_time: float
    on_time: float
    edge: float = 50e-9
    amplitude: complex = 1.0

    def __post_init__(self):
        if self.edge < 0:
            raise ValueError("edge duration must be >= 0")
        if self.on_time - self.off_time < self.edge:
            raise ValueError("control must be fully off between write and read (on_time - off_time >= edge)")

    @property
    def write_end(self) -> float:
        return self.off_time + 0.5 * self.edge

    @property
    def read_start(self) -> float:
        return self.on_time - 0.5 * self.edge

    def shape(self, t):
        t = np.asarray(t, dtype=float)
        out = np.ones_like(t)
        if self.edge == 0:
            out[(t >= self.off_time) & (t < self.on_time)] = 0.0
            return out
        a = self.off_time - 0.5 * self.edge
        x = np.clip((t - a) / self.edge, 0.0, 1.0)
        down = 0.5 * (1.0 + np.cos(np.pi * x))
        b = self.read_start
        y = np.clip((t - b) / self.edge, 0.0, 1.0)
        up = 0.5 * (1.0 - np.cos(np.pi * y))
        return np.where(t < self.write_end, down, up)

    def __call__(self, t):
        return self.amplitude * self.shape(t)


@dataclass(frozen=True)
class StorageProtocol:
    probe: PulseEnvelope
    control: ControlSchedule
    retrieval_window: float

    def __post_init__(self):
        if not self.retrieval_window > 0:
            raise ValueError("retrieval_window must be > 0")

    @classmethod
    def standard(cls, storage_time: float = 700e-9, pulse_fwhm: float = 400e-9,
                 retrieval_window: float | None = None, dt: float = 2e-9, edge: float = 50e-9,
                 write_offset: float = 200e-9, control_amplitude: complex = 1.0,
                 photons: float = 1.0, lead: float = 2.0) -> "StorageProtocol":
        """Gaussian probe, flat-top control, storage measured between edge midpoints.

        The probe peak sits ``lead`` widths after ``t = 0``; the write switch-off
        is centred ``write_offset`` after the peak.  The simulation ends with
        the retrieval window, which defaults to the probe width.
        """
        if retrieval_window is None:
            retrieval_window = pulse_fwhm
        center = lead * pulse_fwhm
        off = center + write_offset
        on = off + storage_time
        control = ControlSchedule(off, on, edge, control_amplitude)
        end = control.read_start + retrieval_window
        probe = PulseEnvelope.gaussian(pulse_fwhm, center, dt, end, photons)
        return cls(probe, control, retrieval_window)

    @property
    def storage_time(self) -> float:
        return self.control.on_time - self.control.off_time

    @property
    def roi(self) -> tuple:
        start = self.control.read_start
        return start, start + self.retrieval_window

    def control_only(self) -> "StorageProtocol":
        return replace(self, probe=PulseEnvelope.zeros(self.probe.samples.size, self.probe.dt, self.probe.t0))

    def without_control(self) -> "StorageProtocol":
        return replace(self, control=replace(self.control, amplitude=0.0))


@dataclass(frozen=True)
class StorageResult:
    probe_in: PulseEnvelope
    probe_out: PulseEnvelope
    stokes_out: PulseEnvelope
    scatter_emission: np.ndarray
    efficiency: float
    background_photons: dict = field(default_factory=dict)
    raman_emission: np.ndarray | None = None

    @property
    def times(self) -> np.ndarray:
        return self.probe_in.times


# --------------------------------------------------------------------------
# engine
# --------------------------------------------------------------------------

class _StepCache:
    """Exact one-step maps keyed by the (piecewise constant) control value."""

    def __init__(self, params: AtomFieldParams, dt: float):
        self.parts = superoperator_parts(params)
        self.dt = dt
        self._maps = {}

    def __call__(self, c: complex):
        key = complex(c)
        if key not in self._maps:
            l0, _, _, lc, lcd = self.parts
            self._maps[key] = exponential_step(l0 + key * lc + key.conjugate() * lcd, self.dt)
        return self._maps[key]


def _control_midpoints(protocol: StorageProtocol, times: np.ndarray) -> np.ndarray:
    mid = times[:-1] + 0.5 * protocol.probe.dt
    return np.asarray(protocol.control(mid), dtype=complex)


def _check_bandwidth(probe: PulseEnvelope, tol: float = 1e-6) -> None:
    """Reject probes with significant spectral energy in the upper half of the Nyquist band."""
    if probe.samples.size < 4 or not np.any(probe.samples):
        return
    spec = np.abs(np.fft.fft(probe.samples)) ** 2
    freq = np.abs(np.fft.fftfreq(probe.samples.size, probe.dt))
    nyquist = 0.5 / probe.dt
    fraction = spec[freq > 0.5 * nyquist].sum() / spec.sum()
    if fraction > tol:
        raise GridResolutionError(
            f"probe bandwidth too large for dt = {probe.dt:.3g} s: {fraction:.2e} of its energy lies above "
            f"half the Nyquist frequency {nyquist:.3g} Hz"
        )


def _fast_frequency(params: AtomFieldParams) -> float:
    """Largest free precession frequency (Hz) of the probe coherence in the field frame."""
    e1 = -params.delta13 + params.delta
    e2 = -(params.delta13 - params.delta23)
    return max(abs(e1), abs(e2), abs(e1 - e2)) / TWO_PI


def substeps_for(params: AtomFieldParams, dt: float, max_phase: float = 0.5) -> int:
    """Number of sub-steps keeping ``|detuning| * dt_sub <= max_phase`` (cycles per step).

    Free-induction ringing at the one-photon detuning would otherwise alias
    onto the field grid, badly so when ``detuning * dt`` is near an integer.
    """
    return max(1, int(math.ceil(_fast_frequency(params) * dt / max_phase - 1e-12)))


def _background(ctrl_mid: np.ndarray, cache: _StepCache, trace_tol=1e-9, herm_tol=1e-10, eig_tol=1e-8):
    out = np.empty((ctrl_mid.size + 1, N_LEVELS * N_LEVELS), dtype=complex)
    rho = np.zeros(N_LEVELS * N_LEVELS, dtype=complex)
    rho[0] = 1.0
    out[0] = rho
    for m, c in enumerate(ctrl_mid, start=1):
        rho = cache(c)[0] @ rho
        out[m] = rho
    _check_background(out, trace_tol, herm_tol, eig_tol)
    return out


def background_trajectory(protocol: StorageProtocol, params: AtomFieldParams) -> np.ndarray:
    """Control-only density matrices (row-major vectors) on the probe time grid.

    Every slice starts in |1> and sees the same control, so one trajectory
    serves the whole column.
    """
    times = protocol.probe.times
    cache = _StepCache(params, protocol.probe.dt)
    return _background(_control_midpoints(protocol, times), cache)


def _check_background(traj, trace_tol, herm_tol, eig_tol):
    mats = traj.reshape(-1, N_LEVELS, N_LEVELS)
    trace_err = np.max(np.abs(np.trace(mats, axis1=1, axis2=2) - 1.0))
    herm_err = np.max(np.abs(mats - np.conj(np.swapaxes(mats, 1, 2))))
    if trace_err > trace_tol or herm_err > herm_tol:
        raise InvariantViolation(f"background state drifted: trace error {trace_err:.2e}, hermiticity {herm_err:.2e}")
    herm = 0.5 * (mats + np.conj(np.swapaxes(mats, 1, 2)))
    min_eig = float(np.min(np.linalg.eigvalsh(herm)))
    if min_eig < -eig_tol:
        raise InvariantViolation(f"background state lost positivity: min eigenvalue {min_eig:.2e}")


def _probe_forcing(traj: np.ndarray, params: AtomFieldParams) -> np.ndarray:
    """``b(t) = i Omega_p vec([sigma_31, rho_bg(t)])`` for each time sample."""
    mats = traj.reshape(-1, N_LEVELS, N_LEVELS)
    s31 = sigma(3, 1)
    comm = s31 @ mats - mats @ s31
    return 1j * params.omega_p * comm.reshape(-1, N_LEVELS * N_LEVELS)


def _emission_rates(rho33, rho44, params: AtomFieldParams, per_atom: float):
    """Detected photon rates from |3> (scatter) and from |4> into |2> (spontaneous Raman).

    ``rho33`` and ``rho44`` are populations summed over the slices and
    ``per_atom`` is the number of atoms per slice times the collection.
    """
    scatter = 2.0 * (params.gamma31 + params.gamma32) * rho33 * per_atom
    raman = 2.0 * params.gamma42 * rho44 * per_atom
    return scatter, raman


def propagate(protocol: StorageProtocol, medium: MediumGrid, params: AtomFieldParams) -> StorageResult:
    """Write, store and read a weak probe pulse; return output fields and efficiency.

    The internal time step is the probe grid step divided by
    :func:`substeps_for`; outputs are reported on the probe grid.
    """
    probe = protocol.probe
    _check_bandwidth(probe)
    times = probe.times
    roi_start, roi_stop = protocol.roi
    if roi_stop > times[-1] + probe.dt * (1 + 1e-6):
        raise GridResolutionError("retrieval window extends beyond the simulated time span")

    k = substeps_for(params, probe.dt)
    dt = probe.dt / k
    fine = probe.t0 + dt * np.arange((times.size - 1) * k + 1)
    if k == 1:
        e_in = probe.samples
    else:
        e_in = np.interp(fine, times, probe.samples.real) + 1j * np.interp(fine, times, probe.samples.imag)
    cache = _StepCache(params, dt)
    ctrl = np.asarray(protocol.control(fine[:-1] + 0.5 * dt), dtype=complex)
    traj = _background(ctrl, cache)
    forcing = _probe_forcing(traj, params)

    n_z = medium.n_slices
    kdz = medium.coupling_prefactor * medium.dz
    e_out = np.empty_like(e_in)
    e_out[0] = e_in[0]
    # first-order coherence sums needed by the Stokes and scatter channels
    lin42 = np.zeros(fine.size, dtype=complex)
    lin33 = np.zeros(fine.size)
    lin44 = np.zeros(fine.size)

    x = np.zeros((n_z, N_LEVELS * N_LEVELS), dtype=complex)
    e_mid = np.full(n_z, e_in[0], dtype=complex)
    for m in range(1, fine.size):
        phi, w0, w1 = cache(ctrl[m - 1])
        a = x @ phi.T + np.outer(e_mid, w0 @ forcing[m - 1])
        beta_vec = w1 @ forcing[m]
        u = 0.5j * kdz * beta_vec[_I31]
        g = (1.0 + u) / (1.0 - u)
        h = 1j * kdz * a[:, _I31] / (1.0 - u)
        e_nodes, _ = lfilter([1.0], [1.0, -g], h, zi=[g * e_in[m]])
        e_prev = np.concatenate(([e_in[m]], e_nodes[:-1]))
        e_mid = 0.5 * (e_prev + e_nodes)
        x = a + np.outer(e_mid, beta_vec)
        e_out[m] = e_nodes[-1]
        lin42[m] = np.sum(x[:, _I42] + np.conj(x[:, _I24]))
        lin33[m] = 2.0 * np.sum(x[:, _I33].real)
        lin44[m] = 2.0 * np.sum(x[:, _I44].real)

    if not np.all(np.isfinite(e_out)):
        raise InvariantViolation("probe field became non-finite during propagation")

    rho42 = (traj[:, _I42] * n_z + lin42)[::k]
    rho33 = (traj[:, _I33].real * n_z + lin33)[::k]
    rho44 = (traj[:, _I44].real * n_z + lin44)[::k]
    stokes = 1j * medium.kappa_stokes * medium.dz * rho42
    per_atom = (medium.atom_number / n_z) * medium.collection
    scatter, raman = _emission_rates(rho33, rho44, params, per_atom)

    probe_out = PulseEnvelope(e_out[::k], probe.dt, probe.t0)
    stokes_out = PulseEnvelope(stokes, probe.dt, probe.t0)
    mask = _window_mask(times, roi_start, roi_stop, probe.dt)
    background = {
        "scatter": float(max(np.sum(scatter[mask]) * probe.dt, 0.0)),
        "stokes": stokes_out.energy(roi_start, roi_stop) + float(max(np.sum(raman[mask]) * probe.dt, 0.0)),
    }
    result = StorageResult(probe, probe_out, stokes_out, scatter, 0.0, background, raman)
    eta = storage_efficiency(result, protocol) if probe.energy() > 0 else 0.0
    return replace(result, efficiency=eta)


def storage_efficiency(result: StorageResult, protocol: StorageProtocol) -> float:
    """Retrieved energy inside the retrieval window over the input energy, clamped to [0, 1]."""
    times = result.probe_out.times
    start, stop = protocol.roi
    dt = result.probe_out.dt
    if start < times[0] - 1e-6 * dt or stop > times[-1] + dt * (1 + 1e-6):
        raise EmptyWindowError("retrieval window lies outside the simulated time span")
    mask = _window_mask(times, start, stop, dt)
    if not mask.any():
        raise EmptyWindowError("retrieval window contains no samples")
    e_in = result.probe_in.energy()
    if e_in <= 0:
        raise EmptyWindowError("input probe carries no energy")
    eta = float(np.sum(np.abs(result.probe_out.samples[mask]) ** 2) * dt / e_in)
    if eta < 0.0 or eta > 1.0:
        logger.warning("efficiency %.6g clamped to [0, 1]", eta)
        eta = min(max(eta, 0.0), 1.0)
    return eta


# --------------------------------------------------------------------------
# detuning scans
# --------------------------------------------------------------------------

def _as_grid(delta_grid) -> np.ndarray:
    if isinstance(delta_grid, SpectralCurve):
        return delta_grid.deltas
    grid = np.atleast_1d(np.asarray(delta_grid, dtype=float))
    check_uniform(grid)
    return grid


def _efficiency_point(args):
    delta_hz, protocol, medium, params = args
    try:
        return propagate(protocol, medium, params.detuned(TWO_PI * delta_hz)).efficiency
    except PhysicsError as exc:
        raise type(exc)(f"at detuning {delta_hz:.6g} Hz: {exc}") from exc


def _map(fn, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


def efficiency_bandwidth_scan(delta_grid, protocol: StorageProtocol, medium: MediumGrid,
                              params: AtomFieldParams, jobs: int = 1) -> SpectralCurve:
    """Storage efficiency against one-photon detuning (Hz) at two-photon resonance."""
    grid = _as_grid(delta_grid)
    values = _map(_efficiency_point, [(float(d), protocol, medium, params) for d in grid], jobs)
    return SpectralCurve.from_grid(grid, np.asarray(values))


def background_photons(protocol: StorageProtocol, medium: MediumGrid, params: AtomFieldParams) -> tuple:
    """Scatter and Stokes photons inside the retrieval window with no probe present.

    Identical to ``propagate(protocol.control_only(), ...)`` but skips the
    field propagation, which carries nothing when the probe is zero.
    """
    if np.any(protocol.probe.samples):
        raise ValueError("background runs require a zero probe envelope")
    traj = background_trajectory(protocol, params)
    times = protocol.probe.times
    dt = protocol.probe.dt
    mask = _window_mask(times, *protocol.roi, dt)
    scatter, raman = _emission_rates(traj[:, _I33].real, traj[:, _I44].real, params,
                                     medium.atom_number * medium.collection)
    coherent = medium.kappa_stokes * medium.length * np.abs(traj[:, _I42])
    q_scatter = float(max(np.sum(scatter[mask]) * dt, 0.0))
    q_stokes = float(np.sum(coherent[mask] ** 2) * dt + max(np.sum(raman[mask]) * dt, 0.0))
    return q_scatter, q_stokes


def _background_point(args):
    delta_hz, protocol, medium, params = args
    try:
        return background_photons(protocol, medium, params.detuned(TWO_PI * delta_hz))
    except PhysicsError as exc:
        raise type(exc)(f"at detuning {delta_hz:.6g} Hz: {exc}") from exc


def background_emission_scan(delta_grid, control_only_protocol: StorageProtocol, medium: MediumGrid,
                             params: AtomFieldParams, jobs: int = 1):
    """Scatter and Stokes photons per pulse against one-photon detuning (Hz).

    Returns ``(scatter, stokes)`` curves.  The Stokes field is emitted 13.6 GHz
    away from the probe frequency; that offset matters only for filtering
    and is applied by the spectral tools.
    """
    grid = _as_grid(delta_grid)
    items = [(float(d), control_only_protocol, medium, params) for d in grid]
    pairs = np.asarray(_map(_background_point, items, jobs)).reshape(-1, 2)
    return SpectralCurve.from_grid(grid, pairs[:, 0]), SpectralCurve.from_grid(grid, pairs[:, 1])


def scan_many(fn, items: Sequence, jobs: int = 1):
    """Order-preserving map used by the harness for independent sweep points."""
    return _map(fn, list(items), jobs)
