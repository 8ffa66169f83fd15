"""Spectral post-processing: velocity broadening, line composition, etalons.

Detunings here are ordinary frequencies in Hz.  Positive detuning means the
lasers sit to the red of the F=1 -> F'=1 line; the second excited line
(F'=2, higher in energy) therefore appears at ``-splitting``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import CoverageError, GridMismatchError

logger = logging.getLogger(__name__)

D1_EXCITED_SPLITTING = 814.5e6
GROUND_SPLITTING = 6.834682e9
STOKES_OFFSET = 13.6e9
DEFAULT_WD = 960e6


@dataclass(frozen=True)
class SpectralCurve:
    """Real samples on the uniform grid ``delta0 + j * delta_step``."""

    values: np.ndarray
    delta0: float
    delta_step: float

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size < 1:
            raise ValueError("SpectralCurve needs a 1-D array with at least one sample")
        if not np.all(np.isfinite(values)):
            raise ValueError("SpectralCurve values must be finite")
        if not self.delta_step > 0:
            raise ValueError(f"delta_step must be > 0, got {self.delta_step!r}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_grid(cls, deltas, values, rtol: float = 1e-9) -> "SpectralCurve":
        deltas = np.asarray(deltas, dtype=float)
        step = check_uniform(deltas, rtol)
        return cls(np.asarray(values, dtype=float), float(deltas[0]), step)

    @property
    def count(self) -> int:
        return self.values.size

    @property
    def deltas(self) -> np.ndarray:
        return self.delta0 + self.delta_step * np.arange(self.count)

    def with_values(self, values) -> "SpectralCurve":
        return SpectralCurve(values, self.delta0, self.delta_step)

    def same_grid(self, other: "SpectralCurve", rtol: float = 1e-9) -> bool:
        return (
            self.count == other.count
            and math.isclose(self.delta_step, other.delta_step, rel_tol=rtol)
            and abs(self.delta0 - other.delta0) <= rtol * max(abs(self.delta_step), 1.0)
        )

    def integral(self) -> float:
        return float(self.values.sum() * self.delta_step)

    def argmax_delta(self) -> float:
        return float(self.deltas[int(np.argmax(self.values))])


def check_uniform(deltas, rtol: float = 1e-9) -> float:
    """Return the step of a strictly increasing uniform grid or raise."""
    deltas = np.asarray(deltas, dtype=float)
    if deltas.ndim != 1 or deltas.size < 1:
        raise GridMismatchError("detuning grid must be a non-empty 1-D array")
    if deltas.size == 1:
        return 1.0
    steps = np.diff(deltas)
    step = float(steps.mean())
    if step <= 0 or np.max(np.abs(steps - step)) > rtol * max(abs(step), np.max(np.abs(deltas))):
        raise GridMismatchError("detuning grid is not uniform and increasing")
    return step


def require_same_grid(*curves: SpectralCurve) -> None:
    first = curves[0]
    for other in curves[1:]:
        if not first.same_grid(other):
            raise GridMismatchError(
                f"grids differ: ({first.delta0}, {first.delta_step}, {first.count}) vs "
                f"({other.delta0}, {other.delta_step}, {other.count})"
            )


# --------------------------------------------------------------------------
# velocity / pressure broadening
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class VelocityDistribution:
    w_d: float = DEFAULT_WD

    def __post_init__(self):
        if not self.w_d > 0:
            raise ValueError(f"w_d must be > 0, got {self.w_d!r}")


def velocity_weight(delta, dist: VelocityDistribution):
    """Distribution ``sqrt(ln 2)/(W_d sqrt(pi)) / (1 + (2 delta)^2 / W_d^2)`` in 1/Hz."""
    delta = np.asarray(delta, dtype=float)
    prefactor = math.sqrt(math.log(2.0)) / (dist.w_d * math.sqrt(math.pi))
    out = prefactor / (1.0 + (2.0 * delta) ** 2 / dist.w_d ** 2)
    return out if out.ndim else float(out)


def broadening_kernel(delta_step: float, dist: VelocityDistribution, i_max: int | None = None):
    """Normalised weights ``A(i*step)`` for ``i = -i_max..i_max``."""
    if i_max is None:
        i_max = int(math.ceil(3.0 * dist.w_d / delta_step))
    if i_max * delta_step < 3.0 * dist.w_d * (1.0 - 1e-12):
        raise CoverageError(
            f"window half-width i_max*step = {i_max * delta_step:.4g} Hz is below 3*W_d = {3 * dist.w_d:.4g} Hz"
        )
    weights = velocity_weight(np.arange(-i_max, i_max + 1) * delta_step, dist)
    return weights / weights.sum(), i_max


def broaden(curve: SpectralCurve, dist: VelocityDistribution, i_max: int | None = None,
            mode: str = "zero") -> SpectralCurve:
    """Discrete convolution with the (renormalised) velocity distribution.

    ``out[j] = sum_i w_i * curve[j + i]`` for ``|i| <= i_max``.  Samples outside
    the grid are zero (``mode="zero"``) or wrap around (``mode="periodic"``).
    """
    weights, i_max = broadening_kernel(curve.delta_step, dist, i_max)
    values = curve.values
    n = values.size
    if mode == "zero":
        padded = np.concatenate([np.zeros(i_max), values, np.zeros(i_max)])
    elif mode == "periodic":
        padded = values[np.arange(-i_max, n + i_max) % n]
    else:
        raise ValueError(f"unknown padding mode {mode!r}")
    out = np.correlate(padded, weights, mode="valid")
    return curve.with_values(out)


def shift_curve(curve: SpectralCurve, offset: float) -> SpectralCurve:
    """Return ``g(delta) = curve(delta + offset)`` (linear interpolation, zero outside)."""
    src = curve.deltas
    out = np.interp(src + offset, src, curve.values, left=0.0, right=0.0)
    return curve.with_values(out)


def manifold_compose(curve_f1: SpectralCurve, curve_f2: SpectralCurve,
                     splitting: float = D1_EXCITED_SPLITTING, weight2: float = 1.0) -> SpectralCurve:
    """Sum of the two excited-line responses.

    The second line's curve is evaluated at ``delta + splitting`` so its
    centre lands at ``-splitting`` on the common axis.
    """
    require_same_grid(curve_f1, curve_f2)
    if weight2 == 0.0:
        return curve_f1
    return curve_f1.with_values(curve_f1.values + weight2 * shift_curve(curve_f2, splitting).values)


# --------------------------------------------------------------------------
# etalons
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class EtalonParams:
    r: float = 0.9955
    a: float = 2e-4
    fsr: float = 13.6e9
    detuning_offset: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.r < 1.0:
            raise ValueError(f"reflectivity must be in (0, 1), got {self.r!r}")
        if not 0.0 <= self.a < 1.0:
            raise ValueError(f"loss must be in [0, 1), got {self.a!r}")
        if not self.fsr > 0:
            raise ValueError(f"fsr must be > 0, got {self.fsr!r}")

    @property
    def fwhm_estimate(self) -> float:
        return self.fsr * (1.0 - self.r) / (math.pi * math.sqrt(self.r))


def etalon_transmission(delta, etalon: EtalonParams):
    """Airy transmission ``(1-R)^2 (1-A)^2 / (1 + R^2 - 2R cos(2 pi (delta-offset)/FSR))``."""
    delta = np.asarray(delta, dtype=float)
    phase = 2.0 * np.pi * np.mod(delta - etalon.detuning_offset, etalon.fsr) / etalon.fsr
    r = etalon.r
    # 1 + R^2 - 2R cos(phi) written without the cancellation near the peak
    denom = (1.0 - r) ** 2 + 4.0 * r * np.sin(0.5 * phase) ** 2
    out = ((1.0 - r) * (1.0 - etalon.a)) ** 2 / denom
    return out if out.ndim else float(out)


def cascade_transmission(etalons: Sequence[EtalonParams], delta):
    if len(etalons) == 0:
        raise ValueError("cascade needs at least one etalon")
    out = etalon_transmission(delta, etalons[0])
    for et in etalons[1:]:
        out = out * etalon_transmission(delta, et)
    return out


def etalon_fwhm(etalon: EtalonParams) -> float:
    """Full width at half maximum of one Airy peak, by root finding."""
    peak = etalon_transmission(etalon.detuning_offset, etalon)
    half = etalon.fsr / 2.0

    def f(x):
        return etalon_transmission(etalon.detuning_offset + x, etalon) - 0.5 * peak

    return 2.0 * brentq(f, 0.0, half, xtol=1e-9 * etalon.fsr, rtol=1e-15)


def default_cascade() -> list:
    return [EtalonParams(), EtalonParams()]


@dataclass(frozen=True)
class FilteredBackground:
    offsets: np.ndarray
    scatter: np.ndarray
    stokes: np.ndarray
    input_photons: float

    @property
    def total(self) -> np.ndarray:
        return self.scatter + self.stokes

    @property
    def normalized(self) -> np.ndarray:
        """Total transmitted photons per photon entering the filter."""
        if self.input_photons == 0:
            return np.zeros_like(self.total)
        return self.total / self.input_photons


def filter_background(q_scatter: SpectralCurve, q_stokes: SpectralCurve, cascade: Sequence[EtalonParams],
                      etalon_scan_offset=0.0) -> FilteredBackground:
    """Transmitted photons of both background components through the cascade.

    ``q_scatter`` and ``q_stokes`` are photon densities (photons/Hz) on a common
    photon-frequency axis, with the Stokes line carried at its own carrier.
    For each etalon scan offset ``o`` the result is
    ``sum T(delta - o) q(delta) step`` for each component.
    """
    require_same_grid(q_scatter, q_stokes)
    offsets = np.atleast_1d(np.asarray(etalon_scan_offset, dtype=float))
    deltas = q_scatter.deltas
    step = q_scatter.delta_step
    scatter = np.empty(offsets.size)
    stokes = np.empty(offsets.size)
    for k, off in enumerate(offsets):
        trans = cascade_transmission(cascade, deltas - off)
        scatter[k] = np.dot(trans, q_scatter.values) * step
        stokes[k] = np.dot(trans, q_stokes.values) * step
    total_in = (q_scatter.values.sum() + q_stokes.values.sum()) * step
    return FilteredBackground(offsets, scatter, stokes, float(total_in))


def lorentzian_line(deltas, center: float, fwhm: float, photons: float) -> np.ndarray:
    """Photon density of a Lorentzian line, renormalised to ``photons`` on the grid."""
    deltas = np.asarray(deltas, dtype=float)
    shape = 1.0 / (1.0 + (2.0 * (deltas - center) / fwhm) ** 2)
    step = check_uniform(deltas) if deltas.size > 1 else 1.0
    norm = shape.sum() * step
    return np.zeros_like(shape) if norm == 0 else photons * shape / norm


def background_spectrum(deltas, scatter_photons: float, stokes_photons: float,
                        scatter_linewidth: float, stokes_linewidth: float,
                        stokes_offset: float = STOKES_OFFSET):
    """Emission spectra of the two background fields on a photon-frequency grid.

    The scatter field sits at the probe frequency (0) and the Stokes field at
    ``+stokes_offset``.  Returns ``(scatter_curve, stokes_curve)`` densities.
    """
    deltas = np.asarray(deltas, dtype=float)
    scatter = lorentzian_line(deltas, 0.0, scatter_linewidth, scatter_photons)
    stokes = lorentzian_line(deltas, stokes_offset, stokes_linewidth, stokes_photons)
    return SpectralCurve.from_grid(deltas, scatter), SpectralCurve.from_grid(deltas, stokes)


def filter_fractions(cascade: Sequence[EtalonParams], scatter_linewidth: float, stokes_linewidth: float,
                     stokes_offset: float = STOKES_OFFSET, etalon_offset: float = 0.0,
                     resolution: float = 0.25e6, span: float = 400e6):
    """Fraction of each background line transmitted by the cascade.

    Each line is integrated on its own fine grid of half-width ``span``.
    """
    fractions = []
    for center, width in ((0.0, scatter_linewidth), (stokes_offset, stokes_linewidth)):
        n = int(round(span / resolution))
        grid = center + resolution * np.arange(-n, n + 1)
        density = lorentzian_line(grid, center, width, 1.0)
        trans = cascade_transmission(cascade, grid - etalon_offset)
        fractions.append(float(np.dot(trans, density) * resolution))
    return tuple(fractions)


# --------------------------------------------------------------------------
# medium transmission
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class AbsorptionLine:
    center: float
    optical_depth: float
    width: float = DEFAULT_WD


@dataclass(frozen=True)
class TransmissionModel:
    """``T(delta) = exp(-sum_k OD_k / (1 + (2 (delta - c_k)/w_k)^2))``."""

    lines: tuple = field(default_factory=lambda: (
        AbsorptionLine(0.0, 1.15), AbsorptionLine(-D1_EXCITED_SPLITTING, 3.0),
    ))

    def __call__(self, deltas):
        deltas = np.asarray(deltas, dtype=float)
        od = np.zeros_like(deltas)
        for line in self.lines:
            od += line.optical_depth / (1.0 + (2.0 * (deltas - line.center) / line.width) ** 2)
        return np.exp(-od)


@dataclass(frozen=True)
class MeasuredTransmission:
    deltas: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.deltas, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if d.ndim != 1 or d.shape != v.shape or d.size < 2:
            raise ValueError("transmission table needs matching 1-D columns with >= 2 rows")
        if np.any(np.diff(d) <= 0):
            raise ValueError("transmission table detunings must be strictly increasing")
        if np.any((v < 0) | (v > 1)) or not np.all(np.isfinite(v)):
            raise ValueError("transmission values must lie in [0, 1]")
        object.__setattr__(self, "deltas", d)
        object.__setattr__(self, "values", v)

    def __call__(self, deltas):
        deltas = np.asarray(deltas, dtype=float)
        if deltas.min() < self.deltas[0] or deltas.max() > self.deltas[-1]:
            raise CoverageError(
                f"requested range [{deltas.min():.4g}, {deltas.max():.4g}] Hz exceeds table "
                f"[{self.deltas[0]:.4g}, {self.deltas[-1]:.4g}] Hz"
            )
        return np.interp(deltas, self.deltas, self.values)


def load_transmission_table(path) -> MeasuredTransmission:
    """Read a two-column text table (detuning in Hz, transmission), ``#`` comments."""
    data = np.loadtxt(Path(path), comments="#", ndmin=2)
    if data.shape[1] != 2:
        raise ValueError(f"{path}: expected 2 columns, found {data.shape[1]}")
    return MeasuredTransmission(data[:, 0], data[:, 1])


def medium_transmission(deltas, model=None) -> SpectralCurve:
    """Cell transmission ``T_RT`` on a detuning grid from a model or a measured table."""
    if model is None:
        model = TransmissionModel()
    deltas = np.asarray(deltas, dtype=float)
    return SpectralCurve.from_grid(deltas, np.clip(model(deltas), 0.0, 1.0))


# --------------------------------------------------------------------------
# curve measurements
# --------------------------------------------------------------------------

def fwhm(curve: SpectralCurve, allow_truncated: bool = False) -> float:
    """Width of the contiguous region around the maximum at or above half maximum.

    Crossings are linearly interpolated.  If the curve does not fall to half
    maximum before a grid edge, :class:`CoverageError` is raised unless
    ``allow_truncated`` is set, in which case the edge is used (a lower bound).
    """
    y = curve.values
    x = curve.deltas
    k = int(np.argmax(y))
    half = 0.5 * y[k]
    if y[k] <= 0:
        raise ValueError("curve maximum must be positive")
    left = k
    while left > 0 and y[left - 1] >= half:
        left -= 1
    right = k
    while right < y.size - 1 and y[right + 1] >= half:
        right += 1
    truncated = left == 0 or right == y.size - 1
    if truncated and not allow_truncated:
        raise CoverageError("curve does not fall to half maximum inside the grid")
    if left == 0:
        x_left = x[0]
    else:
        x_left = np.interp(half, [y[left - 1], y[left]], [x[left - 1], x[left]])
    if right == y.size - 1:
        x_right = x[-1]
    else:
        x_right = np.interp(half, [y[right + 1], y[right]], [x[right + 1], x[right]])
    return float(x_right - x_left)


def room_temperature_values(cold: SpectralCurve, points, dist: VelocityDistribution | None = None,
                            splitting: float = D1_EXCITED_SPLITTING, weight2: float = 1.0,
                            fine_step: float | None = None) -> np.ndarray:
    """Warm-vapour response from a cold-atom detuning curve, at arbitrary points.

    The cold curve (possibly on a coarse grid) is linearly interpolated onto
    a grid with spacing ``fine_step`` (default: the cold spacing), the two
    excited lines are composed, the result is velocity broadened and finally
    sampled at ``points``.  The cold grid must extend ``3 W_d`` beyond the
    requested points on both sides.
    """
    dist = dist or VelocityDistribution()
    out = np.atleast_1d(np.asarray(points, dtype=float))
    step = fine_step or cold.delta_step
    lo, hi = cold.deltas[0], cold.deltas[-1]
    reach = 3.0 * dist.w_d
    if lo > out.min() - reach * (1 - 1e-9) or hi < out.max() + reach * (1 - 1e-9):
        raise CoverageError(
            f"cold curve [{lo:.4g}, {hi:.4g}] Hz must cover the output range widened by 3 W_d = {reach:.4g} Hz"
        )
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    fine = lo + step * np.arange(n)
    fine_curve = SpectralCurve(np.interp(fine, cold.deltas, cold.values), lo, step)
    composed = manifold_compose(fine_curve, fine_curve, splitting, weight2)
    broad = broaden(composed, dist)
    return np.interp(out, fine, broad.values)


def room_temperature_response(cold: SpectralCurve, out_deltas, dist: VelocityDistribution | None = None,
                              splitting: float = D1_EXCITED_SPLITTING, weight2: float = 1.0,
                              fine_step: float | None = None) -> SpectralCurve:
    """:func:`room_temperature_values` on a uniform output grid.

    ``fine_step`` defaults to the output spacing.
    """
    out = np.asarray(out_deltas, dtype=float)
    step = fine_step or check_uniform(out)
    values = room_temperature_values(cold, out, dist, splitting, weight2, step)
    return SpectralCurve.from_grid(out, values)
