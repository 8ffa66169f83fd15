"""Signal-to-background ratio, polarisation-qubit fidelity and lifetime fits."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateSpanError, PhysicsError, StokesNormError, UnsupportedParametersError
from .spectral import SpectralCurve, require_same_grid

NORM_TOL = 1e-9
INTERCEPT_RESEND = 0.71
NONUNITARY_BOUND = 0.836
# margins are rounded to remove binary representation noise (0.866 - 0.71 etc.)
_MARGIN_DIGITS = 12


@dataclass(frozen=True)
class StokesVector:
    s1: float
    s2: float
    s3: float

    def __post_init__(self):
        for name in ("s1", "s2", "s3"):
            if not math.isfinite(getattr(self, name)):
                raise StokesNormError(f"{name} must be finite")
        if self.norm_sq > 1.0 + NORM_TOL:
            raise StokesNormError(f"Stokes vector norm {math.sqrt(self.norm_sq):.12g} exceeds 1")

    @classmethod
    def from_array(cls, v) -> "StokesVector":
        v = np.asarray(v, dtype=float).reshape(3)
        return cls(float(v[0]), float(v[1]), float(v[2]))

    @property
    def norm_sq(self) -> float:
        return self.s1 * self.s1 + self.s2 * self.s2 + self.s3 * self.s3

    @property
    def norm(self) -> float:
        return math.sqrt(self.norm_sq)

    def as_array(self) -> np.ndarray:
        return np.array([self.s1, self.s2, self.s3])

    def scaled(self, factor: float) -> "StokesVector":
        return StokesVector(factor * self.s1, factor * self.s2, factor * self.s3)


# the six cardinal polarisation states
BASIS_STATES = {
    "H": StokesVector(1.0, 0.0, 0.0),
    "V": StokesVector(-1.0, 0.0, 0.0),
    "D": StokesVector(0.0, 1.0, 0.0),
    "A": StokesVector(0.0, -1.0, 0.0),
    "R": StokesVector(0.0, 0.0, 1.0),
    "L": StokesVector(0.0, 0.0, -1.0),
}


def fidelity(s_in: StokesVector, s_out: StokesVector) -> float:
    """``F = (1 + a.b + sqrt((1 - |a|^2)(1 - |b|^2))) / 2`` for Stokes vectors a, b."""
    dot = s_in.s1 * s_out.s1 + s_in.s2 * s_out.s2 + s_in.s3 * s_out.s3
    mixed = max(0.0, 1.0 - s_in.norm_sq) * max(0.0, 1.0 - s_out.norm_sq)
    f = 0.5 * (1.0 + dot + math.sqrt(mixed))
    return min(max(f, 0.0), 1.0)


@dataclass(frozen=True)
class ClassicalThresholds:
    intercept_resend: float = INTERCEPT_RESEND
    nonunitary: float = NONUNITARY_BOUND


# (mean photon number, efficiency) -> thresholds; only one operating point is tabulated
_THRESHOLD_TABLE = {(1.0, 0.05): ClassicalThresholds()}


def classical_thresholds(mean_photons: float = 1.0, efficiency: float = 0.05) -> ClassicalThresholds:
    """Fidelities a classical device can reach at the tabulated operating point.

    Only ``<n> = 1`` and ``eta = 0.05`` are tabulated; the general bound
    depends on the photon statistics and needs the full classical-strategy
    analysis, so other inputs are rejected.
    """
    for (n, eta), th in _THRESHOLD_TABLE.items():
        if math.isclose(mean_photons, n, rel_tol=0, abs_tol=1e-9) and math.isclose(efficiency, eta, rel_tol=0, abs_tol=1e-9):
            return th
    raise UnsupportedParametersError(
        f"classical thresholds are tabulated only for <n> = 1, eta = 0.05 (got <n> = {mean_photons}, "
        f"eta = {efficiency}); the general bound requires the optimal classical-strategy analysis "
        "for attenuated coherent states"
    )


@dataclass(frozen=True)
class FidelityReport:
    fidelity: float
    qber: float
    vs_intercept_resend: float
    vs_nonunitary_bound: float

    def __post_init__(self):
        if not 0.0 <= self.fidelity <= 1.0:
            raise ValueError(f"fidelity must lie in [0, 1], got {self.fidelity!r}")

    @property
    def beats_classical(self) -> bool:
        return self.vs_intercept_resend > 0 and self.vs_nonunitary_bound > 0


def fidelity_report(f: float, thresholds: ClassicalThresholds | None = None) -> FidelityReport:
    th = thresholds or classical_thresholds()
    return FidelityReport(
        fidelity=f,
        qber=1.0 - f,
        vs_intercept_resend=round(f - th.intercept_resend, _MARGIN_DIGITS),
        vs_nonunitary_bound=round(f - th.nonunitary, _MARGIN_DIGITS),
    )


def sbr_to_fidelity(sbr, intrinsic_fidelity: float = 1.0):
    """Fidelity of a qubit mixed with unpolarised background: ``(sbr F0 + 1/2) / (sbr + 1)``."""
    if not 0.5 <= intrinsic_fidelity <= 1.0:
        raise ValueError(f"intrinsic fidelity must lie in [0.5, 1], got {intrinsic_fidelity!r}")
    s = np.asarray(sbr, dtype=float)
    if np.any(s < 0) or not np.all(np.isfinite(s)):
        raise ValueError("sbr must be finite and >= 0")
    f = (s * intrinsic_fidelity + 0.5) / (s + 1.0)
    return f if f.ndim else float(f)


def depolarize(state: StokesVector, sbr: float, intrinsic_fidelity: float = 1.0) -> StokesVector:
    """Output Stokes vector of a stored pure state with unpolarised background.

    The signal keeps a fraction ``2 F0 - 1`` of its polarisation and the
    background dilutes it by ``sbr / (sbr + 1)``, so that
    ``fidelity(state, output) == sbr_to_fidelity(sbr, F0)`` for pure inputs.
    """
    shrink = (2.0 * intrinsic_fidelity - 1.0) * sbr / (sbr + 1.0)
    return state.scaled(shrink)


@dataclass(frozen=True)
class Alignment:
    rotation: np.ndarray
    aligned_outputs: tuple
    fidelities: np.ndarray

    @property
    def mean_fidelity(self) -> float:
        return float(np.mean(self.fidelities))


def align_frames(inputs: Sequence[StokesVector], outputs: Sequence[StokesVector]) -> Alignment:
    """Proper rotation taking the measured outputs back onto the input frame.

    Maximises ``sum_i a_i . (R b_i)``, which is the only rotation-dependent
    part of the mean fidelity, via the SVD orientation fit.
    """
    if len(inputs) != len(outputs):
        raise ValueError("inputs and outputs must pair up")
    if len(inputs) < 3:
        raise DegenerateSpanError("at least three input/output pairs are needed")
    a = np.array([s.as_array() for s in inputs])
    b = np.array([s.as_array() for s in outputs])
    sv = np.linalg.svd(a, compute_uv=False)
    if sv.size < 2 or sv[1] <= 1e-9 * max(sv[0], 1e-300):
        raise DegenerateSpanError("input Stokes vectors are collinear; the rotation is not determined")
    h = b.T @ a
    u, _, vt = np.linalg.svd(h)
    d = 1.0 if np.linalg.det(u @ vt) > 0 else -1.0
    rot = u @ np.diag([1.0, 1.0, d]) @ vt
    rot = rot.T
    aligned = []
    for vec in b:
        v = rot @ vec
        n = np.linalg.norm(v)
        if n > 1.0:
            v = v / n
        aligned.append(StokesVector.from_array(v))
    fids = np.array([fidelity(x, y) for x, y in zip(inputs, aligned)])
    return Alignment(rot, tuple(aligned), fids)


def rotation_matrix(axis, angle: float) -> np.ndarray:
    """Right-handed rotation by ``angle`` (rad) about ``axis``."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    k = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    return np.eye(3) + math.sin(angle) * k + (1 - math.cos(angle)) * (k @ k)


def rotation_angle(rot: np.ndarray) -> float:
    """Angle (rad) of a proper rotation matrix."""
    c = 0.5 * (np.trace(rot) - 1.0)
    return math.acos(min(1.0, max(-1.0, c)))


# --------------------------------------------------------------------------
# SBR
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SbrReport:
    sbr_curve: SpectralCurve
    optimal_delta: float
    sbr_at_optimum: float
    floor: float = 0.0


def argmax_smallest_detuning(curve: SpectralCurve) -> int:
    """Index of the maximum; ties go to the smallest ``|delta|``, then the smaller delta."""
    v = curve.values
    idx = np.flatnonzero(v == v.max())
    d = curve.deltas[idx]
    order = np.lexsort((d, np.abs(d)))
    return int(idx[order[0]])


def sbr_curve(eta_rt: SpectralCurve, t_rt: SpectralCurve, q_rt: SpectralCurve, floor: float = 0.0) -> SbrReport:
    """Pointwise ``eta T / (Q + floor)`` and its optimum."""
    require_same_grid(eta_rt, t_rt, q_rt)
    denom = q_rt.values + floor
    if np.any(denom <= 0):
        bad = q_rt.deltas[np.argmax(denom <= 0)]
        raise PhysicsError(f"background plus floor is not positive at detuning {bad:.6g} Hz")
    values = eta_rt.values * t_rt.values / denom
    if np.any(values < 0):
        raise PhysicsError("negative signal in SBR computation")
    curve = eta_rt.with_values(values)
    k = argmax_smallest_detuning(curve)
    return SbrReport(curve, float(curve.deltas[k]), float(values[k]), floor)


def technical_floor(q_rt: SpectralCurve, fraction: float = 0.1, at: float = 0.0) -> float:
    """Constant background floor: ``fraction`` of the modelled background nearest ``at``."""
    k = int(np.argmin(np.abs(q_rt.deltas - at)))
    return fraction * float(q_rt.values[k])


# --------------------------------------------------------------------------
# storage lifetime
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class LifetimeFit:
    eta0: float
    tau_c: float
    residuals: np.ndarray

    @property
    def rms_residual(self) -> float:
        return float(np.sqrt(np.mean(self.residuals ** 2)))

    def __call__(self, t):
        return self.eta0 * np.exp(-np.asarray(t, dtype=float) / self.tau_c)


def lifetime_fit(points) -> LifetimeFit:
    """Least-squares fit of ``log eta = log eta0 - t / tau_c``.

    ``points`` is a sequence of ``(storage_time_s, efficiency)``.  Residuals
    are reported in log space.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
        raise ValueError("need at least two (time, efficiency) points")
    t, eta = pts[:, 0], pts[:, 1]
    if np.any(eta <= 0):
        raise ValueError("efficiencies must be positive for a log-space fit")
    if np.ptp(t) == 0:
        raise ValueError("storage times must not all coincide")
    design = np.column_stack([np.ones_like(t), t])
    y = np.log(eta)
    (c0, c1), *_ = np.linalg.lstsq(design, y, rcond=None)
    if c1 >= 0:
        raise PhysicsError("efficiency does not decay with storage time; no finite lifetime")
    residuals = y - (c0 + c1 * t)
    return LifetimeFit(float(math.exp(c0)), float(-1.0 / c1), residuals)
