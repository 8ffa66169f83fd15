"""Four-level atom: Hamiltonian, Lindblad master equation and time integration.

Levels are indexed 0..3 in arrays and correspond to |1>, |2>, |3>, |4>:
two ground states, the excited state and the off-resonant virtual state.
All rates and detunings are angular frequencies (rad/s); use
:meth:`AtomFieldParams.from_hz` to build parameters from ordinary frequencies.

The dissipator is implemented exactly as written in the model,

    Gamma (2 L rho L^+ - L^+ L rho - rho L^+ L),

so a level with outgoing coefficients Gamma_a, Gamma_b loses population at
2 (Gamma_a + Gamma_b).  The factor 2 is not absorbed into the stored rates.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, fields, replace
from typing import Callable, Union

import numpy as np
from scipy.linalg import expm

from .errors import DegenerateDenominatorError, InvariantViolation, StabilityError

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
N_LEVELS = 4

FieldLike = Union[complex, float, Callable[[float], complex]]

# Frequency-valued fields of AtomFieldParams (converted by from_hz / to_hz).
_FREQUENCY_FIELDS = (
    "delta13", "delta23", "delta", "omega_p", "omega_c", "alpha", "omega43",
    "gamma31", "gamma32", "gamma41", "gamma42", "gamma12",
)


def sigma(i: int, j: int) -> np.ndarray:
    """Return the operator |i><j| for 1-based level labels."""
    op = np.zeros((N_LEVELS, N_LEVELS), dtype=complex)
    op[i - 1, j - 1] = 1.0
    return op


@dataclass(frozen=True)
class AtomFieldParams:
    """Couplings, detunings and decay rates of the four-level model (rad/s).

    ``omega_p`` and ``omega_c`` multiply the normalised field amplitudes, so
    the instantaneous Rabi couplings are ``omega_p * e_p`` and
    ``omega_c * e_c``.  ``alpha`` enters only through the folded virtual-state
    coupling ``alpha / (omega43 + delta) * omega_c * e_c``.

    ``symmetric_ground_decay`` adds a |2> -> |1> companion to the printed
    |1> -> |2> ground-state term, with the same coefficient ``gamma12``.
    """

    delta13: float = 0.0
    delta23: float = 0.0
    delta: float = 0.0
    omega_p: float = TWO_PI * 1.0e3
    omega_c: float = TWO_PI * 1.0e6
    alpha: float = 0.0
    omega43: float = TWO_PI * 6.834682e9
    gamma31: float = TWO_PI * 3.0e6
    gamma32: float = TWO_PI * 3.0e6
    gamma41: float = TWO_PI * 1.0e9
    gamma42: float = TWO_PI * 1.0e9
    gamma12: float = TWO_PI * 100.0
    symmetric_ground_decay: bool = False

    def __post_init__(self):
        for name in ("gamma31", "gamma32", "gamma41", "gamma42", "gamma12"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be a finite rate >= 0, got {value!r}")
        if not self.omega43 > 0:
            raise ValueError(f"omega43 must be > 0, got {self.omega43!r}")
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name in _FREQUENCY_FIELDS and not np.isfinite(value):
                raise ValueError(f"{f.name} must be finite, got {value!r}")

    @classmethod
    def from_hz(cls, symmetric_ground_decay: bool = False, **values_hz) -> "AtomFieldParams":
        """Build from ordinary frequencies in Hz (each multiplied by 2*pi)."""
        unknown = set(values_hz) - set(_FREQUENCY_FIELDS)
        if unknown:
            raise TypeError(f"unknown parameter(s): {sorted(unknown)}")
        converted = {k: TWO_PI * float(v) for k, v in values_hz.items()}
        return cls(symmetric_ground_decay=symmetric_ground_decay, **converted)

    def to_hz(self) -> dict:
        out = {name: getattr(self, name) / TWO_PI for name in _FREQUENCY_FIELDS}
        out["symmetric_ground_decay"] = self.symmetric_ground_decay
        return out

    def detuned(self, delta: float) -> "AtomFieldParams":
        """Parameters for one-photon detuning ``delta`` (rad/s) at two-photon resonance.

        Both lasers move together (they are phase locked), so the probe and
        control share the one-photon offset: ``delta = delta23 = delta``,
        ``delta13 = 0``.  This places |1> and |2> at ``+delta`` relative to |3>.
        """
        return replace(self, delta13=0.0, delta23=float(delta), delta=float(delta))

    @property
    def virtual_coupling(self) -> float:
        """Folded coefficient alpha / (omega43 + delta)."""
        return self.alpha / (self.omega43 + self.delta)

    def max_decay_rate(self) -> float:
        rates = [
            2.0 * (self.gamma31 + self.gamma32),
            2.0 * (self.gamma41 + self.gamma42),
            2.0 * self.gamma12 * (2.0 if self.symmetric_ground_decay else 1.0),
        ]
        return max(rates)


def rubidium_params(**overrides) -> AtomFieldParams:
    """Decay rates of the warm rubidium memory; other fields keep their defaults."""
    base = AtomFieldParams.from_hz(gamma31=3e6, gamma32=3e6, gamma41=1e9, gamma42=1e9, gamma12=100.0)
    return replace(base, **overrides)


def hamiltonian_parts(params: AtomFieldParams, denominator_eps: float = 1.0):
    """Split H into a static part and the per-unit-field probe/control parts.

    ``H = H0 + (e_p * Hp + h.c.) + (e_c * Hc + h.c.)``.  ``Hp`` and ``Hc``
    hold only the lower-triangular coupling entries.
    """
    denom = params.omega43 + params.delta
    if abs(denom) < denominator_eps:
        raise DegenerateDenominatorError(
            f"|omega43 + delta| = {abs(denom):.3e} rad/s is below {denominator_eps:.3e}"
        )
    h0 = np.zeros((N_LEVELS, N_LEVELS), dtype=complex)
    h0[0, 0] = -params.delta13 + params.delta
    h0[1, 1] = -(params.delta13 - params.delta23)
    h0[3, 3] = -(params.delta13 - params.omega43)

    hp = np.zeros_like(h0)
    hp[2, 0] = -params.omega_p

    virtual = params.alpha / denom
    hc = np.zeros_like(h0)
    hc[2, 1] = -params.omega_c
    hc[3, 0] = -virtual * params.omega_c
    hc[3, 1] = -virtual * params.omega_c
    return h0, hp, hc


def build_hamiltonian(params: AtomFieldParams, e_p: complex = 0.0, e_c: complex = 0.0,
                      denominator_eps: float = 1.0) -> np.ndarray:
    """Rotating-frame Hamiltonian (rad/s) for field amplitudes ``e_p``, ``e_c``.

    Diagonal terms appear once; the hermitian conjugate is added only for the
    coupling terms.  Raises :class:`DegenerateDenominatorError` when
    ``|omega43 + delta| < denominator_eps``.
    """
    h0, hp, hc = hamiltonian_parts(params, denominator_eps)
    coupling = e_p * hp + e_c * hc
    return h0 + coupling + coupling.conj().T


def jump_operators(params: AtomFieldParams):
    """List of ``(rate, (m, n))`` for jump operators |m><n| (0-based)."""
    ops = [
        (params.gamma31, (0, 2)),
        (params.gamma32, (1, 2)),
        (params.gamma41, (0, 3)),
        (params.gamma42, (1, 3)),
        (params.gamma12, (1, 0)),
    ]
    if params.symmetric_ground_decay:
        ops.append((params.gamma12, (0, 1)))
    return [(rate, mn) for rate, mn in ops if rate != 0.0]


def dissipator(rho: np.ndarray, params: AtomFieldParams) -> np.ndarray:
    out = np.zeros_like(rho, dtype=complex)
    for rate, (m, n) in jump_operators(params):
        # L = |m><n|:  2 L rho L^+ = 2 rho_nn |m><m|,  L^+ L = |n><n|
        out[m, m] += 2.0 * rate * rho[n, n]
        out[n, :] -= rate * rho[n, :]
        out[:, n] -= rate * rho[:, n]
    return out


def lindblad_rhs(rho: np.ndarray, h: np.ndarray, params: AtomFieldParams) -> np.ndarray:
    """Time derivative of ``rho`` under Hamiltonian ``h`` and the model dissipator."""
    return -1j * (h @ rho - rho @ h) + dissipator(rho, params)


def liouvillian(params: AtomFieldParams, e_p: complex = 0.0, e_c: complex = 0.0,
                h: np.ndarray | None = None) -> np.ndarray:
    """16x16 superoperator acting on row-major ``rho.reshape(16)``."""
    if h is None:
        h = build_hamiltonian(params, e_p, e_c)
    eye = np.eye(N_LEVELS)
    sup = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for rate, (m, n) in jump_operators(params):
        jump = np.zeros((N_LEVELS, N_LEVELS))
        jump[m, n] = 1.0
        proj = jump.T @ jump
        sup += rate * (2.0 * np.kron(jump, jump) - np.kron(proj, eye) - np.kron(eye, proj))
    return sup


def exponential_step(sup: np.ndarray, dt: float):
    """Exact one-step maps for ``x' = sup x + f(t)`` with ``f`` linear over the step.

    Returns ``(phi, w0, w1)`` such that
    ``x(dt) = phi @ x(0) + w0 @ f(0) + w1 @ f(dt)``.
    """
    n = sup.shape[0]
    aug = np.zeros((3 * n, 3 * n), dtype=complex)
    aug[:n, :n] = sup * dt
    aug[:n, n:2 * n] = np.eye(n)
    aug[n:2 * n, 2 * n:] = np.eye(n)
    big = expm(aug)
    # top block row of expm(aug) is [e^Z, phi_1(Z), phi_2(Z)] with Z = sup*dt
    phi = big[:n, :n]
    phi1 = big[:n, n:2 * n]
    phi2 = big[:n, 2 * n:]
    w1 = dt * phi2
    w0 = dt * phi1 - w1
    return phi, w0, w1


def check_density_matrix(rho: np.ndarray, trace_ref: float = 1.0, trace_tol: float = 1e-9,
                         herm_tol: float = 1e-12, eig_tol: float = 1e-8) -> None:
    """Raise :class:`InvariantViolation` if ``rho`` is not a valid state."""
    rho = np.asarray(rho)
    if rho.shape != (N_LEVELS, N_LEVELS):
        raise InvariantViolation(f"density matrix must be 4x4, got shape {rho.shape}")
    herm = np.max(np.abs(rho - rho.conj().T))
    if herm > herm_tol:
        raise InvariantViolation(f"hermiticity error {herm:.3e} exceeds {herm_tol:.1e}")
    tr = np.trace(rho).real
    if abs(tr - trace_ref) > trace_tol:
        raise InvariantViolation(f"trace {tr!r} deviates from {trace_ref!r} by more than {trace_tol:.1e}")
    low = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min()
    if low < -eig_tol:
        raise InvariantViolation(f"minimum eigenvalue {low:.3e} below -{eig_tol:.1e}")


def ground_state(level: int = 1) -> np.ndarray:
    rho = np.zeros((N_LEVELS, N_LEVELS), dtype=complex)
    rho[level - 1, level - 1] = 1.0
    return rho


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (n_samples, 4, 4)

    def population(self, level: int) -> np.ndarray:
        return self.states[:, level - 1, level - 1].real

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def _as_field(f: FieldLike) -> Callable[[float], complex]:
    if callable(f):
        return f
    value = complex(f)
    return lambda t: value


def superoperator_parts(params: AtomFieldParams):
    """Liouvillian pieces: ``L = L0 + e_p Lp + conj(e_p) Lpd + e_c Lc + conj(e_c) Lcd``."""
    h0, hp, hc = hamiltonian_parts(params)
    eye = np.eye(N_LEVELS)

    def comm(h):
        return -1j * (np.kron(h, eye) - np.kron(eye, h.T))

    l0 = liouvillian(params, h=h0)
    return l0, comm(hp), comm(hp.conj().T), comm(hc), comm(hc.conj().T)


def rk4_step_matrix(sup: np.ndarray, dt: float) -> np.ndarray:
    """One classical RK4 step for a constant linear generator, as a matrix."""
    z = sup * dt
    eye = np.eye(sup.shape[0])
    return eye + z @ (eye + z @ (eye / 2.0 + z @ (eye / 6.0 + z / 24.0)))


def evolve(rho0: np.ndarray, params: AtomFieldParams, e_p: FieldLike, e_c: FieldLike,
           dt: float, t_end: float, t0: float = 0.0, sample_every: int = 1,
           check_invariants: bool = True, herm_tol: float = 1e-10,
           trace_tol: float = 1e-9, eig_tol: float = 1e-8) -> Trajectory:
    """Integrate the master equation with fixed-step classical RK4.

    ``e_p`` and ``e_c`` are constants or callables ``t -> amplitude``.  The
    stability guard requires ``dt * max_rate < 0.1`` at every step, where
    ``max_rate`` bounds both the decay rates and the Hamiltonian norm.
    Trace and hermiticity are checked every step, positivity at every stored
    sample; any violation raises :class:`InvariantViolation`.

    The integration runs on the row-major vectorised state; for constant
    fields the RK4 update is applied as a precomputed step matrix, which is
    the same arithmetic map.
    """
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt!r}")
    if sample_every < 1:
        raise ValueError("sample_every must be >= 1")
    rho = np.array(rho0, dtype=complex)
    if check_invariants:
        check_density_matrix(rho, trace_ref=np.trace(rho).real, herm_tol=1e-12, eig_tol=eig_tol)
    trace0 = np.trace(rho).real
    n_steps = max(int(np.ceil((t_end - t0) / dt - 1e-9)), 0)

    h0, hp, hc = hamiltonian_parts(params)
    hpd, hcd = hp.conj().T, hc.conj().T
    l0, lp, lpd, lc, lcd = superoperator_parts(params)
    decay_rate = params.max_decay_rate()
    constant = not callable(e_p) and not callable(e_c)
    f_p = _as_field(e_p)
    f_c = _as_field(e_c)

    norm0 = np.abs(h0).sum(axis=1).max()
    norm_p = np.abs(hp).sum(axis=1).max() + np.abs(hpd).sum(axis=1).max()
    norm_c = np.abs(hc).sum(axis=1).max() + np.abs(hcd).sum(axis=1).max()

    stacked = np.stack([l0, lp, lpd, lc, lcd]).reshape(5, -1)
    dim = l0.shape[0]

    def generator(ep, ec):
        coef = np.array([1.0, ep, np.conj(ep), ec, np.conj(ec)], dtype=complex)
        return (coef @ stacked).reshape(dim, dim)

    def guard(t, ep, ec):
        # triangle-inequality bound on the infinity norm of H
        rate = max(decay_rate, norm0 + abs(ep) * norm_p + abs(ec) * norm_c)
        if dt * rate >= 0.1:
            raise StabilityError(
                f"dt*max_rate = {dt * rate:.3g} >= 0.1 at t={t:.6e} s (max_rate={rate:.3e} rad/s); reduce dt"
            )

    if constant:
        ep0, ec0 = f_p(t0), f_c(t0)
        guard(t0, ep0, ec0)
        step_matrix = rk4_step_matrix(generator(ep0, ec0), dt)
    else:
        ep_a, ec_a = f_p(t0), f_c(t0)
        l_a = generator(ep_a, ec_a)

    x = rho.reshape(-1)
    diag_idx = np.arange(N_LEVELS) * (N_LEVELS + 1)
    times = [t0]
    states = [rho.copy()]
    t = t0
    for step in range(1, n_steps + 1):
        if constant:
            x = step_matrix @ x
        else:
            guard(t, ep_a, ec_a)
            l_b = generator(f_p(t + 0.5 * dt), f_c(t + 0.5 * dt))
            ep_a, ec_a = f_p(t + dt), f_c(t + dt)
            l_c = generator(ep_a, ec_a)
            k1 = l_a @ x
            k2 = l_b @ (x + 0.5 * dt * k1)
            k3 = l_b @ (x + 0.5 * dt * k2)
            k4 = l_c @ (x + dt * k3)
            x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            l_a = l_c
        t = t0 + step * dt

        if check_invariants:
            r = x.reshape(N_LEVELS, N_LEVELS)
            herm = np.abs(r - r.conj().T).max()
            tr_err = abs(x[diag_idx].sum().real - trace0)
            if herm > herm_tol or tr_err > trace_tol:
                raise InvariantViolation(
                    f"step {step} (t={t:.6e} s): hermiticity error {herm:.3e}, trace drift {tr_err:.3e}"
                )
        if step % sample_every == 0 or step == n_steps:
            r = x.reshape(N_LEVELS, N_LEVELS).copy()
            if check_invariants:
                low = np.linalg.eigvalsh(0.5 * (r + r.conj().T)).min()
                if low < -eig_tol:
                    raise InvariantViolation(f"step {step} (t={t:.6e} s): minimum eigenvalue {low:.3e}")
            times.append(t)
            states.append(r)
    return Trajectory(np.asarray(times), np.asarray(states))
