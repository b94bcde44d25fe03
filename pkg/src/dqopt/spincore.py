"""Two-spin-1/2 density-matrix machinery under magic-angle spinning.

Everything lives in the Zeeman product basis {|aa>, |ab>, |ba>, |bb>}
(first spin first, a = m_z +1/2).  Density matrices and propagators are
plain 4x4 complex ndarrays; operator constants below are module-level
arrays in the same basis.

Interaction frame chain::

    tensor PAS --(interaction Euler angles)--> molecular frame
               --(crystallite alpha,beta,gamma)--> rotor frame
               --(spinning + magic-angle tilt)--> lab frame

Tensors are Cartesian 3x3 and rotate as A' = R A R^T with
R(a, b, g) = Rz(a) @ Ry(b) @ Rz(g).  The crystallite rotation is applied
as R(gamma, beta, alpha), i.e. gamma outermost, so that the spinning
phase w_rot*t adds to the crystallite gamma; this is the angle the
sevenfold sequences are insensitive to, which is why powder schemes here
use a dense (alpha, beta) set crossed with a small gamma grid.

Sign conventions (fixed once, self-consistent): positive offset means
positive rotation about +z, the homonuclear dipolar term multiplies
2*I1z*I2z - I1x*I2x - I1y*I2y, and a propagator over a step is
U = exp(-i H dt).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .sequence import PulseEvent, PulseSequence

TWO_PI = 2.0 * math.pi
MAGIC_ANGLE = math.acos(1.0 / math.sqrt(3.0))

# single-spin operators in the product basis (spin 1 = left factor)
_E2 = np.eye(2)
_SX = 0.5 * np.array([[0, 1], [1, 0]], dtype=complex)
_SY = 0.5 * np.array([[0, -1j], [1j, 0]], dtype=complex)
_SZ = 0.5 * np.array([[1, 0], [0, -1]], dtype=complex)

I1X = np.kron(_SX, _E2)
I1Y = np.kron(_SY, _E2)
I1Z = np.kron(_SZ, _E2)
I2X = np.kron(_E2, _SX)
I2Y = np.kron(_E2, _SY)
I2Z = np.kron(_E2, _SZ)

FX = I1X + I2X
FY = I1Y + I2Y
FZ = I1Z + I2Z

#: secular homonuclear dipolar spin operator
DIPOLAR_OP = 2.0 * I1Z @ I2Z - I1X @ I2X - I1Y @ I2Y

#: total Zeeman quantum number of each basis state
ZEEMAN_NUMBERS = np.array([1, 0, 0, -1])

COHERENCE_ORDERS = ZEEMAN_NUMBERS[:, None] - ZEEMAN_NUMBERS[None, :]


@dataclass(frozen=True)
class SpinSystem:
    """Parameters of the two-spin system.

    All frequencies in Hz.  ``csa_aniso_*`` is the anisotropy of the
    shielding tensor (principal value furthest from the isotropic one,
    minus the isotropic one) expressed directly in Hz; ``csa_eta_*`` the
    corresponding asymmetry.  Euler angle triples (radians) orient each
    tensor PAS in the molecular frame.  ``dipolar_b`` is b/2pi of the
    through-space coupling; the dipolar tensor is traceless and axially
    symmetric by construction.
    """

    larmor_freq: float = -176.1e6
    iso_shift_1: float = 0.0
    iso_shift_2: float = 0.0
    csa_aniso_1: float = 0.0
    csa_aniso_2: float = 0.0
    csa_eta_1: float = 0.0
    csa_eta_2: float = 0.0
    csa_euler_1: tuple[float, float, float] = (0.0, 0.0, 0.0)
    csa_euler_2: tuple[float, float, float] = (0.0, 0.0, 0.0)
    dipolar_b: float = 0.0
    dipolar_euler: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        for eta in (self.csa_eta_1, self.csa_eta_2):
            if not 0.0 <= eta <= 1.0:
                raise ValueError(f"CSA asymmetry must be in [0, 1], got {eta}")
        for name in ("csa_euler_1", "csa_euler_2", "dipolar_euler"):
            angles = getattr(self, name)
            if len(angles) != 3:
                raise ValueError(f"{name} must be a 3-tuple of angles")
            object.__setattr__(self, name, tuple(float(a) for a in angles))


@dataclass(frozen=True)
class Orientation:
    """Crystallite Euler angles (radians), molecular frame -> rotor frame."""

    alpha: float
    beta: float
    gamma: float

    def __post_init__(self):
        if not 0.0 <= self.alpha < TWO_PI or not 0.0 <= self.gamma < TWO_PI:
            raise ValueError("alpha and gamma must lie in [0, 2*pi)")
        if not 0.0 <= self.beta <= math.pi:
            raise ValueError("beta must lie in [0, pi]")


def rotation_zyz(alpha: float, beta: float, gamma: float) -> np.ndarray:
    """Rz(alpha) @ Ry(beta) @ Rz(gamma) as a 3x3 array."""
    ca, sa = math.cos(alpha), math.sin(alpha)
    cb, sb = math.cos(beta), math.sin(beta)
    cg, sg = math.cos(gamma), math.sin(gamma)
    return np.array([
        [ca * cb * cg - sa * sg, -ca * cb * sg - sa * cg, ca * sb],
        [sa * cb * cg + ca * sg, -sa * cb * sg + ca * cg, sa * sb],
        [-sb * cg, sb * sg, cb],
    ])


def csa_tensor_pas(aniso: float, eta: float) -> np.ndarray:
    """Traceless shielding tensor in its PAS (same units as ``aniso``)."""
    return aniso * np.diag([-(1.0 + eta) / 2.0, -(1.0 - eta) / 2.0, 1.0])


def _zz_fourier(tensor_rotor: np.ndarray) -> np.ndarray:
    """MAS Fourier components of the lab zz element of a rotor-frame tensor.

    Returns [c0, a1, b1, a2, b2] such that
    A_zz_lab(t) = c0 + a1 cos(w t) + b1 sin(w t) + a2 cos(2 w t) + b2 sin(2 w t)
    with w the rotor angular frequency.  c0 reduces to the isotropic part
    because the rank-2 contribution averages to zero at the magic angle.
    """
    a = tensor_rotor
    return np.array([
        (a[0, 0] + a[1, 1] + a[2, 2]) / 3.0,
        -(2.0 * math.sqrt(2.0) / 3.0) * a[0, 2],
        +(2.0 * math.sqrt(2.0) / 3.0) * a[1, 2],
        (a[0, 0] - a[1, 1]) / 3.0,
        -(2.0 / 3.0) * a[0, 1],
    ])


def interaction_coefficients(sys: SpinSystem, o: Orientation) -> np.ndarray:
    """Per-interaction MAS Fourier coefficients, shape (3, 5), in rad/s.

    Rows: shift of spin 1, shift of spin 2, dipolar coupling.  Columns as
    in :func:`_zz_fourier`.  These are geometry only; the spinning speed
    enters when evaluating the harmonics.
    """
    # gamma outermost so the spinning phase composes with it
    r_cryst = rotation_zyz(o.gamma, o.beta, o.alpha)
    out = np.empty((3, 5))
    for row, (iso, aniso, eta, euler) in enumerate([
        (sys.iso_shift_1, sys.csa_aniso_1, sys.csa_eta_1, sys.csa_euler_1),
        (sys.iso_shift_2, sys.csa_aniso_2, sys.csa_eta_2, sys.csa_euler_2),
    ]):
        r_mol = rotation_zyz(*euler)
        tensor = r_cryst @ r_mol @ csa_tensor_pas(aniso, eta) @ r_mol.T @ r_cryst.T
        out[row] = _zz_fourier(tensor)
        out[row, 0] += iso
    r_mol = rotation_zyz(*sys.dipolar_euler)
    dip_pas = sys.dipolar_b * np.diag([-0.5, -0.5, 1.0])
    tensor = r_cryst @ r_mol @ dip_pas @ r_mol.T @ r_cryst.T
    out[2] = _zz_fourier(tensor)
    return out * TWO_PI


def evaluate_coefficients(coeffs: np.ndarray, rotor_freq: float, t: float) -> np.ndarray:
    """Evaluate Fourier coefficient rows at absolute time t (rad/s)."""
    th = TWO_PI * rotor_freq * t
    harmonics = np.array([1.0, math.cos(th), math.sin(th),
                          math.cos(2.0 * th), math.sin(2.0 * th)])
    return coeffs @ harmonics


def interaction_frequencies(sys: SpinSystem, o: Orientation,
                            rotor_freq: float, t: float):
    """Instantaneous (w_cs1, w_cs2, w_d) in rad/s at absolute time t."""
    if rotor_freq <= 0.0:
        raise ValueError(f"rotor frequency must be > 0, got {rotor_freq}")
    w = evaluate_coefficients(interaction_coefficients(sys, o), rotor_freq, t)
    return float(w[0]), float(w[1]), float(w[2])


def hamiltonian(coeffs, rf_amp: float, rf_phase: float) -> np.ndarray:
    """Rotating-frame Hamiltonian (rad/s) for instantaneous coefficients.

    ``coeffs`` is the (w_cs1, w_cs2, w_d) triple in rad/s, ``rf_amp`` the
    nutation frequency in Hz and ``rf_phase`` the pulse phase in radians.
    Hermitian by construction (upper triangle mirrored).
    """
    if rf_amp < 0.0:
        raise ValueError(f"r.f. amplitude must be >= 0, got {rf_amp}")
    w1, w2, wd = (float(c) for c in coeffs)
    wrf = TWO_PI * rf_amp
    r = 0.5 * wrf * complex(math.cos(rf_phase), -math.sin(rf_phase))
    h = np.zeros((4, 4), dtype=complex)
    h[0, 0] = 0.5 * (w1 + w2 + wd)
    h[1, 1] = 0.5 * (w1 - w2 - wd)
    h[2, 2] = 0.5 * (-w1 + w2 - wd)
    h[3, 3] = 0.5 * (-w1 - w2 + wd)
    h[1, 2] = -0.5 * wd
    h[0, 1] = h[0, 2] = h[1, 3] = h[2, 3] = r
    upper = np.triu_indices(4, 1)
    h[(upper[1], upper[0])] = np.conj(h[upper])
    return h


def step_propagator(h: np.ndarray, dt: float) -> np.ndarray:
    """U = exp(-i H dt) via Hermitian eigendecomposition.

    Exactly unitary up to round-off.  Rejects visibly non-Hermitian
    input, which signals an upstream coefficient bug.
    """
    if dt <= 0.0:
        raise ValueError(f"time step must be > 0, got {dt}")
    defect = np.linalg.norm(h - h.conj().T)
    if defect > 1e-9 * max(1.0, np.linalg.norm(h)):
        raise ValueError(f"Hamiltonian is not Hermitian (defect {defect:.3e})")
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w * dt)) @ v.conj().T


def propagate_sequence(sys: SpinSystem, o: Orientation, rotor_freq: float,
                       events: PulseSequence, t_start: float = 0.0,
                       max_step: float | None = None) -> np.ndarray:
    """Time-ordered propagator of a pulse sequence from absolute t_start.

    Each event is subdivided so no step exceeds ``max_step`` (default one
    two-hundredth of the rotor period) and the Hamiltonian is sampled at
    each sub-step midpoint.  Absolute time drives the rotor phase, so
    rotor-asynchronous sequences accumulate phase drift correctly across
    consecutive blocks.

    This is the plain-numpy reference path; the batched engine used by
    the experiment module reproduces it to tight tolerance.
    """
    if rotor_freq <= 0.0:
        raise ValueError(f"rotor frequency must be > 0, got {rotor_freq}")
    event_list = list(events)
    if not event_list:
        raise ValueError("pulse sequence is empty")
    phase_offset = events.phase_offset if isinstance(events, PulseSequence) else 0.0
    if max_step is None:
        max_step = 1.0 / rotor_freq / 200.0
    if max_step <= 0.0:
        raise ValueError(f"max_step must be > 0, got {max_step}")
    coeffs = interaction_coefficients(sys, o)
    u = np.eye(4, dtype=complex)
    t = t_start
    for ev in event_list:
        if ev.duration <= 0.0:
            raise ValueError(f"event duration must be > 0, got {ev.duration}")
        n_sub = max(1, math.ceil(ev.duration / max_step))
        dt = ev.duration / n_sub
        phase = ev.phase + phase_offset
        for k in range(n_sub):
            w = evaluate_coefficients(coeffs, rotor_freq, t + (k + 0.5) * dt)
            u = step_propagator(hamiltonian(w, ev.amplitude, phase), dt) @ u
        t += ev.duration
    return u


def coherence_filter(rho: np.ndarray, orders) -> np.ndarray:
    """Keep density-matrix elements whose coherence order is in ``orders``.

    The order of element (r, c) is the difference of total Zeeman
    quantum numbers M(r) - M(c).
    """
    orders = set(int(p) for p in orders)
    if not orders <= {-2, -1, 0, 1, 2}:
        raise ValueError(f"coherence orders must be within -2..2, got {sorted(orders)}")
    mask = np.isin(COHERENCE_ORDERS, sorted(orders))
    return np.where(mask, rho, 0.0)


def expectation(rho: np.ndarray, op: np.ndarray) -> complex:
    """Tr(op^dagger rho)."""
    return complex(np.trace(op.conj().T @ rho))
