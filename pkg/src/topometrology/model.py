"""Two-band Chern insulator (massive lattice Dirac model) and its band geometry.

The Bloch Hamiltonian is H(k) = d(k) . sigma with

    d(k) = (sin k1, sin k2, M - cos k1 - cos k2).

Everything here refers to the upper band, whose Bloch vector is
n = d / |d|, unless a ``band=-1`` argument says otherwise. The basis of
the two-level system is (|0>, |-1>), with |0> the +1 eigenvector of sigma_z.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CriticalMass, GaplessPoint, NonQuantized, StepTooLarge

GAP_TOL = 1e-12
CRITICAL_MASSES = (-2.0, 0.0, 2.0)

PAULI = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)


def wrap_angle(x):
    """Map angles onto [-pi, pi)."""
    return (np.asarray(x, dtype=float) + np.pi) % (2 * np.pi) - np.pi


def wrap_difference(x):
    """Map angle differences onto (-pi, pi]."""
    return -wrap_angle(-np.asarray(x, dtype=float))


@dataclass(frozen=True)
class BlochPoint:
    """Quasi-momentum on the torus together with the mass parameter."""

    k1: float
    k2: float
    M: float

    def __post_init__(self):
        object.__setattr__(self, "k1", float(wrap_angle(self.k1)))
        object.__setattr__(self, "k2", float(wrap_angle(self.k2)))
        object.__setattr__(self, "M", float(self.M))

    @property
    def k(self) -> np.ndarray:
        return np.array([self.k1, self.k2])

    def shifted(self, dk1: float = 0.0, dk2: float = 0.0) -> BlochPoint:
        return BlochPoint(self.k1 + dk1, self.k2 + dk2, self.M)


@dataclass(frozen=True, eq=False)
class BlochVector:
    d: np.ndarray
    n: np.ndarray
    gap: float


@dataclass(frozen=True, eq=False)
class PureQubitState:
    """Normalized qubit amplitudes on (|0>, |-1>), gauge-fixed.

    Use :meth:`from_vector` to build one from arbitrary amplitudes; it
    normalizes and rotates the global phase so that the first nonzero
    amplitude is real and non-negative.
    """

    amplitudes: np.ndarray

    @classmethod
    def from_vector(cls, v) -> PureQubitState:
        v = np.asarray(v, dtype=complex).reshape(2)
        norm = np.linalg.norm(v)
        if norm == 0:
            raise ValueError("zero vector is not a state")
        v = v / norm
        for a in v:
            if abs(a) > 1e-15:
                v = v * (np.conj(a) / abs(a))
                break
        v = np.where(np.abs(v) <= 1e-15, 0.0, v)
        # zero the imaginary roundoff left on the gauge-fixed component
        lead = int(np.argmax(np.abs(v) > 0))
        v[lead] = abs(v[lead])
        return cls(v)

    @property
    def bloch_vector(self) -> np.ndarray:
        a, b = self.amplitudes
        c = np.conj(a) * b
        return np.array([2 * c.real, 2 * c.imag, abs(a) ** 2 - abs(b) ** 2])

    def density_matrix(self) -> np.ndarray:
        return np.outer(self.amplitudes, np.conj(self.amplitudes))


@dataclass(frozen=True, eq=False)
class GeometricTensor:
    """Quantum metric ``g`` (2x2, symmetric) and Berry curvature ``omega12``."""

    g: np.ndarray
    omega12: float
    method: str = field(default="analytic")

    @property
    def qfi(self) -> np.ndarray:
        return 4.0 * self.g


# ---------------------------------------------------------------------------
# Vectorized kernels. All take arrays k1, k2 of a common shape S and return
# arrays with trailing component axes.


def d_vector(k1, k2, M):
    k1 = np.asarray(k1, dtype=float)
    k2 = np.asarray(k2, dtype=float)
    return np.stack([np.sin(k1), np.sin(k2), M - np.cos(k1) - np.cos(k2)], axis=-1)


def d_derivatives(k1, k2):
    """First and second k-derivatives of d: shapes S+(2,3) and S+(2,2,3)."""
    k1 = np.asarray(k1, dtype=float)
    k2 = np.asarray(k2, dtype=float)
    z = np.zeros_like(k1 + k2)
    c1, s1 = np.cos(k1) + z, np.sin(k1) + z
    c2, s2 = np.cos(k2) + z, np.sin(k2) + z
    dd = np.stack(
        [np.stack([c1, z, s1], axis=-1), np.stack([z, c2, s2], axis=-1)], axis=-2
    )
    d11 = np.stack([-s1, z, c1], axis=-1)
    d22 = np.stack([z, -s2, c2], axis=-1)
    zz = np.zeros_like(d11)
    d2d = np.stack([np.stack([d11, zz], axis=-2), np.stack([zz, d22], axis=-2)], axis=-3)
    return dd, d2d


def unit_vector_jet(k1, k2, M, order: int = 1):
    """n(k) with its analytic derivatives.

    Returns ``(n, dn)`` for ``order=1`` and ``(n, dn, d2n)`` for
    ``order=2``, where ``dn[..., a, :] = d n / d k_a`` and
    ``d2n[..., a, b, :] = d^2 n / d k_a d k_b``. Raises GaplessPoint if
    |d| < 1e-12 anywhere.
    """
    d = d_vector(k1, k2, M)
    r = np.linalg.norm(d, axis=-1)
    if np.any(r < GAP_TOL):
        raise GaplessPoint(f"|d| = {np.min(r):.3g} at M = {M}")
    n = d / r[..., None]
    dd, d2d = d_derivatives(k1, k2)
    # r_a = n . d_a
    ra = np.einsum("...i,...ai->...a", n, dd)
    rr = r[..., None, None]
    dn = (dd - n[..., None, :] * ra[..., :, None]) / rr
    if order == 1:
        return n, dn
    r2 = r[..., None, None]
    # r_ab = (d_a . d_b + d . d_ab) / r - r_a r_b / r
    rab = (
        np.einsum("...ai,...bi->...ab", dd, dd) + np.einsum("...i,...abi->...ab", d, d2d)
    ) / r2 - ra[..., :, None] * ra[..., None, :] / r2
    R = r[..., None, None, None]
    d2n = (
        d2d / R
        - (dd[..., :, None, :] * ra[..., None, :, None] + dd[..., None, :, :] * ra[..., :, None, None]) / R**2
        - d[..., None, None, :] * rab[..., None] / R**2
        + 2 * d[..., None, None, :] * ra[..., :, None, None] * ra[..., None, :, None] / R**3
    )
    return n, dn, d2n


def metric_and_curvature(n, dn, band: int = 1):
    """Quantum metric and Berry curvature of the state with Bloch vector band*n."""
    g = 0.25 * np.einsum("...ai,...bi->...ab", dn, dn)
    triple = np.einsum("...i,...i->...", n, np.cross(dn[..., 0, :], dn[..., 1, :]))
    # -2 Im<d1 psi|d2 psi> for Bloch vector s*n equals -(s/2) n.(d1n x d2n)
    omega = -0.5 * band * triple
    return g, omega


def states_from_bloch(n):
    """Gauge-fixed +1 eigenvectors of n . sigma, vectorized over leading axes."""
    n = np.asarray(n, dtype=float)
    n3 = np.clip(n[..., 2], -1.0, 1.0)
    rho = np.hypot(n[..., 0], n[..., 1])
    # the larger modulus from n3, the smaller from a0 |a1| = rho / 2 (no cancellation near a pole)
    big = np.sqrt((1.0 + np.abs(n3)) / 2.0)
    small = rho / (2.0 * big)
    north = n3 >= 0
    a0 = np.where(north, big, small)
    safe = np.where(rho > 0, rho, 1.0)
    phase = np.where(rho > 0, (n[..., 0] + 1j * n[..., 1]) / safe, 1.0)
    a1 = np.where(north, small, big) * phase
    return np.stack([a0.astype(complex), a1], axis=-1)


# ---------------------------------------------------------------------------
# Point-wise operations


def bloch_vector(p: BlochPoint) -> BlochVector:
    d = d_vector(p.k1, p.k2, p.M)
    r = float(np.linalg.norm(d))
    if r < GAP_TOL:
        raise GaplessPoint(f"gap closes at k=({p.k1}, {p.k2}), M={p.M}")
    return BlochVector(d=d, n=d / r, gap=2.0 * r)


def band_state(p: BlochPoint, band: int = 1) -> PureQubitState:
    """Eigenstate of H(k) with energy band*|d| (band = +1 upper, -1 lower)."""
    if band not in (1, -1):
        raise ValueError("band must be +1 or -1")
    n = band * bloch_vector(p).n
    return PureQubitState.from_vector(states_from_bloch(n))


def excited_state(p: BlochPoint) -> PureQubitState:
    return band_state(p, 1)


def qgt_analytic(p: BlochPoint, band: int = 1) -> GeometricTensor:
    n, dn = unit_vector_jet(p.k1, p.k2, p.M)
    g, omega = metric_and_curvature(n, dn, band)
    g = 0.5 * (g + g.T)
    return GeometricTensor(g=g, omega12=float(omega), method="analytic")


def _infidelity(a, b):
    # 1 - |<a|b>|^2 = |a0 b1 - a1 b0|^2 for normalized qubit states; no cancellation
    return np.abs(a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]) ** 2


def _loop_phase(states):
    """Berry phase -arg(prod <s_i|s_{i+1}>) around a closed loop of states."""
    prod = 1.0 + 0j
    for a, b in zip(states, states[1:] + states[:1]):
        prod *= np.vdot(a, b)
    return -np.angle(prod)


def qgt_fidelity(p: BlochPoint, delta: float = 1e-3, band: int = 1) -> GeometricTensor:
    """Quantum geometric tensor from overlaps of neighbouring states.

    The metric comes from the infidelity of states displaced by +-delta/2
    along k1, k2, and the two diagonals; the curvature from the Berry phase
    of the plaquette of side ``delta`` centred on the point. Both are
    accurate to O(delta^2).
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    gap = bloch_vector(p).gap
    if gap <= 10 * delta:
        raise GaplessPoint(f"gap {gap:.3g} too small for delta {delta:.3g}")

    def state(dk1, dk2):
        return band_state(BlochPoint(p.k1 + dk1, p.k2 + dk2, p.M), band).amplitudes

    h = delta / 2
    def infid(u1, u2):
        return float(_infidelity(state(-h * u1, -h * u2), state(h * u1, h * u2)))

    g11 = infid(1, 0) / delta**2
    g22 = infid(0, 1) / delta**2
    plus = infid(1, 1) / delta**2
    minus = infid(1, -1) / delta**2
    # average of (plus - g11 - g22)/2 and (g11 + g22 - minus)/2
    g12 = (plus - minus) / 4
    g = np.array([[g11, g12], [g12, g22]])

    corners = [state(-h, -h), state(h, -h), state(h, h), state(-h, h)]
    phase = _loop_phase(corners)
    if abs(phase) > np.pi / 2:
        raise StepTooLarge(f"plaquette phase {phase:.3f} exceeds pi/2")
    return GeometricTensor(g=g, omega12=phase / delta**2, method="fidelity")


# ---------------------------------------------------------------------------
# Brillouin-zone integrals


def bz_grid(grid_n: int):
    """Midpoint grid on [-pi, pi)^2: returns (k1, k2, cell_area), indexing 'ij'."""
    k = -np.pi + (np.arange(grid_n) + 0.5) * (2 * np.pi / grid_n)
    k1, k2 = np.meshgrid(k, k, indexing="ij")
    return k1, k2, (2 * np.pi / grid_n) ** 2


def _check_mass(M: float, grid_n: int) -> None:
    if grid_n < 8:
        raise ValueError("grid_n must be at least 8")
    for c in CRITICAL_MASSES:
        if abs(M - c) < 1e-6:
            raise CriticalMass(f"M = {M} is at the gap closing M = {c}")


def chern_number(M: float, grid_n: int = 64, band: int = 1) -> int:
    """First Chern number of a band by the lattice field-strength sum.

    Link variables between neighbouring grid states are multiplied around
    every plaquette; the sum of the plaquette phases is 2*pi times an
    integer for any grid fine enough that no plaquette phase wraps.
    """
    _check_mass(M, grid_n)
    k1, k2, _ = bz_grid(grid_n)
    n = d_vector(k1, k2, M)
    r = np.linalg.norm(n, axis=-1)
    if np.any(r < GAP_TOL):
        raise CriticalMass(f"gap closes on the grid at M = {M}")
    psi = states_from_bloch(band * n / r[..., None])
    def link(axis):
        return np.sum(np.conj(psi) * np.roll(psi, -1, axis=axis), axis=-1)
    u1, u2 = link(0), link(1)
    loop = u1 * np.roll(u2, -1, axis=0) * np.conj(np.roll(u1, -1, axis=1)) * np.conj(u2)
    total = float(np.sum(-np.angle(loop))) / (2 * np.pi)
    nearest = round(total)
    if abs(total - nearest) > 1e-3:
        raise NonQuantized(f"lattice Chern sum {total:.6f} at grid_n = {grid_n}")
    return int(nearest)


def geometry_grid(M: float, grid_n: int = 64):
    """Bloch vectors, their derivatives and the cell area on the midpoint grid."""
    _check_mass(M, grid_n)
    k1, k2, area = bz_grid(grid_n)
    try:
        n, dn = unit_vector_jet(k1, k2, M)
    except GaplessPoint as exc:
        raise CriticalMass(str(exc)) from exc
    return n, dn, area


def quantum_volume(M: float, grid_n: int = 64) -> float:
    """Midpoint-rule estimate of the integral of sqrt(det g) over the torus."""
    n, dn, area = geometry_grid(M, grid_n)
    g, _ = metric_and_curvature(n, dn)
    det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0]
    return float(np.sum(np.sqrt(np.maximum(det, 0.0))) * area)


def curvature_grid(M: float, grid_n: int = 64) -> np.ndarray:
    n, dn, _ = geometry_grid(M, grid_n)
    return metric_and_curvature(n, dn)[1]
