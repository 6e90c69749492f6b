"""Complex spherical-harmonic basis functions, angular derivatives, and sphere quadrature.

The basis is the truncated orthonormal spherical-harmonic dictionary used as the
continuous element-pattern model: entry k is Y_l^m(theta_el, theta_az) for the
k-th pair in the ordering (0,0), (1,-1), (1,0), (1,1), (2,-2), ...  Elevation is
measured from +z in [0, pi]; azimuth from +x toward +y in [-pi, pi).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FOUR_PI = 4.0 * np.pi

# Threshold on 1 - cos^2(theta_el) below which the elevation derivative of the
# Legendre factor is regularized to 0 (finite-difference tests stay away from poles).
POLE_EPS = 1e-10


def degree_order_pairs(q: int) -> list[tuple[int, int]]:
    """First q (degree, order) pairs in the canonical ordering."""
    pairs = []
    ell = 0
    while len(pairs) < q:
        for m in range(-ell, ell + 1):
            pairs.append((ell, m))
            if len(pairs) == q:
                break
        ell += 1
    return pairs


@dataclass(frozen=True)
class ShodBasis:
    """Truncated spherical-harmonic dictionary of size q."""

    q: int

    def __post_init__(self):
        if self.q < 1:
            raise ValueError(f"basis size must be positive, got {self.q}")

    @property
    def ordering(self) -> list[tuple[int, int]]:
        return degree_order_pairs(self.q)

    @property
    def max_degree(self) -> int:
        return self.ordering[-1][0]

    @property
    def is_complete_band(self) -> bool:
        """True when q = (L+1)^2, i.e. every order of the top degree is present."""
        root = int(round(np.sqrt(self.q)))
        return root * root == self.q


def _legendre_norm_table(max_degree: int, x: np.ndarray, s: np.ndarray):
    """Orthonormalized associated Legendre values S_l^m = N_lm P_l^m(x) for m >= 0.

    Stable upward recurrence in degree; the Condon-Shortley phase is folded in,
    so Y_l^m = S_l^m * exp(j m az) for m >= 0.  Returns S[l][m] arrays shaped
    like x, plus S_{l-1}^m needed by the derivative relation.
    """
    table = [[None] * (ell + 1) for ell in range(max_degree + 1)]
    table[0][0] = np.full_like(x, 1.0 / np.sqrt(FOUR_PI))
    for m in range(1, max_degree + 1):
        table[m][m] = -np.sqrt((2 * m + 1) / (2.0 * m)) * s * table[m - 1][m - 1]
    for m in range(0, max_degree):
        table[m + 1][m] = np.sqrt(2 * m + 3.0) * x * table[m][m]
    for m in range(0, max_degree + 1):
        for ell in range(m + 2, max_degree + 1):
            a = np.sqrt((4.0 * ell * ell - 1.0) / (ell * ell - m * m))
            b = np.sqrt(
                (2.0 * ell + 1.0)
                * (ell - 1.0 - m)
                * (ell - 1.0 + m)
                / ((2.0 * ell - 3.0) * (ell * ell - m * m))
            )
            table[ell][m] = a * x * table[ell - 1][m] - b * table[ell - 2][m]
    return table


def _evaluate(theta_el, theta_az, q: int, with_partials: bool):
    theta_el = np.asarray(theta_el, dtype=float)
    theta_az = np.asarray(theta_az, dtype=float)
    shape = np.broadcast_shapes(theta_el.shape, theta_az.shape)
    el = np.broadcast_to(theta_el, shape).astype(float)
    az = np.broadcast_to(theta_az, shape).astype(float)

    pairs = degree_order_pairs(q)
    max_degree = pairs[-1][0]
    x = np.cos(el)
    s = np.sin(el)
    table = _legendre_norm_table(max_degree, x, s)

    # exp(j m az) for m = 0..max_degree
    phases = [np.ones_like(az, dtype=complex)]
    for m in range(1, max_degree + 1):
        phases.append(np.exp(1j * m * az))

    out = np.empty(shape + (q,), dtype=complex)
    d_el = np.empty_like(out) if with_partials else None
    d_az = np.empty_like(out) if with_partials else None

    if with_partials:
        pole = np.abs(1.0 - x * x) < POLE_EPS
        safe_s = np.where(pole, 1.0, s)

    for k, (ell, m) in enumerate(pairs):
        ma = abs(m)
        base = table[ell][ma]
        phase = phases[ma] if m >= 0 else np.conj(phases[ma])
        # Y_l^{-m} = (-1)^m conj(Y_l^m); the Legendre factor is real.
        sign = 1.0 if m >= 0 or ma % 2 == 0 else -1.0
        val = sign * base * phase
        out[..., k] = val
        if with_partials:
            d_az[..., k] = 1j * m * val
            if ell == 0:
                d_el[..., k] = 0.0
            else:
                c = np.sqrt((2.0 * ell + 1.0) * (ell * ell - ma * ma) / (2.0 * ell - 1.0))
                lower = table[ell - 1][ma] if ell - 1 >= ma else np.zeros_like(base)
                dbase = (ell * x * base - c * lower) / safe_s
                dbase = np.where(pole, 0.0, dbase)
                d_el[..., k] = sign * dbase * phase

    if with_partials:
        return out, d_el, d_az
    return out


def evaluate_basis(theta_el, theta_az, basis: ShodBasis) -> np.ndarray:
    """b(theta): length-q complex vector (broadcasts over angle arrays)."""
    return _evaluate(theta_el, theta_az, basis.q, with_partials=False)


def evaluate_basis_partials(theta_el, theta_az, basis: ShodBasis):
    """(db/d theta_el, db/d theta_az), each length-q complex.

    The azimuth partial is exactly j*m*Y_l^m.  The elevation partial uses the
    analytic Legendre derivative with the pole limit zeroed within POLE_EPS.
    """
    _, d_el, d_az = _evaluate(theta_el, theta_az, basis.q, with_partials=True)
    return d_el, d_az


def evaluate_basis_all(theta_el, theta_az, basis: ShodBasis):
    """(b, db/d theta_el, db/d theta_az) in one pass."""
    return _evaluate(theta_el, theta_az, basis.q, with_partials=True)


@dataclass(frozen=True)
class SphereQuadrature:
    """Nodes (theta_el, theta_az) and solid-angle weights summing to 4*pi."""

    theta_el: np.ndarray
    theta_az: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if not (len(self.theta_el) == len(self.theta_az) == len(self.weights)):
            raise ValueError("node and weight arrays must have equal length")
        if np.any(self.weights <= 0):
            raise ValueError("quadrature weights must be positive")

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Integrate sampled values over the sphere; leading axis indexes nodes."""
        return np.tensordot(self.weights, np.asarray(values), axes=(0, 0))


def sphere_quadrature(degree: int) -> SphereQuadrature:
    """Tensor rule: Gauss-Legendre in cos(theta_el) x uniform trapezoid in azimuth.

    Exact for integrands that are polynomials of degree <= `degree` in
    cos(theta_el) times azimuthal harmonics exp(j k az) with |k| <= degree.
    """
    if degree < 0:
        raise ValueError("degree must be nonnegative")
    n_gl = degree // 2 + 1
    n_az = degree + 1
    x, wx = np.polynomial.legendre.leggauss(n_gl)
    az = -np.pi + 2.0 * np.pi * np.arange(n_az) / n_az
    waz = np.full(n_az, 2.0 * np.pi / n_az)
    el_nodes = np.arccos(x)
    el = np.repeat(el_nodes, n_az)
    azf = np.tile(az, n_gl)
    w = np.repeat(wx, n_az) * np.tile(waz, n_gl)
    return SphereQuadrature(theta_el=el, theta_az=azf, weights=w)


def gram_matrix(basis: ShodBasis, quadrature: SphereQuadrature) -> np.ndarray:
    """Numerical Gram matrix of the basis: integral of b b^H over the sphere."""
    b = evaluate_basis(quadrature.theta_el, quadrature.theta_az, basis)  # (n, q)
    return (b * quadrature.weights[:, None]).T @ np.conj(b)
