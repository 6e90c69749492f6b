"""Joint array/element response vectors, Fisher information, and error bounds.

The response c(theta) = a(theta) kron g(theta) stacks the array phase response
with the per-element pattern coordinates (basis coefficients, library states,
or the fixed omni gain).  Information matrices are assembled generically from
the derivative vectors of the noise-free observation, transformed to position
coordinates with an analytic Jacobian, and reduced to a position error bound.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import scene, shod
from .patterns import PatternLibrary, evaluate_state_partials, evaluate_states
from .scene import ArrayGeometry, PathComponent, Scenario
from .shod import FOUR_PI, ShodBasis

# Channel parameter ordering: [theta_el, theta_az, tau, rho, phase]
GAMMA_DIM = 5
RCOND_FLOOR = 1e-14


@dataclass(frozen=True)
class SynthesisModel:
    """Element patterns synthesized from an orthonormal basis."""

    array: ArrayGeometry
    basis: ShodBasis

    kind = "synthesis"

    @property
    def element_dim(self) -> int:
        return self.basis.q

    @property
    def dim(self) -> int:
        return self.array.size * self.basis.q

    def element_response(self, theta_el, theta_az):
        return shod.evaluate_basis_all(theta_el, theta_az, self.basis)


@dataclass(frozen=True)
class FiniteStateModel:
    """Element patterns picked one-hot from a discrete library."""

    array: ArrayGeometry
    library: PatternLibrary

    kind = "finite-state"

    @property
    def element_dim(self) -> int:
        return self.library.size

    @property
    def dim(self) -> int:
        return self.array.size * self.library.size

    def element_response(self, theta_el, theta_az):
        b = evaluate_states(theta_el, theta_az, self.library).astype(complex)
        d_el, d_az = evaluate_state_partials(theta_el, theta_az, self.library)
        return b, d_el.astype(complex), d_az.astype(complex)


@dataclass(frozen=True)
class TraditionalModel:
    """Non-reconfigurable baseline: fixed omni element pattern 1/sqrt(4 pi)."""

    array: ArrayGeometry

    kind = "traditional"

    @property
    def element_dim(self) -> int:
        return 1

    @property
    def dim(self) -> int:
        return self.array.size

    def element_response(self, theta_el, theta_az):
        shape = np.broadcast_shapes(
            np.shape(np.asarray(theta_el)), np.shape(np.asarray(theta_az))
        ) + (1,)
        g = np.full(shape, 1.0 / np.sqrt(FOUR_PI), dtype=complex)
        zero = np.zeros(shape, dtype=complex)
        return g, zero, zero


@dataclass(frozen=True)
class ResponseBundle:
    """c(theta) and its two angular partials for one model and one direction."""

    kind: str
    theta_el: float
    theta_az: float
    c1: np.ndarray
    c2: np.ndarray  # d/d theta_el
    c3: np.ndarray  # d/d theta_az

    def c(self, order: int) -> np.ndarray:
        return (self.c1, self.c2, self.c3)[order - 1]

    def block(self, order: int, m: int, element_dim: int) -> np.ndarray:
        """Per-antenna slice of the order-th vector."""
        return self.c(order)[m * element_dim : (m + 1) * element_dim]


def _kron_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise Kronecker product over the last axis."""
    return (a[..., :, None] * b[..., None, :]).reshape(a.shape[:-1] + (-1,))


def response(model, theta_el: float, theta_az: float) -> ResponseBundle:
    """Joint response and partials at one direction (product rule over kron)."""
    a = scene.steering_vector(theta_el, theta_az, model.array)
    da_el, da_az = scene.steering_partials(theta_el, theta_az, model.array)
    g, dg_el, dg_az = model.element_response(theta_el, theta_az)
    return ResponseBundle(
        kind=model.kind,
        theta_el=float(theta_el),
        theta_az=float(theta_az),
        c1=np.kron(a, g),
        c2=np.kron(da_el, g) + np.kron(a, dg_el),
        c3=np.kron(da_az, g) + np.kron(a, dg_az),
    )


def response_values(model, theta_el, theta_az) -> np.ndarray:
    """Batched c(theta) only; angle arrays broadcast, output (..., dim)."""
    el = np.asarray(theta_el, dtype=float)
    az = np.asarray(theta_az, dtype=float)
    a = scene.steering_vector(el, az, model.array)
    g, _, _ = model.element_response(el, az)
    return _kron_rows(a, np.asarray(g, dtype=complex))


# --------------------------------------------------------------------------
# Fisher information
# --------------------------------------------------------------------------

def _codeword_columns(w, dim: int) -> np.ndarray:
    """Normalize input to a (dim, n) column stack of codeword vectors.

    Accepts a list of vectors, a (dim, n) matrix of columns, or a (dim, dim)
    Hermitian PSD covariance (factored by eigendecomposition).
    """
    if isinstance(w, (list, tuple)):
        cols = np.stack([np.asarray(v, dtype=complex) for v in w], axis=-1)
        if cols.shape[0] != dim:
            raise ValueError(f"codeword length {cols.shape[0]} != model dimension {dim}")
        return cols
    w = np.asarray(w, dtype=complex)
    if w.ndim == 1:
        return w[:, None]
    if w.shape == (dim, dim) and np.allclose(w, w.conj().T, atol=1e-10):
        vals, vecs = np.linalg.eigh(w)
        keep = vals > max(vals.max(), 0.0) * 1e-14
        if not np.any(keep):
            return np.zeros((dim, 1), dtype=complex)
        return vecs[:, keep] * np.sqrt(vals[keep])
    if w.shape[0] == dim:
        return w
    raise ValueError(f"cannot interpret codeword input of shape {w.shape}")


def fim_channel(w, bundle: ResponseBundle, path: PathComponent, scenario: Scenario) -> np.ndarray:
    """Channel-domain FIM over [theta_el, theta_az, tau, rho, phase].

    Assembled generically: for every codeword the five derivative vectors of
    the noise-free observation are built explicitly and accumulated through
    their inner products.  `w` may be codeword columns or a covariance matrix.
    """
    if path.rho <= 0.0:
        raise ValueError("zero path gain makes the (rho, phase) parameterization singular")
    dim = bundle.c1.shape[0]
    cols = _codeword_columns(w, dim)
    n_s = scenario.num_subcarriers
    d = scene.delay_vector(path.delay, n_s, scenario.subcarrier_spacing)
    d_dot = scene.delay_partial(path.delay, n_s, scenario.subcarrier_spacing)
    amp = np.sqrt(scenario.transmit_power)
    alpha = path.alpha

    fim = np.zeros((GAMMA_DIM, GAMMA_DIM))
    for t in range(cols.shape[1]):
        wt = cols[:, t]
        g1, g2, g3 = bundle.c1 @ wt, bundle.c2 @ wt, bundle.c3 @ wt
        derivs = (
            amp * alpha * g2 * d,
            amp * alpha * g3 * d,
            amp * alpha * g1 * d_dot,
            amp * np.exp(1j * path.phase) * g1 * d,
            1j * amp * alpha * g1 * d,
        )
        for i in range(GAMMA_DIM):
            for j in range(i, GAMMA_DIM):
                fim[i, j] += np.real(np.vdot(derivs[i], derivs[j]))
    fim = np.triu(fim) + np.triu(fim, 1).T
    return (2.0 / scenario.noise_variance) * fim


def jacobian(p_u, scenario: Scenario) -> np.ndarray:
    """T with T[i, j] = d gamma_j / d eta_i for eta = [p_u, rho, phase].

    Geometry rows are analytic; the gain modulus and phase are treated as free
    parameters (their position dependence is not modeled), so that block is
    the identity.
    """
    p = np.asarray(p_u, dtype=float)
    rel = scenario.bs_rotation.T @ (p - scenario.bs_position)
    r = np.linalg.norm(rel)
    if r == 0.0:
        raise ValueError("UE coincides with the array center")
    el, az = scene.compute_aod(p, scenario)
    s_el = np.sin(el)
    if abs(s_el) < 1e-12:
        warnings.warn("boresight geometry: azimuth is ill-defined", stacklevel=2)
        s_el = 1e-12
    # gradients in the local frame
    g_el = np.array([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), -s_el]) / r
    g_az = np.array([-np.sin(az), np.cos(az), 0.0]) / (r * s_el)
    g_tau = rel / (r * scene.SPEED_OF_LIGHT)
    rot = scenario.bs_rotation
    t = np.zeros((5, 5))
    t[0:3, 0] = rot @ g_el
    t[0:3, 1] = rot @ g_az
    t[0:3, 2] = rot @ g_tau
    t[3, 3] = 1.0
    t[4, 4] = 1.0
    return t


def transform_fim(j_gamma: np.ndarray, t: np.ndarray) -> np.ndarray:
    j_eta = t @ j_gamma @ t.T
    return 0.5 * (j_eta + j_eta.T)


def peb_squared(j_eta: np.ndarray) -> float:
    """Trace of the position block of the inverse FIM (square meters).

    Singular or near-singular information returns inf with a diagnostic.
    """
    j = 0.5 * (np.asarray(j_eta, dtype=float) + np.asarray(j_eta, dtype=float).T)
    eigs = np.linalg.eigvalsh(j)
    if eigs[-1] <= 0.0 or eigs[0] <= eigs[-1] * RCOND_FLOOR:
        rcond = eigs[0] / eigs[-1] if eigs[-1] > 0 else 0.0
        warnings.warn(
            f"singular information matrix (rcond {rcond:.3e}); bound is infinite",
            stacklevel=2,
        )
        return float("inf")
    inv = np.linalg.solve(j, np.eye(j.shape[0]))
    return float(np.trace(inv[:3, :3]))


def peb(j_eta: np.ndarray) -> float:
    """Position error bound in meters: sqrt of the position-block trace."""
    return float(np.sqrt(peb_squared(j_eta)))


@dataclass(frozen=True)
class FimResult:
    j_gamma: np.ndarray
    jacobian: np.ndarray
    j_eta: np.ndarray
    peb: float

    @property
    def peb_squared(self) -> float:
        return self.peb**2


def compute_fim(w, model, scenario: Scenario, p_u=None, phase: float = 0.0) -> FimResult:
    """End-to-end bound at a UE position: response, channel FIM, transform, PEB."""
    p = scenario.ue_position if p_u is None else np.asarray(p_u, dtype=float)
    path = scene.los_path(scenario, phase=phase, target=p)
    bundle = response(model, path.theta_el, path.theta_az)
    j_gamma = fim_channel(w, bundle, path, scenario)
    t = jacobian(p, scenario)
    j_eta = transform_fim(j_gamma, t)
    return FimResult(j_gamma=j_gamma, jacobian=t, j_eta=j_eta, peb=peb(j_eta))


def peb_at(w, model, scenario: Scenario, p_u=None) -> float:
    return compute_fim(w, model, scenario, p_u=p_u).peb


def beampattern(w, model, theta_el, theta_az) -> np.ndarray:
    """|c(theta)^T w|^2 / ||w||^2; broadcasts over angle arrays."""
    w = np.asarray(w, dtype=complex)
    norm_sq = np.real(np.vdot(w, w))
    if norm_sq == 0.0:
        raise ValueError("beampattern of a zero codeword is undefined")
    c = response_values(model, theta_el, theta_az)
    return np.abs(c @ w) ** 2 / norm_sq
