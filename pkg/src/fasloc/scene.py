"""Geometry, channel parameters, array response, and received-signal synthesis.

Single-antenna receiver, planar transmit array in the YoZ plane of the base
station frame, OFDM downlink.  Angles follow the frame convention of the whole
package: elevation from +z in [0, pi], azimuth = atan2(y, x) in [-pi, pi).
All quantities are SI.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

SPEED_OF_LIGHT = 2.99792458e8  # m/s


@dataclass(frozen=True)
class Box:
    """Axis-aligned box, the UE position uncertainty region."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.shape != (3,) or hi.shape != (3,):
            raise ValueError("box bounds must be 3-vectors")
        if np.any(hi < lo):
            raise ValueError("box upper bounds must not be below lower bounds")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def contains(self, point, atol: float = 0.0) -> bool:
        p = np.asarray(point, dtype=float)
        return bool(np.all(p >= self.lo - atol) and np.all(p <= self.hi + atol))

    def clamp(self, point) -> np.ndarray:
        return np.clip(np.asarray(point, dtype=float), self.lo, self.hi)

    def corners(self) -> np.ndarray:
        g = np.array(np.meshgrid(*zip(self.lo, self.hi), indexing="ij"))
        return g.reshape(3, -1).T

    def lattice(self, shape) -> np.ndarray:
        """Regular lattice of points, shape (n1*n2*n3, 3); a 1-count axis sits at center."""
        axes = []
        for lo, hi, n in zip(self.lo, self.hi, shape):
            if n < 1:
                raise ValueError("lattice counts must be positive")
            axes.append(np.array([0.5 * (lo + hi)]) if n == 1 else np.linspace(lo, hi, n))
        g = np.meshgrid(*axes, indexing="ij")
        return np.stack([a.ravel() for a in g], axis=-1)

    def sample(self, rng: np.random.Generator, n: int = 1) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=(n, 3))


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform planar array in the YoZ plane: num_h columns along y, num_v along z."""

    num_h: int
    num_v: int
    spacing: float  # element spacing in meters
    wavelength: float  # carrier wavelength in meters

    def __post_init__(self):
        if self.num_h < 1 or self.num_v < 1:
            raise ValueError("array needs at least one element per axis")
        if self.spacing <= 0 or self.wavelength <= 0:
            raise ValueError("spacing and wavelength must be positive")

    @property
    def size(self) -> int:
        return self.num_h * self.num_v


@dataclass(frozen=True)
class Scenario:
    """One experiment's geometry, radio parameters, and uncertainty region."""

    bs_position: np.ndarray
    bs_rotation: np.ndarray  # local->global frame, orthonormal, det +1
    ue_position: np.ndarray
    uncertainty_region: Box
    carrier_frequency: float  # Hz
    subcarrier_spacing: float  # Hz
    bandwidth: float  # Hz
    num_subcarriers: int
    noise_psd: float  # W/Hz
    transmit_power: float  # W
    array: ArrayGeometry

    def __post_init__(self):
        p_b = np.asarray(self.bs_position, dtype=float)
        p_u = np.asarray(self.ue_position, dtype=float)
        rot = np.asarray(self.bs_rotation, dtype=float)
        if rot.shape != (3, 3):
            raise ValueError("bs_rotation must be 3x3")
        if np.linalg.norm(rot.T @ rot - np.eye(3)) >= 1e-12 or np.linalg.det(rot) < 0:
            raise ValueError("bs_rotation must be orthonormal with determinant +1")
        expected = int(round(self.bandwidth / self.subcarrier_spacing))
        if self.num_subcarriers != expected:
            raise ValueError(
                f"num_subcarriers {self.num_subcarriers} != bandwidth/spacing {expected}"
            )
        object.__setattr__(self, "bs_position", p_b)
        object.__setattr__(self, "ue_position", p_u)
        object.__setattr__(self, "bs_rotation", rot)

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency

    @property
    def noise_variance(self) -> float:
        """Per-sample complex noise variance sigma_v^2 = N0 * B."""
        return self.noise_psd * self.bandwidth

    def with_power(self, power: float) -> "Scenario":
        return replace(self, transmit_power=power)

    def with_ue(self, position) -> "Scenario":
        return replace(self, ue_position=np.asarray(position, dtype=float))

    def snr_at(self, position=None) -> float:
        """Received line-of-sight SNR = P rho^2 / (N0 B) at a position (default UE)."""
        p = self.ue_position if position is None else np.asarray(position, dtype=float)
        rho = los_gain(self, p)
        return self.transmit_power * rho**2 / self.noise_variance

    def power_for_snr(self, snr_db: float, position=None) -> float:
        p = self.ue_position if position is None else np.asarray(position, dtype=float)
        rho = los_gain(self, p)
        return 10.0 ** (snr_db / 10.0) * self.noise_variance / rho**2


def table1_scenario(num_h: int = 5, num_v: int = 5) -> Scenario:
    """Default desk-scale scenario: 30 GHz, 100 MHz over 500 subcarriers,
    5x5 half-wavelength array at [0,0,5] facing +x, UE at [45,5,2] inside a
    20 x 20 x 10 m uncertainty box."""
    fc = 30.0e9
    wavelength = SPEED_OF_LIGHT / fc
    df = 200.0e3
    bandwidth = 100.0e6
    return Scenario(
        bs_position=np.array([0.0, 0.0, 5.0]),
        bs_rotation=np.eye(3),
        ue_position=np.array([45.0, 5.0, 2.0]),
        uncertainty_region=Box(lo=np.array([30.0, -10.0, 0.0]), hi=np.array([50.0, 10.0, 10.0])),
        carrier_frequency=fc,
        subcarrier_spacing=df,
        bandwidth=bandwidth,
        num_subcarriers=int(round(bandwidth / df)),
        noise_psd=10.0 ** ((-173.855 - 30.0) / 10.0),  # -173.855 dBm/Hz in W/Hz
        transmit_power=1.0,
        array=ArrayGeometry(num_h=num_h, num_v=num_v, spacing=wavelength / 2.0, wavelength=wavelength),
    )


def scenario_to_json(scenario: Scenario) -> str:
    doc = {
        "bs_position": scenario.bs_position.tolist(),
        "bs_rotation": scenario.bs_rotation.tolist(),
        "ue_position": scenario.ue_position.tolist(),
        "uncertainty_region": {
            "lo": scenario.uncertainty_region.lo.tolist(),
            "hi": scenario.uncertainty_region.hi.tolist(),
        },
        "carrier_frequency": scenario.carrier_frequency,
        "subcarrier_spacing": scenario.subcarrier_spacing,
        "bandwidth": scenario.bandwidth,
        "num_subcarriers": scenario.num_subcarriers,
        "noise_psd": scenario.noise_psd,
        "transmit_power": scenario.transmit_power,
        "array": {
            "num_h": scenario.array.num_h,
            "num_v": scenario.array.num_v,
            "spacing": scenario.array.spacing,
            "wavelength": scenario.array.wavelength,
        },
    }
    return json.dumps(doc, indent=2)


def scenario_from_json(text: str) -> Scenario:
    doc = json.loads(text)
    return Scenario(
        bs_position=np.array(doc["bs_position"], dtype=float),
        bs_rotation=np.array(doc["bs_rotation"], dtype=float),
        ue_position=np.array(doc["ue_position"], dtype=float),
        uncertainty_region=Box(
            lo=np.array(doc["uncertainty_region"]["lo"], dtype=float),
            hi=np.array(doc["uncertainty_region"]["hi"], dtype=float),
        ),
        carrier_frequency=float(doc["carrier_frequency"]),
        subcarrier_spacing=float(doc["subcarrier_spacing"]),
        bandwidth=float(doc["bandwidth"]),
        num_subcarriers=int(doc["num_subcarriers"]),
        noise_psd=float(doc["noise_psd"]),
        transmit_power=float(doc["transmit_power"]),
        array=ArrayGeometry(
            num_h=int(doc["array"]["num_h"]),
            num_v=int(doc["array"]["num_v"]),
            spacing=float(doc["array"]["spacing"]),
            wavelength=float(doc["array"]["wavelength"]),
        ),
    )


def load_scenario(path) -> Scenario:
    return scenario_from_json(Path(path).read_text())


def save_scenario(scenario: Scenario, path) -> None:
    Path(path).write_text(scenario_to_json(scenario) + "\n")


# --------------------------------------------------------------------------
# Angles, delays, gains
# --------------------------------------------------------------------------

def compute_aod(target, scenario: Scenario):
    """Departure (theta_el, theta_az) of a target point seen from the array.

    Works on a single point (3,) or a stack (..., 3).
    """
    p = np.asarray(target, dtype=float)
    rel = (p - scenario.bs_position) @ scenario.bs_rotation  # = R^T (p - p_b) rowwise
    r = np.linalg.norm(rel, axis=-1)
    if np.any(r == 0.0):
        raise ValueError("target coincides with the array center")
    el = np.arccos(np.clip(rel[..., 2] / r, -1.0, 1.0))
    az = np.arctan2(rel[..., 1], rel[..., 0])
    return el, az


def aod_direction(theta_el, theta_az):
    """Local-frame unit vector toward the given departure angles."""
    el = np.asarray(theta_el, dtype=float)
    az = np.asarray(theta_az, dtype=float)
    return np.stack(
        [np.sin(el) * np.cos(az), np.sin(el) * np.sin(az), np.cos(el)], axis=-1
    )


def compute_delay(scenario: Scenario, target=None, scatterer=None) -> float:
    """Propagation delay: direct path, or the two-leg path via a scatterer."""
    p_u = scenario.ue_position if target is None else np.asarray(target, dtype=float)
    if scatterer is None:
        dist = np.linalg.norm(p_u - scenario.bs_position)
    else:
        p_s = np.asarray(scatterer, dtype=float)
        dist = np.linalg.norm(p_s - scenario.bs_position) + np.linalg.norm(p_u - p_s)
    return float(dist / SPEED_OF_LIGHT)


def los_gain(scenario: Scenario, target=None) -> float:
    """Free-space amplitude gain lambda / (4 pi d) of the direct path."""
    p_u = scenario.ue_position if target is None else np.asarray(target, dtype=float)
    d = np.linalg.norm(p_u - scenario.bs_position)
    if d == 0.0:
        raise ValueError("zero-length path")
    return float(scenario.wavelength / (4.0 * np.pi * d))


def nlos_gain(scenario: Scenario, scatterer, cross_section: float, target=None) -> float:
    """Two-leg amplitude gain sqrt(4 pi s) lambda / (16 pi^2 d1 d2)."""
    p_u = scenario.ue_position if target is None else np.asarray(target, dtype=float)
    p_s = np.asarray(scatterer, dtype=float)
    d1 = np.linalg.norm(p_s - scenario.bs_position)
    d2 = np.linalg.norm(p_u - p_s)
    if d1 == 0.0 or d2 == 0.0:
        raise ValueError("zero-length path leg")
    if cross_section < 0:
        raise ValueError("cross section must be nonnegative")
    lam = scenario.wavelength
    return float(np.sqrt(4.0 * np.pi * cross_section) * lam / (16.0 * np.pi**2 * d1 * d2))


@dataclass(frozen=True)
class PathComponent:
    """One propagation path: direct (los) or single-bounce (nlos)."""

    kind: str  # "los" | "nlos"
    rho: float  # gain modulus
    phase: float  # gain phase, radians
    delay: float  # seconds
    theta_el: float
    theta_az: float
    scatterer: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("los", "nlos"):
            raise ValueError(f"unknown path kind {self.kind!r}")
        if self.rho < 0 or self.delay < 0:
            raise ValueError("gain modulus and delay must be nonnegative")
        if not 0.0 <= self.theta_el <= np.pi:
            raise ValueError("elevation out of range")

    @property
    def alpha(self) -> complex:
        return self.rho * np.exp(1j * self.phase)

    def with_rho(self, rho: float) -> "PathComponent":
        return replace(self, rho=float(rho))


def los_path(scenario: Scenario, phase: float = 0.0, target=None) -> PathComponent:
    p_u = scenario.ue_position if target is None else np.asarray(target, dtype=float)
    el, az = compute_aod(p_u, scenario)
    return PathComponent(
        kind="los",
        rho=los_gain(scenario, p_u),
        phase=float(phase),
        delay=compute_delay(scenario, target=p_u),
        theta_el=float(el),
        theta_az=float(az),
    )


def nlos_path(
    scenario: Scenario, scatterer, cross_section: float, phase: float = 0.0, target=None
) -> PathComponent:
    p_s = np.asarray(scatterer, dtype=float)
    el, az = compute_aod(p_s, scenario)
    return PathComponent(
        kind="nlos",
        rho=nlos_gain(scenario, p_s, cross_section, target=target),
        phase=float(phase),
        delay=compute_delay(scenario, target=target, scatterer=p_s),
        theta_el=float(el),
        theta_az=float(az),
        scatterer=p_s,
    )


# --------------------------------------------------------------------------
# Steering and delay vectors
# --------------------------------------------------------------------------

def steering_vector(theta_el, theta_az, array: ArrayGeometry) -> np.ndarray:
    """Planar-array response exp(-j 2 pi w_h k_h) kron exp(-j 2 pi w_v k_v).

    Element m = h * num_v + v; w_h = d sin(az) sin(el) / lambda couples to the
    horizontal (y) index, w_v = d cos(el) / lambda to the vertical (z) index.
    Broadcasts over angle arrays; output shape (..., M).
    """
    el = np.asarray(theta_el, dtype=float)
    az = np.asarray(theta_az, dtype=float)
    ratio = array.spacing / array.wavelength
    w_h = ratio * np.sin(az) * np.sin(el)
    w_v = ratio * np.cos(el)
    k_h = np.arange(array.num_h)
    k_v = np.arange(array.num_v)
    ph = np.exp(-2j * np.pi * w_h[..., None] * k_h)
    pv = np.exp(-2j * np.pi * w_v[..., None] * k_v)
    return (ph[..., :, None] * pv[..., None, :]).reshape(el.shape + (array.size,))


def steering_partials(theta_el, theta_az, array: ArrayGeometry):
    """Elementwise analytic partials of the array response w.r.t. both angles."""
    el = np.asarray(theta_el, dtype=float)
    az = np.asarray(theta_az, dtype=float)
    a = steering_vector(el, az, array)
    ratio = array.spacing / array.wavelength
    k_h = np.arange(array.num_h)
    k_v = np.arange(array.num_v)
    idx_h = np.repeat(k_h, array.num_v)
    idx_v = np.tile(k_v, array.num_h)
    dwh_del = ratio * np.sin(az) * np.cos(el)
    dwv_del = -ratio * np.sin(el)
    dwh_daz = ratio * np.cos(az) * np.sin(el)
    d_el = -2j * np.pi * (dwh_del[..., None] * idx_h + dwv_del[..., None] * idx_v) * a
    d_az = -2j * np.pi * (dwh_daz[..., None] * idx_h) * a
    return d_el, d_az


def delay_vector(tau: float, num_subcarriers: int, subcarrier_spacing: float) -> np.ndarray:
    """[exp(-j 2 pi n df tau)]_{n=0..N_s-1}."""
    n = np.arange(num_subcarriers)
    return np.exp(-2j * np.pi * n * subcarrier_spacing * tau)


def delay_partial(tau: float, num_subcarriers: int, subcarrier_spacing: float) -> np.ndarray:
    """d/d tau of the delay vector."""
    n = np.arange(num_subcarriers)
    return (-2j * np.pi * n * subcarrier_spacing) * delay_vector(
        tau, num_subcarriers, subcarrier_spacing
    )


def delay_inner_rate(num_subcarriers: int, subcarrier_spacing: float) -> complex:
    """d(tau)^H d'(tau) = -j pi df N_s (N_s - 1); independent of tau."""
    n = num_subcarriers
    return -1j * np.pi * subcarrier_spacing * n * (n - 1)


# --------------------------------------------------------------------------
# Region geometry helpers
# --------------------------------------------------------------------------

def aod_bounds(scenario: Scenario, region: Box | None = None, samples: int = 25):
    """(el_min, el_max, az_min, az_max) of departure angles over the region.

    Evaluated on a regular lattice (extremes of these angles over a box are not
    corner-bound); `samples` per axis bounds the resolution error.  Assumes the
    azimuth interval does not wrap across +-pi.
    """
    box = region or scenario.uncertainty_region
    pts = box.lattice((samples, samples, samples))
    el, az = compute_aod(pts, scenario)
    return float(el.min()), float(el.max()), float(az.min()), float(az.max())


def delay_bounds(scenario: Scenario, region: Box | None = None):
    """(tau_min, tau_max) of the direct path over the region (exact for a box)."""
    box = region or scenario.uncertainty_region
    p_b = scenario.bs_position
    nearest = box.clamp(p_b)
    d_min = np.linalg.norm(nearest - p_b)
    d_max = np.max(np.linalg.norm(box.corners() - p_b, axis=1))
    return float(d_min / SPEED_OF_LIGHT), float(d_max / SPEED_OF_LIGHT)


# --------------------------------------------------------------------------
# Received-signal synthesis
# --------------------------------------------------------------------------

def noise_matrix(scenario: Scenario, num_codewords: int, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. circular complex Gaussian noise, variance N0*B per entry."""
    sigma = np.sqrt(scenario.noise_variance / 2.0)
    shape = (scenario.num_subcarriers, num_codewords)
    return sigma * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def synthesize_received(
    scenario: Scenario,
    paths,
    codebook,
    rng: np.random.Generator | None = None,
    noiseless: bool = False,
) -> np.ndarray:
    """Stacked observation Y (N_s x N_t) for the given paths and codebook.

    Column t is sum_i sqrt(P) alpha_i d(tau_i) (c(theta_i)^T w_t) plus noise.
    The codebook supplies the joint codewords and the response model; a
    dimension mismatch between the two raises.  Deterministic given the rng.
    """
    from .response_fim import response  # local import, avoids a cycle

    w = codebook.w_matrix()  # (D, N_t)
    model = codebook.model
    if w.shape[0] != model.dim:
        raise ValueError(
            f"codeword dimension {w.shape[0]} does not match model dimension {model.dim}"
        )
    n_s = scenario.num_subcarriers
    y = np.zeros((n_s, w.shape[1]), dtype=complex)
    amp = np.sqrt(scenario.transmit_power)
    for path in paths:
        c = response(model, path.theta_el, path.theta_az).c1
        d = delay_vector(path.delay, n_s, scenario.subcarrier_spacing)
        y += (amp * path.alpha) * np.outer(d, c @ w)
    if not noiseless:
        if rng is None:
            raise ValueError("an rng is required unless noiseless=True")
        y += noise_matrix(scenario, w.shape[1], rng)
    return y
