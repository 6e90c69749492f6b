"""Finite-state radiation-pattern libraries.

Each state is a nonnegative real pattern modulus over the sphere normalized to
unit total radiated power.  Two state representations are supported: an
analytic cosine-power family (smooth, closed-form derivatives) and tabulated
grids read from CSV (bilinear interpolation, grid-based derivatives).
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .shod import FOUR_PI, SphereQuadrature, sphere_quadrature

# Default rule used to normalize states; exact for the analytic family up to
# exponent 32 and a fine fixed rule for tabulated grids.
NORMALIZATION_DEGREE = 64

_GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))


def unit_direction(theta_el, theta_az):
    """Unit vector(s) for elevation from +z and azimuth from +x toward +y."""
    el = np.asarray(theta_el, dtype=float)
    az = np.asarray(theta_az, dtype=float)
    return np.stack(
        [np.sin(el) * np.cos(az), np.sin(el) * np.sin(az), np.cos(el)], axis=-1
    )


def direction_aod(direction):
    """Inverse of unit_direction: (theta_el, theta_az) of a unit vector."""
    d = np.asarray(direction, dtype=float)
    el = np.arccos(np.clip(d[..., 2], -1.0, 1.0))
    az = np.arctan2(d[..., 1], d[..., 0])
    return el, az


def fibonacci_hemisphere(n: int, phase: float = 0.0) -> np.ndarray:
    """n unit vectors quasi-uniform over the front (+x) hemisphere.

    Golden-angle spiral about +x; `phase` rotates the spiral.  Returned in a
    radical-inverse (stratified) order so every prefix also covers the
    hemisphere, which makes prefix sub-libraries nested and well spread.
    """
    if n < 1:
        raise ValueError("need at least one direction")
    order = np.argsort([_radical_inverse(k) for k in range(n)], kind="stable")
    k = np.asarray(order, dtype=float)
    cos_off = 1.0 - (k + 0.5) / n  # offset angle from +x, front hemisphere only
    sin_off = np.sqrt(1.0 - cos_off**2)
    spin = _GOLDEN_ANGLE * k + phase
    return np.stack(
        [cos_off, sin_off * np.cos(spin), sin_off * np.sin(spin)], axis=-1
    )


def _radical_inverse(k: int, base: int = 2) -> float:
    inv, f = 0.0, 1.0 / base
    while k > 0:
        inv += (k % base) * f
        k //= base
        f /= base
    return inv


@dataclass(frozen=True)
class AnalyticState:
    """Pattern modulus proportional to (1 + u(theta) . direction)^exponent."""

    direction: np.ndarray  # unit steering direction, shape (3,)
    exponent: float  # concentration >= 0; 0 is omni
    amplitude: float = 1.0  # scale applied on top of the raw shape

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        if d.shape != (3,) or not np.isclose(np.linalg.norm(d), 1.0, atol=1e-9):
            raise ValueError("direction must be a unit 3-vector")
        if self.exponent < 0:
            raise ValueError("exponent must be nonnegative")
        object.__setattr__(self, "direction", d)

    def evaluate(self, theta_el, theta_az):
        u = unit_direction(theta_el, theta_az)
        base = np.maximum(1.0 + u @ self.direction, 0.0)
        return self.amplitude * base**self.exponent

    def evaluate_partials(self, theta_el, theta_az):
        el = np.asarray(theta_el, dtype=float)
        az = np.asarray(theta_az, dtype=float)
        u = unit_direction(el, az)
        du_el = np.stack(
            [np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), -np.sin(el)], axis=-1
        )
        du_az = np.stack(
            [-np.sin(el) * np.sin(az), np.sin(el) * np.cos(az), np.zeros_like(el + az)],
            axis=-1,
        )
        base = np.maximum(1.0 + u @ self.direction, 0.0)
        p = self.exponent
        if p == 0:
            zero = np.zeros_like(base)
            return zero, zero
        factor = self.amplitude * p * base ** (p - 1.0)
        return factor * (du_el @ self.direction), factor * (du_az @ self.direction)

    def raw_power(self) -> float:
        # integral of (1 + u.mu)^(2p) over the sphere, rotation invariant
        p = self.exponent
        return float(2.0 * np.pi * 2.0 ** (2 * p + 1) / (2 * p + 1))


@dataclass(frozen=True)
class TabulatedState:
    """Pattern modulus sampled on a regular (el_deg, az_deg) grid.

    Evaluation is bilinear interpolation of `amplitude * values`; queries
    outside the grid are clamped (with a warning).  Angular derivatives come
    from central differences of the grid.
    """

    el_deg: np.ndarray  # ascending, shape (n_el,)
    az_deg: np.ndarray  # ascending, shape (n_az,)
    values: np.ndarray  # nonnegative raw samples, shape (n_el, n_az)
    amplitude: float = 1.0

    def __post_init__(self):
        el = np.asarray(self.el_deg, dtype=float)
        az = np.asarray(self.az_deg, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if el.ndim != 1 or az.ndim != 1 or v.shape != (len(el), len(az)):
            raise ValueError("values must be a rectangular el x az grid")
        if len(el) < 2 or len(az) < 2:
            raise ValueError("grid needs at least two samples per axis")
        if np.any(np.diff(el) <= 0) or np.any(np.diff(az) <= 0):
            raise ValueError("grid axes must be strictly ascending")
        if np.any(v < 0):
            raise ValueError("pattern samples must be nonnegative")
        object.__setattr__(self, "el_deg", el)
        object.__setattr__(self, "az_deg", az)
        object.__setattr__(self, "values", v)

    def _clamped_degrees(self, theta_el, theta_az):
        el = np.rad2deg(np.asarray(theta_el, dtype=float))
        az = np.rad2deg(np.asarray(theta_az, dtype=float))
        lo_el, hi_el = self.el_deg[0], self.el_deg[-1]
        lo_az, hi_az = self.az_deg[0], self.az_deg[-1]
        if np.any(el < lo_el) or np.any(el > hi_el) or np.any(az < lo_az) or np.any(az > hi_az):
            warnings.warn("query outside tabulated grid; clamping", stacklevel=3)
        return np.clip(el, lo_el, hi_el), np.clip(az, lo_az, hi_az)

    def _interp(self, grid: np.ndarray, el_deg, az_deg):
        ie = np.clip(np.searchsorted(self.el_deg, el_deg) - 1, 0, len(self.el_deg) - 2)
        ia = np.clip(np.searchsorted(self.az_deg, az_deg) - 1, 0, len(self.az_deg) - 2)
        e0, e1 = self.el_deg[ie], self.el_deg[ie + 1]
        a0, a1 = self.az_deg[ia], self.az_deg[ia + 1]
        te = (el_deg - e0) / (e1 - e0)
        ta = (az_deg - a0) / (a1 - a0)
        return (
            grid[ie, ia] * (1 - te) * (1 - ta)
            + grid[ie + 1, ia] * te * (1 - ta)
            + grid[ie, ia + 1] * (1 - te) * ta
            + grid[ie + 1, ia + 1] * te * ta
        )

    def evaluate(self, theta_el, theta_az):
        el_deg, az_deg = self._clamped_degrees(theta_el, theta_az)
        return self.amplitude * self._interp(self.values, el_deg, az_deg)

    def evaluate_partials(self, theta_el, theta_az):
        el_deg, az_deg = self._clamped_degrees(theta_el, theta_az)
        d_el = np.gradient(self.values, np.deg2rad(self.el_deg), axis=0)
        d_az = np.gradient(self.values, np.deg2rad(self.az_deg), axis=1)
        return (
            self.amplitude * self._interp(d_el, el_deg, az_deg),
            self.amplitude * self._interp(d_az, el_deg, az_deg),
        )

    def raw_power(self, quadrature: SphereQuadrature | None = None) -> float:
        quad = quadrature or sphere_quadrature(NORMALIZATION_DEGREE)
        vals = self._interp(
            self.values, *map(np.rad2deg, (quad.theta_el, quad.theta_az))
        )
        return float(quad.integrate(vals**2))


@dataclass(frozen=True)
class PatternLibrary:
    """Ordered collection of unit-power pattern states."""

    states: tuple

    def __post_init__(self):
        if len(self.states) < 1:
            raise ValueError("library must contain at least one state")
        object.__setattr__(self, "states", tuple(self.states))

    @property
    def size(self) -> int:
        return len(self.states)

    def subset(self, s: int) -> "PatternLibrary":
        """Prefix sub-library; prefixes of the default library are well spread."""
        if not 1 <= s <= self.size:
            raise ValueError(f"subset size must be in [1, {self.size}]")
        return PatternLibrary(self.states[:s])


def evaluate_states(theta_el, theta_az, library: PatternLibrary) -> np.ndarray:
    """Per-state pattern moduli, shape (..., S)."""
    return np.stack(
        [state.evaluate(theta_el, theta_az) for state in library.states], axis=-1
    )


def evaluate_state_partials(theta_el, theta_az, library: PatternLibrary):
    """Elevation and azimuth partials of the per-state moduli, each (..., S)."""
    parts = [state.evaluate_partials(theta_el, theta_az) for state in library.states]
    d_el = np.stack([p[0] for p in parts], axis=-1)
    d_az = np.stack([p[1] for p in parts], axis=-1)
    return d_el, d_az


def state_power(state, quadrature: SphereQuadrature | None = None) -> float:
    """Total radiated power of the state as evaluated (amplitude included)."""
    if isinstance(state, AnalyticState) and quadrature is None:
        return state.amplitude**2 * state.raw_power()
    quad = quadrature or sphere_quadrature(NORMALIZATION_DEGREE)
    vals = state.evaluate(quad.theta_el, quad.theta_az)
    return float(quad.integrate(vals**2))


def normalize_state(state, quadrature: SphereQuadrature | None = None):
    """Rescale the state amplitude so total radiated power is 1."""
    bare = replace(state, amplitude=1.0)
    power = state_power(bare, quadrature)
    if power <= 0.0 or not np.isfinite(power):
        raise ValueError("cannot normalize a pattern with zero radiated power")
    return replace(state, amplitude=1.0 / np.sqrt(power))


def default_library(s: int, rng: np.random.Generator | None = None) -> PatternLibrary:
    """Synthetic library: cosine-power states steered over the front hemisphere.

    Steering directions follow a Fibonacci layout (stratified order, so any
    prefix is also spread out); exponents cycle over {1, 2, 4, 8}.  An optional
    rng only rotates the spiral phase, keeping construction deterministic for a
    given seed.
    """
    phase = 0.0 if rng is None else float(rng.uniform(0.0, 2.0 * np.pi))
    directions = fibonacci_hemisphere(s, phase=phase)
    exponents = [1.0, 2.0, 4.0, 8.0]
    states = [
        normalize_state(AnalyticState(direction=d, exponent=exponents[k % 4]))
        for k, d in enumerate(directions)
    ]
    return PatternLibrary(tuple(states))


def omni_state() -> AnalyticState:
    """Constant pattern of modulus 1/sqrt(4 pi)."""
    return AnalyticState(
        direction=np.array([1.0, 0.0, 0.0]), exponent=0.0, amplitude=1.0 / np.sqrt(FOUR_PI)
    )


def tabulate_state(state, n_el: int = 181, n_az: int = 360) -> TabulatedState:
    """Sample any state onto a regular degree grid (raw values, amplitude 1)."""
    el_deg = np.linspace(0.0, 180.0, n_el)
    az_deg = np.linspace(-180.0, 180.0, n_az)
    el, az = np.meshgrid(np.deg2rad(el_deg), np.deg2rad(az_deg), indexing="ij")
    return TabulatedState(el_deg=el_deg, az_deg=az_deg, values=state.evaluate(el, az))


def save_state(state: TabulatedState, path) -> None:
    """Write the raw grid as CSV rows theta_el_deg,theta_az_deg,value."""
    if not isinstance(state, TabulatedState):
        raise TypeError("only tabulated states are saved; use tabulate_state first")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["theta_el_deg", "theta_az_deg", "value"])
        for i, el in enumerate(state.el_deg):
            for j, az in enumerate(state.az_deg):
                writer.writerow(
                    ["%.17g" % el, "%.17g" % az, "%.17g" % state.values[i, j]]
                )


def load_state(path) -> TabulatedState:
    """Read a pattern CSV, validate the grid, and normalize to unit power.

    The normalization scale lands in `amplitude`, so the raw grid round-trips
    bit-exactly through save_state/load_state.
    """
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != [
            "theta_el_deg",
            "theta_az_deg",
            "value",
        ]:
            raise ValueError(f"{path}: expected header theta_el_deg,theta_az_deg,value")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 columns")
            try:
                rows.append(tuple(float(c) for c in row))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: non-numeric sample") from exc
    if not rows:
        raise ValueError(f"{path}: no samples")
    el = np.array(sorted({r[0] for r in rows}))
    az = np.array(sorted({r[1] for r in rows}))
    if len(rows) != len(el) * len(az):
        raise ValueError(f"{path}: grid is not rectangular")
    values = np.full((len(el), len(az)), np.nan)
    ie = {v: i for i, v in enumerate(el)}
    ia = {v: i for i, v in enumerate(az)}
    for e, a, v in rows:
        if v < 0:
            raise ValueError(f"{path}: negative pattern sample {v}")
        values[ie[e], ia[a]] = v
    if np.any(np.isnan(values)):
        raise ValueError(f"{path}: grid is not rectangular (missing samples)")
    return normalize_state(TabulatedState(el_deg=el, az_deg=az, values=values))


def save_library(library: PatternLibrary, path) -> None:
    """Write a library as state_###.csv files under a directory."""
    directory = Path(path)
    directory.mkdir(parents=True, exist_ok=True)
    for k, state in enumerate(library.states):
        save_state(state, directory / f"state_{k:03d}.csv")


def load_library(path) -> PatternLibrary:
    """Load either a single-state CSV or a directory of state_###.csv files."""
    p = Path(path)
    if p.is_dir():
        files = sorted(p.glob("state_*.csv"))
        if not files:
            raise ValueError(f"{path}: no state_*.csv files found")
        return PatternLibrary(tuple(load_state(f) for f in files))
    return PatternLibrary((load_state(p),))
