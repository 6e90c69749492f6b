"""Closed-form codebooks for the basis-synthesis element model.

Three codeword types per steering direction: matched to the joint response,
to its elevation derivative, and to its azimuth derivative.  Each joint
codeword factors exactly into a baseband precoder and per-antenna unit-norm
element-coefficient rows; the free per-antenna phases are fixed to zero for
reproducibility.  A robust codebook stacks the three types over an angular
grid covering the uncertainty region at the half-power beamwidth step.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .response_fim import ResponseBundle, response
from .scene import Box, Scenario, aod_bounds

CODEWORD_TYPES = (1, 2, 3)


def grid_step(num_h: int) -> float:
    """Angular grid step in radians, tied to the array half-power beamwidth."""
    return 1.8 / num_h


def _axis_points(lo: float, hi: float, step: float) -> np.ndarray:
    """Symmetric grid about the interval center whose half-power cells
    (width `step`) cover [lo, hi]."""
    center = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    k = 0 if half <= step / 2 else math.ceil(half / step - 0.5)
    return center + step * np.arange(-k, k + 1)


def angular_grid(scenario: Scenario, region: Box | None = None, step: float | None = None):
    """Steering directions (theta_el, theta_az) covering the region's AODs."""
    el_min, el_max, az_min, az_max = aod_bounds(scenario, region)
    d = grid_step(scenario.array.num_h) if step is None else step
    els = _axis_points(el_min, el_max, d)
    azs = _axis_points(az_min, az_max, d)
    return [(float(el), float(az)) for el in els for az in azs]


def ideal_codeword(bundle: ResponseBundle, ctype: int, delta: float) -> np.ndarray:
    """Power-scaled matched codeword: sqrt(delta) c^(i)(theta)* / ||c^(i)(theta)||."""
    if ctype not in CODEWORD_TYPES:
        raise ValueError(f"codeword type must be 1, 2, or 3, got {ctype}")
    if not 0.0 <= delta <= 1.0:
        raise ValueError("power share must lie in [0, 1]")
    c = bundle.c(ctype)
    norm = np.linalg.norm(c)
    if norm == 0.0:
        raise ValueError(
            f"type-{ctype} response derivative vanishes at this direction; "
            "the geometry is degenerate"
        )
    return np.sqrt(delta) * np.conj(c) / norm


def factor_codeword(bundle: ResponseBundle, ctype: int, delta: float, element_dim: int):
    """Split the matched codeword into (baseband precoder, element rows).

    Per antenna m: |f_m| follows the block-norm ratio and the element row is
    the normalized block (free phases set to 0); an all-zero block gets the
    first canonical row with f_m = 0.  For the non-reconfigurable model the
    rows are fixed to [1] and the baseband precoder carries the codeword.
    """
    c = bundle.c(ctype)
    norm = np.linalg.norm(c)
    if norm == 0.0:
        raise ValueError(f"type-{ctype} response derivative vanishes at this direction")
    m_ant = c.shape[0] // element_dim
    if bundle.kind == "traditional":
        f = np.sqrt(delta) * np.conj(c) / norm
        return f, np.ones((m_ant, 1), dtype=complex)
    blocks = c.reshape(m_ant, element_dim)
    block_norms = np.linalg.norm(blocks, axis=1)
    f = np.sqrt(delta) * block_norms / norm + 0j
    em_rows = np.zeros_like(blocks)
    nonzero = block_norms > 0
    em_rows[nonzero] = blocks[nonzero] / block_norms[nonzero, None]
    em_rows[~nonzero, 0] = 1.0
    return f, em_rows


def em_matrix(em_rows: np.ndarray) -> np.ndarray:
    """Block-diagonal element-precoder operator; codeword = E^T f."""
    m_ant, q = em_rows.shape
    e = np.zeros((m_ant, m_ant * q), dtype=complex)
    for m in range(m_ant):
        e[m, m * q : (m + 1) * q] = np.conj(em_rows[m])
    return e


@dataclass(frozen=True)
class SynthesisCodeword:
    """One codeword: type, steering direction, power share, and factors.

    `w_hat` and `f_hat` are unit-norm; `w` and `f` carry sqrt(delta).
    """

    ctype: int
    theta_el: float
    theta_az: float
    delta: float
    w_hat: np.ndarray
    f_hat: np.ndarray
    em_rows: np.ndarray

    @property
    def w(self) -> np.ndarray:
        return np.sqrt(self.delta) * self.w_hat

    @property
    def f(self) -> np.ndarray:
        return np.sqrt(self.delta) * self.f_hat

    def with_delta(self, delta: float) -> "SynthesisCodeword":
        return replace(self, delta=float(delta))


def make_codeword(model, theta_el: float, theta_az: float, ctype: int, delta: float) -> SynthesisCodeword:
    bundle = response(model, theta_el, theta_az)
    w = ideal_codeword(bundle, ctype, 1.0)
    f, em_rows = factor_codeword(bundle, ctype, 1.0, model.element_dim)
    return SynthesisCodeword(
        ctype=ctype,
        theta_el=float(theta_el),
        theta_az=float(theta_az),
        delta=float(delta),
        w_hat=w,
        f_hat=f,
        em_rows=em_rows,
    )


@dataclass(frozen=True)
class SynthesisCodebook:
    model: object
    codewords: tuple

    def __post_init__(self):
        object.__setattr__(self, "codewords", tuple(self.codewords))
        if not self.codewords:
            raise ValueError("codebook must contain at least one codeword")

    @property
    def size(self) -> int:
        return len(self.codewords)

    @property
    def deltas(self) -> np.ndarray:
        return np.array([cw.delta for cw in self.codewords])

    def w_matrix(self) -> np.ndarray:
        """Transmitted codewords as columns, power shares included."""
        return np.stack([cw.w for cw in self.codewords], axis=1)

    def unit_w_matrix(self) -> np.ndarray:
        return np.stack([cw.w_hat for cw in self.codewords], axis=1)

    def with_deltas(self, deltas) -> "SynthesisCodebook":
        deltas = np.asarray(deltas, dtype=float)
        if deltas.shape != (self.size,):
            raise ValueError(f"expected {self.size} power shares")
        if np.any(deltas < 0):
            raise ValueError("power shares must be nonnegative")
        return SynthesisCodebook(
            model=self.model,
            codewords=tuple(cw.with_delta(d) for cw, d in zip(self.codewords, deltas)),
        )


def build_codebook(
    scenario: Scenario, model, region: Box | None = None, step: float | None = None
) -> SynthesisCodebook:
    """3L codewords: types 1..3 at each grid direction, uniform placeholder
    power shares until the allocation is optimized."""
    grid = angular_grid(scenario, region, step)
    delta = 1.0 / (3 * len(grid))
    codewords = [
        make_codeword(model, el, az, ctype, delta)
        for (el, az) in grid
        for ctype in CODEWORD_TYPES
    ]
    return SynthesisCodebook(model=model, codewords=codewords)


# --------------------------------------------------------------------------
# Serialization
# --------------------------------------------------------------------------

def _interleave(z: np.ndarray) -> list:
    flat = np.asarray(z, dtype=complex).ravel()
    out = np.empty(2 * flat.size)
    out[0::2] = flat.real
    out[1::2] = flat.imag
    return out.tolist()


def _deinterleave(values, shape) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    z = arr[0::2] + 1j * arr[1::2]
    return z.reshape(shape)


def codebook_to_json(codebook: SynthesisCodebook) -> str:
    words = []
    for cw in codebook.codewords:
        words.append(
            {
                "type": cw.ctype,
                "theta_el": cw.theta_el,
                "theta_az": cw.theta_az,
                "delta": cw.delta,
                "f": _interleave(cw.f_hat),
                "em_rows": _interleave(cw.em_rows),
                "em_shape": list(cw.em_rows.shape),
            }
        )
    return json.dumps({"kind": codebook.model.kind, "codewords": words}, indent=2)


def codebook_from_json(text: str, model) -> SynthesisCodebook:
    doc = json.loads(text)
    if doc.get("kind") != model.kind:
        raise ValueError(f"codebook kind {doc.get('kind')!r} does not match model {model.kind!r}")
    codewords = []
    for word in doc["codewords"]:
        em_rows = _deinterleave(word["em_rows"], tuple(word["em_shape"]))
        f_hat = _deinterleave(word["f"], (em_rows.shape[0],))
        w_hat = em_matrix(em_rows).T @ f_hat
        codewords.append(
            SynthesisCodeword(
                ctype=int(word["type"]),
                theta_el=float(word["theta_el"]),
                theta_az=float(word["theta_az"]),
                delta=float(word["delta"]),
                w_hat=w_hat,
                f_hat=f_hat,
                em_rows=em_rows,
            )
        )
    return SynthesisCodebook(model=model, codewords=codewords)


def save_codebook(codebook: SynthesisCodebook, path) -> None:
    Path(path).write_text(codebook_to_json(codebook) + "\n")


def load_codebook(path, model) -> SynthesisCodebook:
    return codebook_from_json(Path(path).read_text(), model)
