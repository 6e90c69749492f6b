"""Codebooks for the finite-state element model.

The matched codewords of the synthesis construction are not admissible here:
one-hot state selection per antenna cannot realize an arbitrary joint vector.
Each codeword is therefore built in two stages: a per-antenna state selection
chosen by block coordinate descent to match the ideal codeword's beampattern
on an angular grid, then the closed-form baseband precoder for that fixed
selection.  The robust codebook stacks three types over the same angular grid
rule as the synthesis codebook.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .codebook_synthesis import CODEWORD_TYPES, angular_grid
from .patterns import direction_aod, fibonacci_hemisphere
from .response_fim import ResponseBundle, response, response_values
from .scene import Box, Scenario

DEFAULT_GRID_POINTS = 1000
DEFAULT_BCD_EPS = 1e-9
DEFAULT_BCD_MAX_ITERS = 50


def ideal_codeword(bundle: ResponseBundle, ctype: int, delta: float) -> np.ndarray:
    """Non-admissible matched codeword sqrt(delta) c^(i)* / ||c^(i)||."""
    if ctype not in CODEWORD_TYPES:
        raise ValueError(f"codeword type must be 1, 2, or 3, got {ctype}")
    c = bundle.c(ctype)
    norm = np.linalg.norm(c)
    if norm == 0.0:
        raise ValueError(f"type-{ctype} response derivative vanishes at this direction")
    return np.sqrt(delta) * np.conj(c) / norm


def _selected_entries(selection: np.ndarray, vec: np.ndarray, s: int) -> np.ndarray:
    idx = np.arange(len(selection)) * s + selection
    return vec[idx]


def bb_precoder(selection, bundle: ResponseBundle, ctype: int, delta: float, s: int) -> np.ndarray:
    """Closed-form baseband precoder under a fixed state selection.

    f = sqrt(delta) (E c^(i)*) / ||E c^(i)|| where E picks each antenna's
    selected state entry.
    """
    selection = np.asarray(selection, dtype=int)
    picked = _selected_entries(selection, bundle.c(ctype), s)
    norm = np.linalg.norm(picked)
    if norm == 0.0:
        raise ValueError(
            f"type-{ctype} selection at ({bundle.theta_el:.4f}, {bundle.theta_az:.4f}) "
            "projects to zero; no baseband precoder exists"
        )
    return np.sqrt(delta) * np.conj(picked) / norm


def admissible_codeword(selection, bundle: ResponseBundle, ctype: int, delta: float, s: int) -> np.ndarray:
    """Joint codeword realized by the selection: the masked conjugate response."""
    selection = np.asarray(selection, dtype=int)
    c = bundle.c(ctype)
    mask = np.zeros(c.shape[0], dtype=bool)
    mask[np.arange(len(selection)) * s + selection] = True
    masked = np.where(mask, np.conj(c), 0.0)
    norm = np.linalg.norm(masked)
    if norm == 0.0:
        raise ValueError("selection projects to zero")
    return np.sqrt(delta) * masked / norm


@dataclass(frozen=True)
class BcdGrid:
    """Angular grid and its stacked responses used by the matching objective."""

    thetas: np.ndarray  # (n_g, 2) as (theta_el, theta_az)
    values: np.ndarray  # (n_g, M*S) rows c(theta_n)

    @property
    def size(self) -> int:
        return self.thetas.shape[0]


def make_bcd_grid(model, n_points: int = DEFAULT_GRID_POINTS) -> BcdGrid:
    """Front-hemisphere Fibonacci grid with the model's responses attached."""
    directions = fibonacci_hemisphere(n_points)
    el, az = direction_aod(directions)
    values = response_values(model, el, az)
    return BcdGrid(thetas=np.stack([el, az], axis=-1), values=values)


def bcd_objective(selection, bundle: ResponseBundle, ctype: int, grid: BcdGrid, s: int) -> float:
    """Beampattern mismatch between the selection's codeword and the ideal one."""
    selection = np.asarray(selection, dtype=int)
    c = bundle.c(ctype)
    idx = np.arange(len(selection)) * s + selection
    picked = np.zeros_like(c)
    picked[idx] = np.conj(c[idx])
    norm = np.linalg.norm(picked)
    if norm == 0.0:
        return np.inf
    target = grid.values @ (np.conj(c) / np.linalg.norm(c))
    return float(np.linalg.norm(grid.values @ picked / norm - target) ** 2)


def bcd_optimize(
    bundle: ResponseBundle,
    ctype: int,
    model,
    grid: BcdGrid,
    eps: float = DEFAULT_BCD_EPS,
    max_iters: int = DEFAULT_BCD_MAX_ITERS,
    rng: np.random.Generator | None = None,
    init: str = "random",
):
    """Per-antenna exhaustive sweeps minimizing the beampattern mismatch.

    Antennas are updated in index order; each update evaluates all S states
    in O(S n_g) through rank-one edits of the accumulated grid response.  The
    recorded objective trace is non-increasing by construction.  Terminates
    when the objective changes by at most eps between sweeps or after
    max_iters sweeps.  `init` is "random" (seeded), "greedy" (per antenna,
    the state with the largest response magnitude), or an explicit selection
    array used as a warm start.

    Returns (selection, trace) with trace[0] the initial objective.
    """
    s = model.element_dim
    m_ant = model.array.size
    c = bundle.c(ctype)
    c_norm = np.linalg.norm(c)
    if c_norm == 0.0:
        raise ValueError(f"type-{ctype} response derivative vanishes at this direction")
    blocks = np.conj(c).reshape(m_ant, s)  # conjugate entries per antenna/state
    target = grid.values @ (np.conj(c) / c_norm)  # (n_g,)
    target_sq = float(np.real(np.vdot(target, target)))
    grid_blocks = grid.values.reshape(grid.size, m_ant, s)

    if isinstance(init, str) and init == "greedy":
        selection = np.argmax(np.abs(blocks), axis=1).astype(int)
    elif isinstance(init, str) and init == "random":
        if rng is None:
            raise ValueError("random initialization needs an rng")
        selection = np.asarray(rng.integers(0, s, size=m_ant), dtype=int)
    elif not isinstance(init, str):
        selection = np.asarray(init, dtype=int).copy()
        if selection.shape != (m_ant,) or selection.min() < 0 or selection.max() >= s:
            raise ValueError("warm-start selection has the wrong shape or range")
    else:
        raise ValueError(f"unknown init {init!r}")

    # accumulated grid response and squared norm of the current selection
    picked_vals = blocks[np.arange(m_ant), selection]  # (m_ant,)
    u = grid_blocks[:, np.arange(m_ant), selection] @ picked_vals
    norm_sq = float(np.sum(np.abs(picked_vals) ** 2))

    def objective_from(u_vec, nsq):
        if nsq <= 0.0:
            return np.inf
        root = np.sqrt(nsq)
        return (
            float(np.real(np.vdot(u_vec, u_vec))) / nsq
            - 2.0 * float(np.real(np.vdot(target, u_vec))) / root
            + target_sq
        )

    current = objective_from(u, norm_sq)
    trace = [current]
    for _ in range(max_iters):
        previous = current
        for m in range(m_ant):
            old_state = selection[m]
            old_val = blocks[m, old_state]
            u_wo = u - old_val * grid_blocks[:, m, old_state]
            nsq_wo = norm_sq - abs(old_val) ** 2
            cand_u = u_wo[:, None] + grid_blocks[:, m, :] * blocks[m][None, :]
            cand_nsq = nsq_wo + np.abs(blocks[m]) ** 2
            with np.errstate(divide="ignore", invalid="ignore"):
                roots = np.sqrt(np.maximum(cand_nsq, 0.0))
                vals = (
                    np.sum(np.abs(cand_u) ** 2, axis=0) / cand_nsq
                    - 2.0 * np.real(np.conj(target) @ cand_u) / roots
                    + target_sq
                )
            vals = np.where(cand_nsq > 0.0, vals, np.inf)
            best = int(np.argmin(vals))  # ties resolve to the lowest state index
            selection[m] = best
            u = u_wo + blocks[m, best] * grid_blocks[:, m, best]
            norm_sq = nsq_wo + abs(blocks[m, best]) ** 2
            current = min(current, float(vals[best]))
            trace.append(current)
        if abs(previous - current) <= eps:
            break
    return selection.copy(), np.asarray(trace)


class _MatchState:
    """Shared tensors for fast mismatch evaluation under selection edits."""

    def __init__(self, bundle, ctype, model, grid):
        s = model.element_dim
        m_ant = model.array.size
        c = bundle.c(ctype)
        c_norm = np.linalg.norm(c)
        if c_norm == 0.0:
            raise ValueError(f"type-{ctype} response derivative vanishes at this direction")
        self.s = s
        self.m_ant = m_ant
        blocks = np.conj(c).reshape(m_ant, s)
        self.entry_sq = np.abs(blocks) ** 2
        self.target = grid.values @ (np.conj(c) / c_norm)
        self.target_sq = float(np.real(np.vdot(self.target, self.target)))
        # per-antenna grid columns weighted by the conjugate response entries
        self.weighted = grid.values.reshape(grid.size, m_ant, s) * blocks[None, :, :]

    def accumulate(self, selection):
        picked = self.weighted[:, np.arange(self.m_ant), selection]
        u = picked.sum(axis=1)
        nsq = float(self.entry_sq[np.arange(self.m_ant), selection].sum())
        return u, nsq

    def objective(self, u, nsq):
        if nsq <= 0.0:
            return np.inf
        return (
            float(np.real(np.vdot(u, u))) / nsq
            - 2.0 * float(np.real(np.vdot(self.target, u))) / np.sqrt(nsq)
            + self.target_sq
        )


def _tuple_sweep(selection, state: _MatchState, antennas) -> tuple[np.ndarray, float]:
    """Jointly re-pick the states of a small antenna tuple, others fixed.

    Exhausts the S^k joint candidates of the tuple through rank-k edits of the
    accumulated grid response; k is 2 or 3 in practice.  Returns the improved
    selection and objective (unchanged if no candidate is better).
    """
    selection = np.asarray(selection, dtype=int).copy()
    k = len(antennas)
    s = state.s
    u, norm_sq = state.accumulate(selection)
    u_wo = u - sum(state.weighted[:, m, selection[m]] for m in antennas)
    nsq_wo = norm_sq - sum(state.entry_sq[m, selection[m]] for m in antennas)

    shape = (s,) * k
    quad = np.full(shape, float(np.real(np.vdot(u_wo, u_wo))))
    cross = np.full(shape, float(np.real(np.vdot(state.target, u_wo))))
    nsq = np.full(shape, nsq_wo)
    axes = [tuple(slice(None) if j == i else None for j in range(k)) for i in range(k)]
    cols = [state.weighted[:, m, :] for m in antennas]
    for i, (m, w) in enumerate(zip(antennas, cols)):
        quad = quad + (2.0 * np.real(np.conj(u_wo) @ w) + np.sum(np.abs(w) ** 2, axis=0))[axes[i]]
        cross = cross + np.real(np.conj(state.target) @ w)[axes[i]]
        nsq = nsq + state.entry_sq[m][axes[i]]
    # pairwise gram terms, each (s, s) broadcast onto its two grid axes
    for i in range(k):
        for j in range(i + 1, k):
            gram = 2.0 * np.real(cols[i].conj().T @ cols[j])
            quad = quad + gram.reshape(tuple(s if t in (i, j) else 1 for t in range(k)))
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = quad / nsq - 2.0 * cross / np.sqrt(np.maximum(nsq, 0.0)) + state.target_sq
    vals = np.where(nsq > 0.0, vals, np.inf)
    flat = int(np.argmin(vals))
    combo = np.unravel_index(flat, shape)
    best = float(vals[combo])
    current = state.objective(u, norm_sq)
    if best < current - 1e-13:
        for m, st in zip(antennas, combo):
            selection[m] = int(st)
        return selection, best
    return selection, current


# Cap on the joint candidates one neighborhood pass may evaluate.  Depth-2
# passes fit at production sizes; on brute-force-size instances the ladder
# reaches depth M, where a pass is full enumeration.
NEIGHBORHOOD_BUDGET = 2_000_000


def _neighborhood_depths(m_ant: int, s: int) -> list[int]:
    from math import comb

    depths = []
    for k in range(2, m_ant + 1):
        if comb(m_ant, k) * s**k > NEIGHBORHOOD_BUDGET:
            break
        depths.append(k)
    return depths


def _neighborhood_passes(selection, state: _MatchState, current: float):
    """Alternate k-opt passes over all affordable depths until stable."""
    from itertools import combinations

    depths = _neighborhood_depths(state.m_ant, state.s)
    improved = True
    trace = []
    while improved:
        improved = False
        for k in depths:
            for antennas in combinations(range(state.m_ant), k):
                selection, value = _tuple_sweep(selection, state, antennas)
                if value < current - 1e-13:
                    current = value
                    trace.append(current)
                    improved = True
    return selection, current, trace


def optimize_selection(
    bundle: ResponseBundle,
    ctype: int,
    model,
    grid: BcdGrid,
    rng: np.random.Generator | None = None,
    eps: float = DEFAULT_BCD_EPS,
    max_iters: int = DEFAULT_BCD_MAX_ITERS,
    n_random: int = 3,
    refine: bool = True,
    warm_start=None,
):
    """Multi-start BCD with budgeted variable-neighborhood refinement.

    The plain per-antenna descent has non-global fixed points (state swaps and
    coordinated flips that no single-antenna move can cross), so the shipped
    optimizer restarts it from a stratified family: the greedy selection,
    every constant selection, prefix pairs (the first two antennas' joint
    states, when S^2 is small), seeded random picks, and an optional warm
    start.  The best run is then refined by 2-opt/3-opt antenna-tuple sweeps
    whose candidate counts fit fixed budgets, re-running single-antenna sweeps
    after every improvement.  Each inner run is exactly the coordinate descent
    of `bcd_optimize`; the returned trace is the winning run's extended by the
    refinement values, so it is non-increasing end to end.
    """
    s = model.element_dim
    m_ant = model.array.size
    blocks_abs = np.abs(np.conj(bundle.c(ctype)).reshape(m_ant, s))
    greedy = np.argmax(blocks_abs, axis=1).astype(int)
    starts: list = [greedy]
    starts += [np.full(m_ant, k, dtype=int) for k in range(s)]
    if m_ant >= 2 and s * s <= 256:
        for s1 in range(s):
            for s2 in range(s):
                st = greedy.copy()
                st[0], st[1] = s1, s2
                starts.append(st)
    if n_random > 0:
        if rng is None:
            raise ValueError("random starts need an rng")
        starts += [np.asarray(rng.integers(0, s, size=m_ant)) for _ in range(n_random)]
    if warm_start is not None:
        starts.append(np.asarray(warm_start, dtype=int))

    best_sel, best_trace = None, None
    for init in starts:
        sel, trace = bcd_optimize(
            bundle, ctype, model, grid, eps=eps, max_iters=max_iters, init=init
        )
        if best_trace is None or trace[-1] < best_trace[-1]:
            best_sel, best_trace = sel, trace

    trace = list(best_trace)
    if refine:
        state = _MatchState(bundle, ctype, model, grid)
        while True:
            sel_n, value, sub_trace = _neighborhood_passes(best_sel, state, trace[-1])
            if value >= trace[-1] - 1e-13:
                break
            trace.extend(sub_trace)
            sel_s, trace_s = bcd_optimize(
                bundle, ctype, model, grid, eps=eps, max_iters=max_iters, init=sel_n
            )
            if trace_s[-1] <= value:
                best_sel = sel_s
                trace.append(trace_s[-1])
            else:
                best_sel = sel_n
    return np.asarray(best_sel, dtype=int), np.minimum.accumulate(np.asarray(trace))


@dataclass(frozen=True)
class FiniteStateCodeword:
    """One admissible codeword: selection, precoder factors, and diagnostics."""

    ctype: int
    theta_el: float
    theta_az: float
    delta: float
    selection: np.ndarray  # per-antenna state index, 0-based
    f_hat: np.ndarray  # unit-norm baseband precoder
    w_hat: np.ndarray  # unit-norm joint codeword
    objective: float  # final beampattern mismatch
    trace: np.ndarray  # BCD objective trace

    @property
    def w(self) -> np.ndarray:
        return np.sqrt(self.delta) * self.w_hat

    @property
    def f(self) -> np.ndarray:
        return np.sqrt(self.delta) * self.f_hat

    def with_delta(self, delta: float) -> "FiniteStateCodeword":
        return replace(self, delta=float(delta))


@dataclass(frozen=True)
class FiniteStateCodebook:
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
        return np.stack([cw.w for cw in self.codewords], axis=1)

    def unit_w_matrix(self) -> np.ndarray:
        return np.stack([cw.w_hat for cw in self.codewords], axis=1)

    def with_deltas(self, deltas) -> "FiniteStateCodebook":
        deltas = np.asarray(deltas, dtype=float)
        if deltas.shape != (self.size,):
            raise ValueError(f"expected {self.size} power shares")
        if np.any(deltas < 0):
            raise ValueError("power shares must be nonnegative")
        return FiniteStateCodebook(
            model=self.model,
            codewords=tuple(cw.with_delta(d) for cw, d in zip(self.codewords, deltas)),
        )


def make_codeword(
    model,
    theta_el: float,
    theta_az: float,
    ctype: int,
    delta: float,
    grid: BcdGrid,
    rng: np.random.Generator | None = None,
    eps: float = DEFAULT_BCD_EPS,
    max_iters: int = DEFAULT_BCD_MAX_ITERS,
    warm_start=None,
) -> FiniteStateCodeword:
    bundle = response(model, theta_el, theta_az)
    s = model.element_dim
    selection, trace = optimize_selection(
        bundle, ctype, model, grid, rng=rng, eps=eps, max_iters=max_iters,
        warm_start=warm_start,
    )
    f = bb_precoder(selection, bundle, ctype, 1.0, s)
    w = admissible_codeword(selection, bundle, ctype, 1.0, s)
    return FiniteStateCodeword(
        ctype=ctype,
        theta_el=float(theta_el),
        theta_az=float(theta_az),
        delta=float(delta),
        selection=selection,
        f_hat=f,
        w_hat=w,
        objective=float(trace[-1]),
        trace=trace,
    )


def build_codebook(
    scenario: Scenario,
    model,
    rng: np.random.Generator,
    region: Box | None = None,
    step: float | None = None,
    grid: BcdGrid | None = None,
    n_grid: int = DEFAULT_GRID_POINTS,
    eps: float = DEFAULT_BCD_EPS,
    max_iters: int = DEFAULT_BCD_MAX_ITERS,
) -> FiniteStateCodebook:
    """3L admissible codewords over the region's angular grid."""
    aods = angular_grid(scenario, region, step)
    if grid is None:
        grid = make_bcd_grid(model, n_grid)
    delta = 1.0 / (3 * len(aods))
    codewords = [
        make_codeword(model, el, az, ctype, delta, grid, rng=rng, eps=eps,
                      max_iters=max_iters)
        for (el, az) in aods
        for ctype in CODEWORD_TYPES
    ]
    return FiniteStateCodebook(model=model, codewords=codewords)


# --------------------------------------------------------------------------
# Serialization
# --------------------------------------------------------------------------

def codebook_to_json(codebook: FiniteStateCodebook) -> str:
    words = []
    for cw in codebook.codewords:
        words.append(
            {
                "type": cw.ctype,
                "theta_el": cw.theta_el,
                "theta_az": cw.theta_az,
                "delta": cw.delta,
                "selection": cw.selection.tolist(),
                "f": np.c_[cw.f_hat.real, cw.f_hat.imag].ravel().tolist(),
                "objective": cw.objective,
                "trace": cw.trace.tolist(),
            }
        )
    return json.dumps({"kind": codebook.model.kind, "codewords": words}, indent=2)


def codebook_from_json(text: str, model) -> FiniteStateCodebook:
    doc = json.loads(text)
    if doc.get("kind") != model.kind:
        raise ValueError(f"codebook kind {doc.get('kind')!r} does not match model {model.kind!r}")
    s = model.element_dim
    codewords = []
    for word in doc["codewords"]:
        flat = np.asarray(word["f"], dtype=float)
        f_hat = flat[0::2] + 1j * flat[1::2]
        selection = np.asarray(word["selection"], dtype=int)
        # scatter the baseband precoder into the selected slots
        w_hat = np.zeros(model.dim, dtype=complex)
        w_hat[np.arange(len(selection)) * s + selection] = f_hat
        codewords.append(
            FiniteStateCodeword(
                ctype=int(word["type"]),
                theta_el=float(word["theta_el"]),
                theta_az=float(word["theta_az"]),
                delta=float(word["delta"]),
                selection=selection,
                f_hat=f_hat,
                w_hat=w_hat,
                objective=float(word["objective"]),
                trace=np.asarray(word["trace"], dtype=float),
            )
        )
    return FiniteStateCodebook(model=model, codewords=codewords)


def save_codebook(codebook: FiniteStateCodebook, path) -> None:
    Path(path).write_text(codebook_to_json(codebook) + "\n")


def load_codebook(path, model) -> FiniteStateCodebook:
    return codebook_from_json(Path(path).read_text(), model)
