"""Robust minimax power allocation across codewords.

Minimizes the worst-case position error bound over a discretized uncertainty
region with respect to the power shares of the codewords.  Every information
matrix entry is affine in the shares, so each point's bound is convex in them
and the pointwise maximum stays convex; a projected subgradient method with a
Polyak-style step on the probability simplex therefore converges to the
minimax value.  The equivalent epigraph/LMI form is documented in the README;
a brute-force simplex grid search guards correctness in the tests.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .response_fim import fim_channel, jacobian, response
from .scene import Scenario, los_path

DEFAULT_LATTICE = (5, 5, 3)
_POSITION_DIM = 3


def project_to_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {x >= 0, sum x = 1}."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    rho = np.nonzero(u > css / np.arange(1, len(v) + 1))[0][-1]
    return np.maximum(v - css[rho] / (rho + 1), 0.0)


@dataclass(frozen=True)
class AllocationProblem:
    """Precomputed position-domain information pieces.

    `fim_pieces[i, t]` is the information contributed at uncertainty point i
    by unit power on codeword t; the information at shares delta is the
    delta-weighted sum, so every bound evaluation is a 5x5 solve.  `codewords`
    holds the rank-one factors when the problem came from a codebook and is
    None for general unit-trace covariance atoms.
    """

    codewords: np.ndarray | None  # (dim, n_t) unit-norm columns, or None
    points: np.ndarray  # (n_u, 3)
    fim_pieces: np.ndarray  # (n_u, n_t, 5, 5)

    @property
    def num_codewords(self) -> int:
        return self.fim_pieces.shape[1]

    @property
    def num_points(self) -> int:
        return self.points.shape[0]

    def _informations(self, delta: np.ndarray) -> np.ndarray:
        return np.einsum("t,ptij->pij", delta, self.fim_pieces)

    def point_pebs(self, delta) -> np.ndarray:
        """Bound in meters at every uncertainty point; inf where singular."""
        delta = np.asarray(delta, dtype=float)
        infos = self._informations(delta)
        eigs = np.linalg.eigvalsh(infos)
        good = (eigs[:, -1] > 0.0) & (eigs[:, 0] > eigs[:, -1] * 1e-14)
        out = np.full(self.num_points, np.inf)
        if np.any(good):
            inv = np.linalg.inv(infos[good])
            out[good] = np.sqrt(np.einsum("pii->p", inv[:, :3, :3]))
        return out

    def gradient(self, delta: np.ndarray, point: int) -> np.ndarray:
        """Gradient of that point's bound with respect to the shares."""
        j = np.einsum("t,tij->ij", delta, self.fim_pieces[point])
        inv = np.linalg.solve(j, np.eye(5))
        value = np.sqrt(np.trace(inv[:3, :3]))
        middle = inv[:, :_POSITION_DIM] @ inv[:_POSITION_DIM, :]
        return -np.einsum("ij,tij->t", middle, self.fim_pieces[point]) / (2.0 * value)


def build_problem(
    codebook, scenario: Scenario, points=None, lattice=DEFAULT_LATTICE
) -> AllocationProblem:
    """Assemble the allocation problem for a codebook over region points.

    `points` defaults to a regular lattice over the uncertainty region.
    """
    if points is None:
        points = scenario.uncertainty_region.lattice(lattice)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    unit_w = codebook.unit_w_matrix()
    n_t = unit_w.shape[1]
    trace_err = np.abs(np.linalg.norm(unit_w, axis=0) ** 2 - 1.0)
    if np.any(trace_err > 1e-10):
        raise ValueError("codeword covariance factors must have unit trace")
    pieces = _position_pieces(list(unit_w.T), codebook.model, scenario, points)
    return AllocationProblem(codewords=unit_w, points=points, fim_pieces=pieces)


def build_problem_from_covariances(
    covariances, model, scenario: Scenario, points=None, lattice=DEFAULT_LATTICE
) -> AllocationProblem:
    """Allocation problem over general unit-trace PSD covariance atoms."""
    if points is None:
        points = scenario.uncertainty_region.lattice(lattice)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    atoms = [np.asarray(c, dtype=complex) for c in covariances]
    for c in atoms:
        if abs(np.trace(c).real - 1.0) > 1e-10:
            raise ValueError("covariance atoms must have unit trace")
    pieces = _position_pieces(atoms, model, scenario, points)
    return AllocationProblem(codewords=None, points=points, fim_pieces=pieces)


def _position_pieces(atoms, model, scenario: Scenario, points) -> np.ndarray:
    pieces = np.empty((len(points), len(atoms), 5, 5))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for i, p in enumerate(points):
            path = los_path(scenario, target=p)
            bundle = response(model, path.theta_el, path.theta_az)
            t_mat = jacobian(p, scenario)
            for t, atom in enumerate(atoms):
                j_gamma = fim_channel(atom, bundle, path, scenario)
                pieces[i, t] = t_mat @ j_gamma @ t_mat.T
    return pieces


def worst_case_peb(delta, problem: AllocationProblem):
    """(max bound over points, argmax index); ties resolve to the lowest index."""
    pebs = problem.point_pebs(delta)
    idx = int(np.argmax(pebs))
    return float(pebs[idx]), idx


@dataclass(frozen=True)
class AllocationResult:
    delta: np.ndarray
    worst_peb: float
    point_pebs: np.ndarray
    worst_point: int
    iterations: int
    converged: bool
    history: np.ndarray  # incumbent worst-case bound per iteration, non-increasing


def solve(
    problem: AllocationProblem,
    tol: float = 1e-6,
    max_iters: int = 5000,
    patience: int = 250,
    initial=None,
) -> AllocationResult:
    """Minimize the worst-case bound over the simplex of power shares.

    Projected subgradient on the argmax point with a Polyak-style step whose
    optimality-gap surrogate decays over iterations; the incumbent (returned)
    allocation only ever improves.  Stops when the incumbent has not improved
    by `tol` meters for `patience` iterations or at `max_iters`.  `initial`
    seeds the incumbent (uniform shares otherwise), so a feasible warm start
    is never lost.
    """
    n = problem.num_codewords
    if initial is not None:
        delta = project_to_simplex(np.asarray(initial, dtype=float))
        if delta.shape != (n,):
            raise ValueError(f"initial shares must have length {n}")
    else:
        delta = np.full(n, 1.0 / n)
    if n == 1:
        pebs = problem.point_pebs(delta)
        idx = int(np.argmax(pebs))
        if not np.isfinite(pebs[idx]):
            raise ValueError(
                f"allocation infeasible: bound is infinite at point {problem.points[idx]}"
            )
        return AllocationResult(
            delta=delta, worst_peb=float(pebs[idx]), point_pebs=pebs,
            worst_point=idx, iterations=0, converged=True,
            history=np.array([pebs[idx]]),
        )

    value, point = worst_case_peb(delta, problem)
    if not np.isfinite(value) and initial is not None:
        # a bad warm start says nothing about feasibility; retry from uniform
        delta = np.full(n, 1.0 / n)
        value, point = worst_case_peb(delta, problem)
    if not np.isfinite(value):
        raise ValueError(
            f"allocation infeasible: uniform shares give an infinite bound "
            f"at point {problem.points[point]}"
        )
    best_value, best_delta = value, delta.copy()
    history = [best_value]
    stall = 0
    iters = 0
    for k in range(1, max_iters + 1):
        iters = k
        if not np.isfinite(value):
            # singular iterate: back off toward the incumbent
            delta = 0.5 * (delta + best_delta)
            value, point = worst_case_peb(delta, problem)
            history.append(best_value)
            continue
        grad = problem.gradient(delta, point)
        gnorm_sq = float(grad @ grad)
        if gnorm_sq < 1e-30:
            history.append(best_value)
            break
        gap = max(tol, 0.1 * best_value / (1.0 + k / 20.0))
        step = (value - best_value + gap) / gnorm_sq
        delta = project_to_simplex(delta - step * grad)
        value, point = worst_case_peb(delta, problem)
        if value < best_value - tol:
            best_value, best_delta = value, delta.copy()
            stall = 0
        else:
            stall += 1
        history.append(min(best_value, value) if np.isfinite(value) else best_value)
        if stall >= patience:
            break
    pebs = problem.point_pebs(best_delta)
    idx = int(np.argmax(pebs))
    return AllocationResult(
        delta=best_delta,
        worst_peb=float(pebs[idx]),
        point_pebs=pebs,
        worst_point=idx,
        iterations=iters,
        converged=stall >= patience or iters < max_iters,
        history=np.minimum.accumulate(np.asarray(history)),
    )
