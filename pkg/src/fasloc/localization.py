"""Two-stage maximum-likelihood position estimation.

Stage one is coarse: a delay line search (projection of the observation onto
delay vectors over a uniform grid), then a 2D direction search against the
transmitted codewords, composed into a position.  Stage two refines that
position with a derivative-free simplex search on the direct localization
objective.  All searches maximize projection energy, which is where the
least-squares eliminations of the nuisance gains lead.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import scene
from .response_fim import response, response_values
from .scene import Scenario

DEFAULT_N_TAU = 1000
DEFAULT_N_THETA = 500


@dataclass(frozen=True)
class NelderMeadParams:
    reflection: float = 1.0
    expansion: float = 2.0
    contraction: float = 0.5
    shrink: float = 0.5
    initial_scale: float = 0.5  # initial simplex edge, meters
    xtol: float = 1e-4  # simplex diameter stop, meters
    max_evals: int = 500


@dataclass(frozen=True)
class LocalizerConfig:
    n_tau: int = DEFAULT_N_TAU
    n_theta: int = DEFAULT_N_THETA
    tau_bounds: tuple | None = None  # (tau_min, tau_max); None derives from the region
    nelder_mead: NelderMeadParams = field(default_factory=NelderMeadParams)

    def __post_init__(self):
        if self.n_tau < 2 or self.n_theta < 2:
            raise ValueError("delay and direction grids need at least two points")
        if self.tau_bounds is not None and not self.tau_bounds[0] < self.tau_bounds[1]:
            raise ValueError("tau bounds must be increasing")


@dataclass(frozen=True)
class LocalizationResult:
    position: np.ndarray
    tau_coarse: float
    aod_coarse: tuple
    position_coarse: np.ndarray
    objective_coarse: float
    objective_refined: float
    n_evals: int


def nelder_mead(func, x0, params: NelderMeadParams):
    """Maximize func over R^3 with a standard simplex search.

    Keeps the best-ever evaluated point, so the result is never worse than
    the initial one; on a flat objective it returns the initial point.
    """
    dim = len(x0)
    pts = [np.asarray(x0, dtype=float)]
    for k in range(dim):
        step = np.zeros(dim)
        step[k] = params.initial_scale
        pts.append(x0 + step)
    values = [func(p) for p in pts]
    n_evals = dim + 1
    best_x = pts[int(np.argmax(values))].copy()
    best_v = max(values)
    if values[0] >= best_v:  # ties keep the initial point
        best_x, best_v = pts[0].copy(), values[0]

    order = np.argsort(values)[::-1]  # descending: best first
    pts = [pts[i] for i in order]
    values = [values[i] for i in order]

    while n_evals < params.max_evals:
        spread = max(np.linalg.norm(p - pts[0]) for p in pts[1:])
        if spread < params.xtol:
            break
        centroid = np.mean(pts[:-1], axis=0)
        worst = pts[-1]
        reflected = centroid + params.reflection * (centroid - worst)
        f_ref = func(reflected)
        n_evals += 1
        if f_ref > values[0]:
            expanded = centroid + params.expansion * (reflected - centroid)
            f_exp = func(expanded)
            n_evals += 1
            if f_exp > f_ref:
                pts[-1], values[-1] = expanded, f_exp
            else:
                pts[-1], values[-1] = reflected, f_ref
        elif f_ref > values[-2]:
            pts[-1], values[-1] = reflected, f_ref
        else:
            contracted = centroid + params.contraction * (worst - centroid)
            f_con = func(contracted)
            n_evals += 1
            if f_con > values[-1]:
                pts[-1], values[-1] = contracted, f_con
            else:
                for k in range(1, dim + 1):
                    pts[k] = pts[0] + params.shrink * (pts[k] - pts[0])
                    values[k] = func(pts[k])
                    n_evals += 1
        order = np.argsort(values)[::-1]
        pts = [pts[i] for i in order]
        values = [values[i] for i in order]
        if values[0] > best_v:
            best_v = values[0]
            best_x = pts[0].copy()
    return best_x, best_v, n_evals


class Localizer:
    """Precomputed search grids for one scenario/codebook pair.

    Construction is the expensive part (delay dictionary, direction
    dictionary); `localize` is pure and can run concurrently across trials.
    """

    def __init__(self, scenario: Scenario, codebook, config: LocalizerConfig | None = None):
        self.scenario = scenario
        self.codebook = codebook
        self.config = config or LocalizerConfig()
        self.model = codebook.model
        self.w = codebook.w_matrix()  # (dim, n_t)

        bounds = self.config.tau_bounds or scene.delay_bounds(scenario)
        self.tau_grid = np.linspace(bounds[0], bounds[1], self.config.n_tau)
        n = np.arange(scenario.num_subcarriers)
        # delay dictionary, rows are conj(d(tau_k))
        self.delay_dict = np.exp(
            2j * np.pi * np.outer(self.tau_grid, n) * scenario.subcarrier_spacing
        )

        el_min, el_max, az_min, az_max = scene.aod_bounds(scenario)
        el_span = max(el_max - el_min, 1e-9)
        az_span = max(az_max - az_min, 1e-9)
        n_az = int(np.ceil(np.sqrt(self.config.n_theta * az_span / el_span)))
        n_az = min(max(n_az, 2), self.config.n_theta // 2)
        n_el = int(np.ceil(self.config.n_theta / n_az))
        els = np.linspace(el_min, el_max, n_el)
        azs = np.linspace(az_min, az_max, n_az)
        grid_el, grid_az = np.meshgrid(els, azs, indexing="ij")
        self.aod_grid = np.stack([grid_el.ravel(), grid_az.ravel()], axis=-1)
        responses = response_values(self.model, self.aod_grid[:, 0], self.aod_grid[:, 1])
        self.signatures = responses @ self.w  # (n_theta, n_t)
        self.signature_norm_sq = np.sum(np.abs(self.signatures) ** 2, axis=1)

    def coarse_delay(self, observation: np.ndarray) -> float:
        """Delay grid point maximizing the projection energy of the stack."""
        scores = np.sum(np.abs(self.delay_dict @ observation) ** 2, axis=1)
        return float(self.tau_grid[int(np.argmax(scores))])

    def gain_estimates(self, observation: np.ndarray, tau: float) -> np.ndarray:
        """Per-codeword complex gains after projecting out the delay vector."""
        d = scene.delay_vector(tau, self.scenario.num_subcarriers, self.scenario.subcarrier_spacing)
        return (np.conj(d) @ observation) / self.scenario.num_subcarriers

    def coarse_aod(self, observation: np.ndarray, tau: float):
        """Direction grid point maximizing the matched codeword projection."""
        beta = self.gain_estimates(observation, tau)
        with np.errstate(divide="ignore", invalid="ignore"):
            scores = np.abs(np.conj(self.signatures) @ beta) ** 2 / self.signature_norm_sq
        scores = np.where(self.signature_norm_sq > 0.0, scores, -np.inf)
        k = int(np.argmax(scores))
        return float(self.aod_grid[k, 0]), float(self.aod_grid[k, 1])

    def coarse_position(self, tau: float, aod) -> np.ndarray:
        """Range from the delay, direction from the angles, mapped to global frame."""
        direction = scene.aod_direction(aod[0], aod[1])
        local = scene.SPEED_OF_LIGHT * tau * direction
        return self.scenario.bs_rotation @ local + self.scenario.bs_position

    def objective(self, position, observation: np.ndarray) -> float:
        """Direct-localization score |x~^H y~|^2 / ||x~||^2 at a candidate position."""
        p = np.asarray(position, dtype=float)
        delta = p - self.scenario.bs_position
        dist = np.linalg.norm(delta)
        if dist == 0.0:
            return 0.0
        tau = dist / scene.SPEED_OF_LIGHT
        el, az = scene.compute_aod(p, self.scenario)
        gains = response(self.model, el, az).c1 @ self.w  # (n_t,)
        d = scene.delay_vector(tau, self.scenario.num_subcarriers, self.scenario.subcarrier_spacing)
        inner = np.conj(gains) @ (np.conj(d) @ observation)
        norm_sq = self.scenario.num_subcarriers * float(np.sum(np.abs(gains) ** 2))
        if norm_sq == 0.0:
            return 0.0
        return float(np.abs(inner) ** 2 / norm_sq)

    def refine(self, observation: np.ndarray, initial) -> tuple:
        """Simplex maximization of the direct objective from the coarse point."""
        start = self.scenario.uncertainty_region.clamp(initial)
        best_x, best_v, n_evals = nelder_mead(
            lambda p: self.objective(p, observation), start, self.config.nelder_mead
        )
        return best_x, best_v, n_evals

    def localize(self, observation: np.ndarray) -> LocalizationResult:
        tau = self.coarse_delay(observation)
        aod = self.coarse_aod(observation, tau)
        coarse = self.coarse_position(tau, aod)
        obj_coarse = self.objective(self.scenario.uncertainty_region.clamp(coarse), observation)
        refined, obj_refined, n_evals = self.refine(observation, coarse)
        return LocalizationResult(
            position=refined,
            tau_coarse=tau,
            aod_coarse=aod,
            position_coarse=coarse,
            objective_coarse=obj_coarse,
            objective_refined=obj_refined,
            n_evals=n_evals,
        )
