"""Experiment runner: beampattern cuts, bound maps, Monte-Carlo sweeps.

Every experiment consumes an ExperimentConfig and emits CSV (RFC 4180, header
row, full float precision).  Determinism: every random draw derives from the
master seed through a documented splitting rule, so a config and seed fix the
output byte for byte, trials can fan out across worker threads, and adding
trials never changes earlier trials' draws.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import codebook_finite_state, codebook_synthesis, power_alloc
from .localization import Localizer
from .patterns import default_library, load_library
from .response_fim import (
    FiniteStateModel,
    SynthesisModel,
    TraditionalModel,
    beampattern,
    compute_fim,
)
from .scene import (
    Scenario,
    los_path,
    nlos_path,
    synthesize_received,
)
from .shod import ShodBasis

EXPERIMENT_KINDS = (
    "beampattern",
    "peb-map",
    "rmse-vs-snr",
    "peb-vs-q",
    "peb-vs-s",
    "lmr-sweep",
    "codebook-dump",
)

# Seed-splitting rule: trial t of sweep point p draws from
# SeedSequence(entropy=master_seed, spawn_key=(p, t)); setup-level draws
# (codebook construction, scatterer placement) use spawn_key=(k,) with a
# single-element key, so the two families never collide.
SETUP_STREAM_CODEBOOK = 0
SETUP_STREAM_SCATTERERS = 1


def trial_rng(master_seed: int, point_index: int, trial_index: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(entropy=master_seed, spawn_key=(point_index, trial_index))
    )


def setup_rng(master_seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=master_seed, spawn_key=(stream,)))


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    scenario: Scenario
    model_kind: str = "synthesis"  # synthesis | finite-state | traditional
    q: int = 4
    s: int = 64
    library_path: str | None = None
    sweep: tuple = ()
    trials: int = 200
    seed: int = 0
    out: str = "out.csv"
    threads: int = 1
    map_z: float = 2.0
    map_shape: tuple = (5, 5)
    snr_db: float = 5.0
    n_interferers: int = 40
    bcd_grid_points: int = 1000

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if self.trials < 1:
            raise ValueError("need at least one trial")
        if len(self.sweep) > 1 and np.any(np.diff(np.asarray(self.sweep)) <= 0):
            raise ValueError("sweep values must be strictly increasing")


@dataclass(frozen=True)
class TrialRecord:
    point_index: int
    trial_index: int
    p_true: np.ndarray
    p_hat: np.ndarray
    squared_error: float
    objective_coarse: float
    objective_refined: float


def rmse(squared_errors) -> tuple[float, float]:
    """Root-mean-square error and a 95% normal-approximation CI half-width.

    The CI comes from the sample variance of the squared errors, mapped to
    the RMSE scale by the delta method.
    """
    sq = np.asarray(squared_errors, dtype=float)
    if sq.size < 1:
        raise ValueError("need at least one trial")
    mse = float(np.mean(sq))
    value = float(np.sqrt(mse))
    if sq.size < 2 or value == 0.0:
        return value, 0.0
    half_mse = 1.96 * float(np.std(sq, ddof=1)) / np.sqrt(sq.size)
    return value, half_mse / (2.0 * value)


def set_lmr(paths, target_lmr_db: float):
    """Scale every bounce-path gain by one factor so the direct-to-bounce
    power ratio hits the target."""
    los = [p for p in paths if p.kind == "los"]
    nlos = [p for p in paths if p.kind == "nlos"]
    if len(los) != 1:
        raise ValueError("expected exactly one direct path")
    if not nlos:
        raise ValueError("no bounce paths to scale")
    power_nlos = sum(p.rho**2 for p in nlos)
    if power_nlos == 0.0:
        raise ValueError("bounce paths carry no power")
    # evaluated with the negative exponent so huge targets underflow to zero
    # gain instead of overflowing
    factor = los[0].rho / np.sqrt(power_nlos) * float(np.power(10.0, -target_lmr_db / 20.0))
    return los + [p.with_rho(p.rho * factor) for p in nlos]


def build_model(config: ExperimentConfig, scenario: Scenario, q=None, s=None):
    kind = config.model_kind
    if kind == "synthesis":
        return SynthesisModel(array=scenario.array, basis=ShodBasis(q or config.q))
    if kind == "finite-state":
        if config.library_path:
            library = load_library(config.library_path)
            if s is not None:
                library = library.subset(s)
        else:
            library = default_library(s or config.s)
        return FiniteStateModel(array=scenario.array, library=library)
    if kind == "traditional":
        return TraditionalModel(array=scenario.array)
    raise ValueError(f"unknown model kind {kind!r}")


def build_codebook_for(config: ExperimentConfig, scenario: Scenario, model):
    if model.kind == "finite-state":
        return codebook_finite_state.build_codebook(
            scenario,
            model,
            rng=setup_rng(config.seed, SETUP_STREAM_CODEBOOK),
            n_grid=config.bcd_grid_points,
        )
    return codebook_synthesis.build_codebook(scenario, model)


def optimized_codebook(config: ExperimentConfig, scenario: Scenario, model, points=None):
    """Robust codebook with region-minimax power shares."""
    book = build_codebook_for(config, scenario, model)
    problem = power_alloc.build_problem(book, scenario, points=points)
    result = power_alloc.solve(problem)
    return book.with_deltas(result.delta), result


# --------------------------------------------------------------------------
# CSV plumbing
# --------------------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, float):
        return "%.17g" % value
    return str(value)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def _map_trials(func, indices, threads: int):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(func, indices))
    return [func(i) for i in indices]


# --------------------------------------------------------------------------
# Experiments
# --------------------------------------------------------------------------

def run(config: ExperimentConfig) -> list[Path]:
    """Dispatch one experiment; returns the written file paths."""
    runner = {
        "beampattern": _run_beampattern,
        "peb-map": _run_peb_map,
        "rmse-vs-snr": _run_rmse_vs_snr,
        "peb-vs-q": _run_peb_vs_q,
        "peb-vs-s": _run_peb_vs_s,
        "lmr-sweep": _run_lmr_sweep,
        "codebook-dump": _run_codebook_dump,
    }[config.kind]
    return runner(config)


def _run_beampattern(config: ExperimentConfig) -> list[Path]:
    """1D cuts of the three codeword types steered at (90 deg, 0 deg)."""
    scenario = config.scenario
    model = build_model(config, scenario)
    el0, az0 = np.pi / 2, 0.0
    angles = np.deg2rad(np.linspace(-90.0, 90.0, 721))
    rows = []
    grid = None
    if model.kind == "finite-state":
        grid = codebook_finite_state.make_bcd_grid(model, config.bcd_grid_points)
    for ctype in (1, 2, 3):
        if grid is not None:
            cw = codebook_finite_state.make_codeword(
                model, el0, az0, ctype, 1.0, grid,
                rng=setup_rng(config.seed, SETUP_STREAM_CODEBOOK),
            )
        else:
            cw = codebook_synthesis.make_codeword(model, el0, az0, ctype, 1.0)
        for cut, (els, azs) in {
            "elevation": (el0 + angles, np.full_like(angles, az0)),
            "azimuth": (np.full_like(angles, el0), az0 + angles),
        }.items():
            keep = (els >= 0) & (els <= np.pi)
            power = beampattern(cw.w, model, els[keep], azs[keep])
            for offset, p in zip(np.rad2deg(angles[keep]), power):
                rows.append(
                    [model.kind, ctype, cut, offset, p, 10 * np.log10(max(p, 1e-300))]
                )
    path = write_csv(
        config.out,
        ["model", "codeword_type", "cut", "offset_deg", "beampattern", "beampattern_db"],
        rows,
    )
    return [path]


def _run_peb_map(config: ExperimentConfig) -> list[Path]:
    """Bound map over an x-y grid at fixed height: uniform shares vs shares
    optimized for each evaluation point."""
    scenario = config.scenario.with_power(config.scenario.power_for_snr(config.snr_db))
    model = build_model(config, scenario)
    book = build_codebook_for(config, scenario, model)
    region = scenario.uncertainty_region
    nx, ny = config.map_shape
    xs = np.linspace(region.lo[0], region.hi[0], nx)
    ys = np.linspace(region.lo[1], region.hi[1], ny)
    uniform = np.full(book.size, 1.0 / book.size)
    rows = []
    for x in xs:
        for y in ys:
            point = np.array([x, y, config.map_z])
            problem = power_alloc.build_problem(book, scenario, points=[point])
            peb_uniform = problem.point_pebs(uniform)[0]
            result = power_alloc.solve(problem)
            rows.append([x, y, config.map_z, peb_uniform, result.worst_peb])
    path = write_csv(
        config.out, ["x_m", "y_m", "z_m", "peb_uniform_m", "peb_optimal_m"], rows
    )
    return [path]


def _localization_sweep(config, scenario_for_point, paths_for_trial, sweep_values):
    """Shared Monte-Carlo loop: localize `trials` noisy observations per sweep
    point, returning (value, peb, rmse, ci, trials) rows plus trial records."""
    records = []
    rows = []
    for point_index, value in enumerate(sweep_values):
        scenario, codebook, extra = scenario_for_point(point_index, value)
        localizer = Localizer(scenario, codebook)
        peb_here = compute_fim(codebook.w_matrix(), codebook.model, scenario).peb

        def one_trial(trial_index, _point=point_index, _scn=scenario, _book=codebook, _loc=localizer, _extra=extra):
            rng = trial_rng(config.seed, _point, trial_index)
            paths = paths_for_trial(_scn, rng, _extra)
            y = synthesize_received(_scn, paths, _book, rng)
            result = _loc.localize(y)
            err_sq = float(np.sum((result.position - _scn.ue_position) ** 2))
            return TrialRecord(
                point_index=_point,
                trial_index=trial_index,
                p_true=_scn.ue_position,
                p_hat=result.position,
                squared_error=err_sq,
                objective_coarse=result.objective_coarse,
                objective_refined=result.objective_refined,
            )
        trial_records = _map_trials(one_trial, range(config.trials), config.threads)
        records.extend(trial_records)
        value_rmse, ci = rmse([r.squared_error for r in trial_records])
        rows.append([value, peb_here, value_rmse, ci, config.trials])
    return rows, records


def _run_rmse_vs_snr(config: ExperimentConfig) -> list[Path]:
    sweep = config.sweep or (-10.0, -5.0, 0.0, 5.0, 10.0, 15.0)
    base = config.scenario
    model = build_model(config, base)
    book, _ = optimized_codebook(config, base, model)

    def scenario_for_point(_, snr_db):
        scenario = base.with_power(base.power_for_snr(snr_db))
        return scenario, book, None

    def paths_for_trial(scenario, rng, _):
        return [los_path(scenario, phase=rng.uniform(-np.pi, np.pi))]

    rows, _ = _localization_sweep(config, scenario_for_point, paths_for_trial, sweep)
    path = write_csv(
        config.out, ["snr_db", "peb_m", "rmse_m", "rmse_ci_half_m", "trials"], rows
    )
    return [path]


def _nested_bound_sweep(config, sweep, model_for_value, embed):
    """Bound-vs-reconfigurability sweep on nested designs.

    At each sweep value the candidate codewords are the union of all
    codebooks built so far (smaller designs embed exactly into larger ones),
    and the share optimization warm-starts from the embedded previous
    optimum, which makes the reported worst-case bound non-increasing by
    construction.
    """
    scenario = config.scenario.with_power(config.scenario.power_for_snr(config.snr_db))
    rows = []
    atoms = None  # (dim, n) accumulated unit codewords
    prev_delta = None
    for value in sweep:
        model, book = model_for_value(scenario, value)
        new = book.unit_w_matrix()
        atoms = new if atoms is None else np.concatenate([embed(atoms, model), new], axis=1)
        problem = power_alloc.build_problem(_AtomBook(model, atoms), scenario)
        initial = None
        if prev_delta is not None:
            initial = np.concatenate([prev_delta, np.zeros(new.shape[1])])
        result = power_alloc.solve(problem, initial=initial)
        prev_delta = result.delta
        w_cols = atoms * np.sqrt(result.delta)
        peb_ue = compute_fim(w_cols, model, scenario).peb
        rows.append([value, result.worst_peb, peb_ue, atoms.shape[1]])
    return rows


class _AtomBook:
    """Adapter exposing an atom matrix to the allocation builder."""

    def __init__(self, model, atoms):
        self.model = model
        self._atoms = atoms

    def unit_w_matrix(self):
        return self._atoms


def _run_peb_vs_q(config: ExperimentConfig) -> list[Path]:
    sweep = config.sweep or (1, 4, 9, 16)

    def model_for_value(scenario, q):
        model = SynthesisModel(array=scenario.array, basis=ShodBasis(int(q)))
        return model, codebook_synthesis.build_codebook(scenario, model)

    def embed(atoms, model):
        # zero-pad each per-antenna block up to the larger basis size;
        # the padded codeword radiates the same pattern
        dim_old = atoms.shape[0]
        m = model.array.size
        q_old = dim_old // m
        q_new = model.element_dim
        blocks = atoms.reshape(m, q_old, -1)
        padded = np.zeros((m, q_new, atoms.shape[1]), dtype=complex)
        padded[:, :q_old, :] = blocks
        return padded.reshape(m * q_new, atoms.shape[1])

    rows = _nested_bound_sweep(config, sweep, model_for_value, embed)
    scenario = config.scenario
    trad = TraditionalModel(array=scenario.array)
    trad_book, trad_result = optimized_codebook(config, scenario.with_power(
        scenario.power_for_snr(config.snr_db)), trad)
    trad_peb = compute_fim(
        trad_book.w_matrix(), trad, scenario.with_power(scenario.power_for_snr(config.snr_db))
    ).peb
    for row in rows:
        row.extend([trad_result.worst_peb, trad_peb])
    path = write_csv(
        config.out,
        ["q", "worst_peb_m", "peb_at_ue_m", "n_codewords",
         "traditional_worst_peb_m", "traditional_peb_at_ue_m"],
        rows,
    )
    return [path]


def _run_peb_vs_s(config: ExperimentConfig) -> list[Path]:
    sweep = config.sweep or (8, 16, 32, 64)
    sizes = [int(s) for s in sweep]
    if config.library_path:
        full = load_library(config.library_path)
    else:
        full = default_library(max(sizes))
    rng = setup_rng(config.seed, SETUP_STREAM_CODEBOOK)
    warm: dict = {}

    def model_for_value(scenario, s):
        model = FiniteStateModel(array=scenario.array, library=full.subset(int(s)))
        grid = codebook_finite_state.make_bcd_grid(model, config.bcd_grid_points)
        aods = codebook_synthesis.angular_grid(scenario)
        codewords = []
        delta = 1.0 / (3 * len(aods))
        for aod_index, (el, az) in enumerate(aods):
            for ctype in (1, 2, 3):
                cw = codebook_finite_state.make_codeword(
                    model, el, az, ctype, delta, grid, rng=rng,
                    warm_start=warm.get((aod_index, ctype)),
                )
                warm[(aod_index, ctype)] = cw.selection
                codewords.append(cw)
        return model, codebook_finite_state.FiniteStateCodebook(model=model, codewords=codewords)

    def embed(atoms, model):
        # selections over the first states stay valid: scatter blocks into
        # the larger per-antenna state dimension
        m = model.array.size
        s_old = atoms.shape[0] // m
        s_new = model.element_dim
        blocks = atoms.reshape(m, s_old, -1)
        padded = np.zeros((m, s_new, atoms.shape[1]), dtype=complex)
        padded[:, :s_old, :] = blocks
        return padded.reshape(m * s_new, atoms.shape[1])

    rows = _nested_bound_sweep(config, sizes, model_for_value, embed)
    path = write_csv(
        config.out, ["s", "worst_peb_m", "peb_at_ue_m", "n_codewords"], rows
    )
    return [path]


def _run_lmr_sweep(config: ExperimentConfig) -> list[Path]:
    sweep = config.sweep or tuple(float(v) for v in range(0, 50, 5))
    base = config.scenario.with_power(config.scenario.power_for_snr(config.snr_db))
    model = build_model(config, base)
    book, _ = optimized_codebook(config, base, model)
    scatter_rng = setup_rng(config.seed, SETUP_STREAM_SCATTERERS)
    positions = base.uncertainty_region.sample(scatter_rng, config.n_interferers)
    cross_sections = 10.0 ** scatter_rng.uniform(-1.0, 1.0, size=config.n_interferers)

    def scenario_for_point(_, lmr_db):
        return base, book, float(lmr_db)

    def paths_for_trial(scenario, rng, lmr_db):
        paths = [los_path(scenario, phase=rng.uniform(-np.pi, np.pi))]
        for pos, cs in zip(positions, cross_sections):
            paths.append(
                nlos_path(scenario, pos, cs, phase=rng.uniform(-np.pi, np.pi))
            )
        return set_lmr(paths, lmr_db)

    rows, _ = _localization_sweep(config, scenario_for_point, paths_for_trial, sweep)
    path = write_csv(
        config.out, ["lmr_db", "peb_m", "rmse_m", "rmse_ci_half_m", "trials"], rows
    )
    return [path]


def _run_codebook_dump(config: ExperimentConfig) -> list[Path]:
    scenario = config.scenario
    model = build_model(config, scenario)
    book, _ = optimized_codebook(config, scenario, model)
    out = Path(config.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if model.kind == "finite-state":
        codebook_finite_state.save_codebook(book, out)
    else:
        codebook_synthesis.save_codebook(book, out)
    return [out]
