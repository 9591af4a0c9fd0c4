"""
Experiment harness: synthetic data generation, fitting, sweeps and evaluation.

Every random quantity comes from a substream of a single integer seed:

    H          SeedSequence(seed, spawn_key=(STREAM_H,))
    data       SeedSequence(seed, spawn_key=(STREAM_DATA, N, snr_key))
    VCA        SeedSequence(seed, spawn_key=(STREAM_VCA,))
    EM         SeedSequence(seed, spawn_key=(STREAM_EM,))

so the mixing matrix is shared by all cells of one seed, and a sweep cell
reproduces exactly what ``generate`` followed by ``fit`` produces for the cell's
derived seed.
"""

import logging
import math
import zlib
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from .backends import BackendKind
from .baselines import METRIC_COLUMNS, MetricRecord, metric_frame, permutation_mse, vca
from .config import ExperimentConfig, config_to_dict
from .em import EmConfig, EmState, run_em, trajectory_frame
from .errors import InvalidParameterError
from .formats import (
    PathLike,
    atomic_write_text,
    read_manifest,
    read_matrix,
    read_observations,
    write_csv,
    write_manifest,
    write_matrix,
    write_observations,
)
from .model import Dataset, MixingMatrix, NoiseModel, generate_data, random_mixing_matrix, sigma2_for_snr_db, snr_db
from .simplex import DirichletParams

logger = logging.getLogger(__name__)

STREAM_H = 0
STREAM_DATA = 1
STREAM_VCA = 2
STREAM_EM = 3

MANIFEST_NAME = "manifest.json"
FAILURE_COLUMNS = ["method", "seed", "snr_db", "n_samples", "m_samples", "error"]
SUMMARY_COLUMNS = [
    "method", "snr_db", "n_samples", "m_samples",
    "median_mse", "q25_mse", "q75_mse", "iqr_mse", "runs", "failures",
]


def snr_key(value: float) -> int:
    """Stable nonnegative integer for an SNR value, usable in a spawn key."""
    return zlib.crc32(repr(float(value)).encode("ascii"))


def derive_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key)))


def derive_seed(seed: int, *key: int) -> int:
    """64-bit integer seed for the substream ``key`` of ``seed``."""
    words = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key)).generate_state(2, np.uint32)
    return (int(words[0]) << 32) | int(words[1])


@dataclass
class Problem:
    """A synthetic unmixing problem with its ground truth."""

    data: Dataset
    prior: DirichletParams
    noise: NoiseModel
    snr_db: float
    seed: int

    @property
    def h_true(self) -> Optional[MixingMatrix]:
        return self.data.h_true


def make_problem(config: ExperimentConfig, seed: int, n_obs: int, target_snr_db: float) -> Problem:
    """Draw H and a dataset for one (seed, N, SNR) cell; sigma2 is set from the SNR for the drawn H."""
    prior = config.prior()
    h = random_mixing_matrix(config.d, config.k, derive_rng(seed, STREAM_H))
    noise = NoiseModel(sigma2_for_snr_db(h, prior, target_snr_db))
    data = generate_data(h, prior, noise, n_obs, derive_rng(seed, STREAM_DATA, n_obs, snr_key(target_snr_db)))
    return Problem(data=data, prior=prior, noise=noise, snr_db=float(target_snr_db), seed=int(seed))


def cmd_generate(
    config: ExperimentConfig,
    seed: int,
    out_dir: Optional[PathLike] = None,
    n_obs: Optional[int] = None,
    target_snr_db: Optional[float] = None,
) -> Path:
    """
    Write H, the observations, the latents and a manifest; return the manifest path.

    Uses the first N and SNR of the config unless given explicitly.
    """
    out = Path(out_dir or config.out_dir)
    n_obs = config.n_obs[0] if n_obs is None else int(n_obs)
    target_snr_db = config.snr_db[0] if target_snr_db is None else float(target_snr_db)
    problem = make_problem(config, seed, n_obs, target_snr_db)

    write_matrix(out / "h_true.txt", problem.h_true)
    write_observations(out / "observations.txt", problem.data.observations)
    write_observations(out / "latents.txt", problem.data.latents)
    manifest = {
        "seed": int(seed),
        "d": config.d,
        "k": config.k,
        "n_obs": n_obs,
        "snr_db": target_snr_db,
        "sigma2": problem.noise.sigma2,
        "alpha": problem.prior.alpha.tolist(),
        "h_true": "h_true.txt",
        "observations": "observations.txt",
        "latents": "latents.txt",
    }
    path = write_manifest(out / MANIFEST_NAME, manifest)
    logger.info(f"Generated N = {n_obs} observations at {target_snr_db} dB (seed {seed}) into {out}")
    return path


def load_problem(manifest_path: PathLike) -> Problem:
    """Rebuild a Problem from a manifest and the files it names."""
    manifest_path = Path(manifest_path)
    manifest = read_manifest(manifest_path)
    missing = [key for key in ("sigma2", "alpha", "observations") if key not in manifest]
    if missing:
        raise InvalidParameterError(f"{manifest_path}: manifest lacks {', '.join(missing)}")
    base = manifest_path.parent
    observations = read_observations(base / manifest["observations"])
    latents = read_observations(base / manifest["latents"]) if manifest.get("latents") else None
    h_true = read_matrix(base / manifest["h_true"]) if manifest.get("h_true") else None
    prior = DirichletParams(manifest["alpha"])
    noise = NoiseModel(manifest["sigma2"])
    data = Dataset(observations=observations, latents=latents, h_true=h_true)
    target = manifest.get("snr_db")
    if target is None and h_true is not None:
        target = snr_db(h_true, prior, noise)
    return Problem(data=data, prior=prior, noise=noise, snr_db=float(target) if target is not None else math.nan,
                   seed=int(manifest.get("seed", 0)))


def method_em_config(method: str, em: EmConfig) -> EmConfig:
    """EM settings for a method: sisa samples from the prior throughout, lisa switches at ``switch_iteration``."""
    method = method.lower()
    if method == "sisa":
        return replace(em, estep_backend=BackendKind.SISA)
    if method == "lisa":
        return replace(em, estep_backend=BackendKind.SISA_THEN_LISA)
    raise InvalidParameterError(f"method {method!r} does not run EM")


@dataclass
class FitResult:
    method: str
    h_init: MixingMatrix
    h_est: MixingMatrix
    state: Optional[EmState] = None
    record: Optional[MetricRecord] = None


def fit_problem(problem: Problem, method: str, em: EmConfig, seed: int, **snapshot: Any) -> FitResult:
    """VCA, then EM from the VCA estimate for sisa and lisa."""
    method = method.lower()
    k = problem.prior.k
    h_init = vca(problem.data, k, derive_rng(seed, STREAM_VCA))
    state = None
    h_est = h_init
    if method != "vca":
        em_config = method_em_config(method, em)
        state = run_em(problem.data, h_init, em_config, problem.prior, problem.noise, derive_seed(seed, STREAM_EM))
        h_est = state.h

    record = None
    if problem.h_true is not None:
        details = {
            "seed": seed,
            "snr_db": problem.snr_db,
            "n_samples": problem.data.n,
            "m_samples": 0 if method == "vca" else em.samples_per_obs,
        }
        details.update(snapshot)
        record = permutation_mse(problem.h_true, h_est, method=method, **details)
    return FitResult(method=method, h_init=h_init, h_est=h_est, state=state, record=record)


def cmd_fit(
    manifest_path: PathLike,
    method: str,
    em: EmConfig,
    seed: Optional[int] = None,
    out_dir: Optional[PathLike] = None,
) -> FitResult:
    """
    Fit one dataset and write ``h_est.txt``, ``trajectory.csv`` and, when the
    truth is known, ``metrics.csv``.

    Args:
        manifest_path: Manifest written by ``cmd_generate``
        method: One of vca, sisa, lisa
        em: EM settings for the sampling methods
        seed: Seed for VCA and the E-step substreams; defaults to the manifest's
        out_dir: Output directory; defaults to the manifest's directory

    Returns:
        FitResult with the VCA start, the estimate, the EM state (None for vca)
        and the metric record when the truth is known
    """
    problem = load_problem(manifest_path)
    seed = problem.seed if seed is None else int(seed)
    out = Path(out_dir) if out_dir is not None else Path(manifest_path).parent
    logger.info(f"Fitting {manifest_path} with {method} (seed {seed})")
    result = fit_problem(problem, method, em, seed)

    write_matrix(out / "h_est.txt", result.h_est)
    write_csv(out / "trajectory.csv", trajectory_frame(result.state or EmState(h=result.h_est)))
    if result.record is not None:
        write_csv(out / "metrics.csv", metric_frame([result.record]))
        logger.info(f"{method} permutation MSE {result.record.mse:.6g}")
    return result


def cmd_eval(truth_path: PathLike, estimate_path: PathLike, out_path: Optional[PathLike] = None,
             method: str = "eval") -> MetricRecord:
    """Permutation MSE between two matrix files."""
    record = permutation_mse(read_matrix(truth_path), read_matrix(estimate_path), method=method)
    if out_path is not None:
        write_csv(out_path, metric_frame([record]))
    return record


@dataclass
class SweepResult:
    results: pd.DataFrame
    summary: pd.DataFrame
    failures: pd.DataFrame
    paths: Dict[str, Path] = field(default_factory=dict)


def _cell_rows(config: ExperimentConfig, master_seed: int, rep: int, n_obs: int,
               target_snr_db: float) -> Tuple[List[Dict[str, Any]], List[Dict[str, Any]]]:
    """All method/M rows of one (seed, N, SNR) cell, in a fixed order."""
    seed = derive_seed(master_seed, rep)
    runs = []
    for method in config.methods:
        for m in ([0] if method == "vca" else config.m_samples):
            runs.append((method, m))

    def row(method: str, m: int, mse: float) -> Dict[str, Any]:
        return {"method": method, "seed": rep, "snr_db": float(target_snr_db), "n_samples": n_obs,
                "m_samples": m, "mse": mse}

    rows, failures = [], []
    try:
        problem = make_problem(config, seed, n_obs, target_snr_db)
    except Exception as exc:
        logger.error(f"Sweep cell seed={rep} N={n_obs} SNR={target_snr_db} failed to generate: {exc}")
        for method, m in runs:
            rows.append(row(method, m, math.nan))
            failures.append({**row(method, m, math.nan), "error": f"{type(exc).__name__}: {exc}"})
        return rows, failures

    for method, m in runs:
        em = replace(config.em, samples_per_obs=m) if m else config.em
        try:
            result = fit_problem(problem, method, em, seed)
            rows.append(row(method, m, result.record.mse))
        except Exception as exc:
            logger.error(f"Sweep cell {method} seed={rep} N={n_obs} SNR={target_snr_db} M={m} failed: {exc}")
            rows.append(row(method, m, math.nan))
            failures.append({**row(method, m, math.nan), "error": f"{type(exc).__name__}: {exc}"})
    logger.info(f"Sweep cell seed={rep} N={n_obs} SNR={target_snr_db} done")
    return rows, failures


def summarize_results(frame: pd.DataFrame) -> pd.DataFrame:
    """Median MSE and interquartile range per (method, SNR, N, M) cell."""
    keys = ["method", "snr_db", "n_samples", "m_samples"]
    if frame.empty:
        return pd.DataFrame(columns=SUMMARY_COLUMNS)
    grouped = frame.groupby(keys, sort=True)["mse"]
    summary = pd.DataFrame({
        "median_mse": grouped.median(),
        "q25_mse": grouped.quantile(0.25),
        "q75_mse": grouped.quantile(0.75),
        "runs": grouped.count(),
        "failures": grouped.apply(lambda s: int(s.isna().sum())),
    }).reset_index()
    summary["iqr_mse"] = summary["q75_mse"] - summary["q25_mse"]
    return summary[SUMMARY_COLUMNS]


def gnuplot_blocks(summary: pd.DataFrame) -> str:
    """
    One data block per method, separated by two blank lines (gnuplot ``index``).

    The x column is the SNR when the sweep varies SNR at a single N, otherwise N.
    """
    by_snr = summary["snr_db"].nunique() > 1 and summary["n_samples"].nunique() == 1
    x = "snr_db" if by_snr else "n_samples"
    blocks = []
    for method, group in summary.groupby("method", sort=True):
        lines = [f"# method {method}", f"# {x} m_samples median_mse q25_mse q75_mse"]
        for _, r in group.sort_values([x, "m_samples"]).iterrows():
            lines.append(f"{r[x]:.17g} {int(r['m_samples'])} {r['median_mse']:.17g} "
                         f"{r['q25_mse']:.17g} {r['q75_mse']:.17g}")
        blocks.append("\n".join(lines))
    return "\n\n\n".join(blocks) + "\n"


def cmd_sweep(config: ExperimentConfig, master_seed: int, out_dir: Optional[PathLike] = None,
              jobs: Optional[int] = None) -> SweepResult:
    """
    Run the cartesian product method x N x SNR x M x seed.

    Cells run concurrently up to ``jobs``; rows are written in cell order so the
    CSVs do not depend on ``jobs``. Failed cells keep a row with an empty MSE
    and are listed with their error in ``failures.csv``.

    Args:
        config: Grid and EM settings
        master_seed: Seed every data and E-step stream is derived from
        out_dir: Output directory; defaults to ``config.out_dir``
        jobs: Concurrent cells; defaults to ``config.jobs``, else 1

    Returns:
        SweepResult with the per-cell results, the summary, the failures and
        the written paths
    """
    out = Path(out_dir or config.out_dir)
    jobs = jobs or config.jobs or 1
    cells = [(rep, n, s) for rep in config.seeds for n in config.n_obs for s in config.snr_db]
    logger.info(f"Sweep over {len(cells)} cells x {len(config.methods)} methods with {jobs} jobs")

    outputs: List[Optional[Tuple[List[Dict[str, Any]], List[Dict[str, Any]]]]] = [None] * len(cells)
    if jobs <= 1:
        for i, cell in enumerate(cells):
            outputs[i] = _cell_rows(config, master_seed, *cell)
    else:
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            futures = {executor.submit(_cell_rows, config, master_seed, *cell): i for i, cell in enumerate(cells)}
            for future in as_completed(futures):
                outputs[futures[future]] = future.result()

    rows = [r for cell_rows, _ in outputs for r in cell_rows]
    failed = [f for _, cell_failures in outputs for f in cell_failures]
    results = pd.DataFrame(rows, columns=METRIC_COLUMNS)
    failures = pd.DataFrame(failed, columns=FAILURE_COLUMNS)
    summary = summarize_results(results)

    paths = {
        "results": write_csv(out / "results.csv", results),
        "summary": write_csv(out / "summary.csv", summary),
        "config": write_manifest(out / "sweep_config.json", {**config_to_dict(config), "master_seed": master_seed}),
    }
    if not failures.empty:
        paths["failures"] = write_csv(out / "failures.csv", failures)
        logger.warning(f"{len(failures)} of {len(results)} sweep runs failed; see {paths['failures']}")
    if config.gnuplot:
        paths["gnuplot"] = atomic_write_text(out / "summary.dat", gnuplot_blocks(summary))
    return SweepResult(results=results, summary=summary, failures=failures, paths=paths)


def format_summary(summary: pd.DataFrame) -> str:
    """Fixed-width table of the sweep summary."""
    lines = [
        "=" * 80,
        "SWEEP SUMMARY (permutation MSE)",
        "=" * 80,
        f"{'Method':<8} {'SNR dB':>8} {'N':>8} {'M':>6} {'Median':>12} {'IQR':>12} {'Runs':>5} {'Failed':>6}",
        "-" * 80,
    ]
    for _, r in summary.iterrows():
        lines.append(
            f"{r['method']:<8} {r['snr_db']:>8.2f} {int(r['n_samples']):>8d} {int(r['m_samples']):>6d} "
            f"{r['median_mse']:>12.5g} {r['iqr_mse']:>12.5g} {int(r['runs']):>5d} {int(r['failures']):>6d}"
        )
    lines.append("=" * 80)
    return "\n".join(lines)

