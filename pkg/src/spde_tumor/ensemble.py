"""Monte Carlo ensembles and noise-amplitude sweeps."""
from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .mesh import Grid
from .noise import derive_sample_seed
from .stepper import ModelParams, SimulationError, Trajectory, run_simulation

log = logging.getLogger(__name__)


@dataclass
class EnsembleResult:
    """QoI time series of every sample plus pointwise mean and std.

    ``samples`` has shape ``(n_samples, n_times, n_qoi)``; ``std`` uses the
    unbiased (n-1) normalisation.
    """

    times: np.ndarray
    qoi_names: list[str]
    samples: np.ndarray
    seeds: list[int]
    digests: list[str]

    @property
    def mean(self) -> np.ndarray:
        return self.samples.mean(axis=0)

    @property
    def std(self) -> np.ndarray:
        return self.samples.std(axis=0, ddof=1)

    def column(self, name: str) -> np.ndarray:
        """All samples of one QoI, shape ``(n_samples, n_times)``."""
        return self.samples[:, :, self.qoi_names.index(name)]


def _run_one(args) -> tuple[int, Trajectory]:
    idx, grid, params, seed, qoi_every = args
    try:
        traj = run_simulation(grid, params, seed=seed, qoi_every=qoi_every)
    except SimulationError as exc:
        raise SimulationError(f"sample {idx} (seed {seed}): {exc}", exc.step) from exc
    traj.snapshots = {}
    return idx, traj


def run_ensemble(grid: Grid, params: ModelParams, n_samples: int, base_seed: int = 0,
                 threads: int | None = None, seeds: Sequence[int] | None = None,
                 qoi_every: int = 1) -> EnsembleResult:
    """Run ``n_samples`` independent trajectories.

    Sample ``k`` uses ``derive_sample_seed(base_seed, k)`` unless ``seeds``
    is given. Results are written to per-sample slots, so the output does
    not depend on ``threads``. ``threads=None`` uses the CPU count; 1 runs
    in-process.
    """
    if n_samples < 2:
        raise ValueError("an ensemble needs at least 2 samples")
    if seeds is None:
        seeds = [derive_sample_seed(base_seed, k) for k in range(n_samples)]
    elif len(seeds) != n_samples:
        raise ValueError("need one seed per sample")
    threads = threads or os.cpu_count() or 1
    if threads < 1:
        raise ValueError("threads must be positive")
    jobs = [(k, grid, params, int(s), qoi_every) for k, s in enumerate(seeds)]

    slots: list[Trajectory | None] = [None] * n_samples
    if threads == 1:
        for job in jobs:
            k, traj = _run_one(job)
            slots[k] = traj
    else:
        with ProcessPoolExecutor(max_workers=min(threads, n_samples)) as pool:
            for k, traj in pool.map(_run_one, jobs):
                slots[k] = traj

    first = slots[0]
    samples = np.stack([t.qoi for t in slots])
    return EnsembleResult(
        times=first.times,
        qoi_names=list(first.qoi_names),
        samples=samples,
        seeds=[int(s) for s in seeds],
        digests=[t.noise_digest for t in slots],
    )


@dataclass
class SweepResult:
    nu: list[float]
    trajectories: list[Trajectory]

    @property
    def digests(self) -> list[str]:
        return [t.noise_digest for t in self.trajectories]

    @property
    def same_noise(self) -> bool:
        return len(set(self.digests)) == 1


def run_nu_sweep(grid: Grid, params: ModelParams, nu_list: Sequence[float], seed: int = 0,
                 snapshot_times: Sequence[float] = (), record_noise: bool = False) -> SweepResult:
    """One trajectory per tumor-noise amplitude, all driven by the same seed.

    Raises ``RuntimeError`` if the recorded noise digests differ, since the
    runs would then not be comparable.
    """
    trajs = []
    for nu in nu_list:
        p = replace(params, noise=replace(params.noise, nu=float(nu)))
        trajs.append(run_simulation(grid, p, seed=seed, snapshot_times=snapshot_times,
                                    record_noise=record_noise))
    result = SweepResult([float(v) for v in nu_list], trajs)
    if not result.same_noise:
        raise RuntimeError("noise sequences differ between sweep members")
    return result
