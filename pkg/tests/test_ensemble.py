import numpy as np
import pytest

from spde_tumor.ensemble import run_ensemble, run_nu_sweep
from spde_tumor.mesh import Grid
from spde_tumor.noise import derive_sample_seed
from spde_tumor.stepper import ModelParams


@pytest.fixture
def tiny():
    return Grid(6, 6), ModelParams(dt=0.01, t_end=0.03)


class TestEnsemble:
    def test_shapes_and_stats(self, tiny):
        g, p = tiny
        res = run_ensemble(g, p, 4, base_seed=5, threads=1)
        assert res.samples.shape == (4, 4, 2)
        np.testing.assert_allclose(res.mean, res.samples.mean(axis=0))
        np.testing.assert_allclose(res.std, res.samples.std(axis=0, ddof=1))
        assert res.seeds == [derive_sample_seed(5, k) for k in range(4)]
        assert len(set(res.digests)) == 4

    def test_thread_count_does_not_matter(self, tiny):
        g, p = tiny
        a = run_ensemble(g, p, 3, base_seed=1, threads=1)
        b = run_ensemble(g, p, 3, base_seed=1, threads=3)
        assert np.array_equal(a.samples, b.samples)

    def test_explicit_seeds(self, tiny):
        g, p = tiny
        res = run_ensemble(g, p, 2, seeds=[10, 11], threads=1)
        assert res.seeds == [10, 11]
        with pytest.raises(ValueError):
            run_ensemble(g, p, 2, seeds=[1], threads=1)

    def test_needs_two_samples(self, tiny):
        with pytest.raises(ValueError):
            run_ensemble(*tiny, 1)

    def test_column(self, tiny):
        res = run_ensemble(*tiny, 2, threads=1)
        assert res.column("tumor_volume").shape == (2, 4)


class TestSweep:
    def test_shared_noise(self, tiny):
        g, p = tiny
        res = run_nu_sweep(g, p, [0.0, 2.5], seed=4, record_noise=True)
        assert res.same_noise
        a, b = res.trajectories
        for x, y in zip(a.noise_records, b.noise_records):
            assert np.array_equal(x, y)
        assert not np.array_equal(a.final.phi, b.final.phi)
