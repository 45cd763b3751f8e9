import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rdad.exceptions import DuplicateOverload
from rdad.filtration import FiltrationSpec, make_grid
from rdad.inference import (
    BootstrapConfig,
    BootstrapResult,
    BootstrapSignificance,
    Pipeline,
    exact_size_sampler,
    oracle_bootstrap,
    quantile_radius,
    replicate_rng,
    subsample_bootstrap,
)
from rdad.synthgen import generate, preset_sampler


@pytest.fixture(scope="module")
def small():
    """A 600-point two-square sample on a coarse grid."""
    cloud = generate("antman", 0, n=600)
    grid = make_grid(cloud, 0.08)
    return cloud, Pipeline(FiltrationSpec("rdad"), grid)


# --- quantile rule -------------------------------------------------------------


def test_quantile_ceiling_rule():
    d = np.arange(1, 101, dtype=float)[::-1]
    assert quantile_radius(d, 0.05) == 95.0
    assert quantile_radius(d, 0.5) == 50.0
    assert quantile_radius([3.0], 0.05) == 3.0
    assert quantile_radius(np.arange(1.0, 21.0), 0.05) == 19.0


@given(st.lists(st.floats(0, 10), min_size=1, max_size=50), st.floats(0.01, 0.99), st.floats(0.01, 0.99))
def test_quantile_monotone_and_nonnegative(d, a1, a2):
    lo, hi = min(a1, a2), max(a1, a2)
    assert quantile_radius(d, hi) <= quantile_radius(d, lo)
    assert quantile_radius(d, lo) >= 0


def test_config_validation():
    with pytest.raises(ValueError):
        BootstrapConfig(B=0)
    with pytest.raises(ValueError):
        BootstrapConfig(alpha=1.0)
    with pytest.raises(ValueError):
        BootstrapConfig(mode="jackknife")


def test_replicate_seeds_independent_of_order():
    a = replicate_rng(7, 3).uniform(size=4)
    replicate_rng(7, 0).uniform(size=100)
    assert np.array_equal(a, replicate_rng(7, 3).uniform(size=4))
    assert not np.array_equal(a, replicate_rng(7, 4).uniform(size=4))


# --- subsample ---------------------------------------------------------------


def test_identity_replicate_gives_zero(small):
    cloud, pl = small
    res = subsample_bootstrap(cloud, pl, BootstrapConfig(B=1), resample=lambda rng, n: np.arange(n))
    assert res.radius == 0.0 and res.distances.tolist() == [0.0]


def test_subsample_deterministic_and_thread_independent(small):
    cloud, pl = small
    cfg = BootstrapConfig(B=6, seed=3)
    a = subsample_bootstrap(cloud, pl, cfg)
    b = subsample_bootstrap(cloud, pl, cfg)
    c = subsample_bootstrap(cloud, pl, cfg, n_jobs=3)
    assert a.distances.tobytes() == b.distances.tobytes() == c.distances.tobytes()
    assert a.radius == quantile_radius(a.distances, 0.05)
    assert np.all(a.distances >= 0) and a.grid == pl.grid
    d = subsample_bootstrap(cloud, pl, BootstrapConfig(B=6, seed=4))
    assert not np.array_equal(a.distances, d.distances)


def test_replicates_share_grid(small, monkeypatch):
    cloud, pl = small
    import rdad.inference as inf

    seen = []
    original = inf.Pipeline.diagram

    def spy(self, sample):
        seen.append(self.grid)
        return original(self, sample)

    monkeypatch.setattr(inf.Pipeline, "diagram", spy)
    subsample_bootstrap(cloud, pl, BootstrapConfig(B=4))
    assert len(seen) == 5 and all(g == pl.grid for g in seen)


def test_duplicate_overload_redrawn(small):
    cloud, pl = small

    def resample(rng, n):
        # half the draws collapse onto one point, which overloads k_den
        return np.zeros(n, dtype=int) if rng.uniform() < 0.5 else rng.integers(0, n, size=n)

    res = subsample_bootstrap(cloud, pl, BootstrapConfig(B=8, seed=1), resample=resample)
    assert res.reseeded_replicates > 0
    assert np.all(np.isfinite(res.distances))

    with pytest.raises(DuplicateOverload):
        subsample_bootstrap(cloud, pl, BootstrapConfig(B=1), resample=lambda rng, n: np.zeros(n, dtype=int))


def test_mode_checked(small):
    cloud, pl = small
    with pytest.raises(ValueError):
        subsample_bootstrap(cloud, pl, BootstrapConfig(mode="oracle"))
    with pytest.raises(ValueError):
        oracle_bootstrap(lambda n, rng: cloud, len(cloud), pl, BootstrapConfig(mode="subsample"))


# --- oracle -----------------------------------------------------------------


def test_oracle_returning_original_gives_zero(small):
    cloud, pl = small
    res = oracle_bootstrap(lambda n, rng: cloud, len(cloud), pl, BootstrapConfig(B=1, mode="oracle"), observed=cloud)
    assert res.radius == 0.0


def test_oracle_deterministic(small):
    cloud, pl = small
    sampler = preset_sampler("antman", n=600)
    cfg = BootstrapConfig(B=4, seed=2, mode="oracle")
    a = oracle_bootstrap(sampler, len(cloud), pl, cfg, observed=cloud)
    b = oracle_bootstrap(sampler, len(cloud), pl, cfg, observed=cloud, n_jobs=2)
    assert a.distances.tobytes() == b.distances.tobytes()
    assert a.to_dict()["mode"] == "oracle"


def test_exact_size_sampler_pools():
    calls = []

    def gen(rng):
        calls.append(1)
        return generate("antman", rng, n=100)

    s = exact_size_sampler(gen)
    out = s(250, np.random.default_rng(0))
    assert len(out) == 250 and len(calls) == 3


# --- result I/O and estimator --------------------------------------------------


def test_result_json_roundtrip(small):
    cloud, pl = small
    res = subsample_bootstrap(cloud, pl, BootstrapConfig(B=3, seed=5))
    obj = json.loads(res.to_json())
    assert set(obj) >= {"radius", "alpha", "B", "dim", "distances", "reseeded_replicates"}
    back = BootstrapResult.from_dict(obj)
    assert back.radius == res.radius and np.array_equal(back.distances, res.distances)


def test_estimator(small):
    cloud, pl = small
    est = BootstrapSignificance(delta_x=0.08, n_bootstrap=5, random_state=0).fit(cloud)
    assert est.grid_ == pl.grid
    assert est.radius_ >= 0
    assert est.significant_count() == len(est.significant_)
    assert all(p.death - p.birth > 2 * est.radius_ for p in est.significant_)
    assert est.get_params()["n_bootstrap"] == 5
    with pytest.raises(ValueError):
        BootstrapSignificance(mode="oracle", n_bootstrap=2).fit(cloud)
