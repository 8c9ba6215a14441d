"""Acceptance criteria. Each test carries a ``criterion`` marker; conftest prints
one PASS/FAIL line per criterion at the end of the run."""

import itertools
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from openal import engine as E
from openal import ftss, strategies as S
from openal.cli import main
from openal.pool import UNLABELED, SamplePool
from openal.probe import entropy, loss_and_grad

criterion = pytest.mark.criterion

BENCH = dict(
    synth_classes=9, synth_count=1000, synth_dim=32, synth_scale=1.0, synth_separation=4.0,
    target_classes=(0, 1, 2), rounds=7, budget_fraction=0.05, seed_fraction=0.01,
    seeds=(0, 1, 2, 3),
)


def _bench(**kw):
    cfg = E.ExperimentConfig(**BENCH, **kw).validate()
    t0 = time.perf_counter()
    _, agg = E.run_experiment(cfg)
    return agg, time.perf_counter() - t0


def _mean_precision_2_to_7(agg):
    return float(np.mean([r["precision_mean"] for r in agg if 2 <= r["round"] <= 7]))


@pytest.fixture(scope="module")
def benchmark():
    out = {}
    out["openal"] = _bench(strategy="openal")
    out["random"] = _bench(strategy="random")
    out["wo_sw"] = _bench(strategy="openal", disable_sw=True)
    out["only_miss"] = _bench(strategy="openal", only_miss=True)
    return out


# -- 1 -------------------------------------------------------------------------


@criterion(1, "synthetic 33% benchmark: OpenAL beats random (precision +0.25, recall@7 +0.15, <= 60 s)")
def test_openal_beats_random(benchmark):
    (oal, t_oal), (rnd, t_rnd) = benchmark["openal"], benchmark["random"]
    p_gap = _mean_precision_2_to_7(oal) - _mean_precision_2_to_7(rnd)
    r_gap = oal[-1]["recall_mean"] - rnd[-1]["recall_mean"]
    print(f"precision gap {p_gap:.3f}, recall@7 gap {r_gap:.3f}, runtime {t_oal:.1f}s + {t_rnd:.1f}s")
    assert oal[-1]["round"] == 7 and rnd[-1]["round"] == 7
    assert p_gap >= 0.25
    assert r_gap >= 0.15
    assert t_oal + t_rnd <= 60.0


def test_benchmark_pool_geometry():
    # guards the "means >= 4 sigma apart" premise of criterion 1
    spec_means = E.poolmod.make_synth_spec(9, 1, 32, (0, 1, 2), 1.0, 4.0, 0).means
    d = np.sqrt(((spec_means[:, None] - spec_means[None]) ** 2).sum(-1))
    assert d[~np.eye(9, dtype=bool)].min() >= 4.0 - 1e-9


# -- 2 -------------------------------------------------------------------------


@criterion(2, "ablation ordering: full OpenAL >= w/o s_w and only-MISS (tolerance 0.02)")
def test_ablation_ordering(benchmark):
    full = _mean_precision_2_to_7(benchmark["openal"][0])
    wo_sw = _mean_precision_2_to_7(benchmark["wo_sw"][0])
    only = _mean_precision_2_to_7(benchmark["only_miss"][0])
    print(f"full {full:.3f}, w/o s_w {wo_sw:.3f}, only MISS {only:.3f}")
    assert wo_sw <= full + 0.02
    assert only <= full + 0.02


# -- 3 -------------------------------------------------------------------------


@criterion(3, "Mahalanobis matches linear-solve oracle within 1e-8 relative")
def test_mahalanobis_oracle():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        d = int(rng.choice([2, 4, 8]))
        n = int(rng.integers(3, 201))
        X = rng.normal(size=(n, d)) @ rng.normal(size=(d, d)) + rng.normal(scale=5, size=d)
        c = ftss.fit_cluster(X)
        mu = X.mean(axis=0)
        cov = (X - mu).T @ (X - mu) / (n - 1)
        reg = cov + 1e-3 * (np.trace(cov) / d + 1e-9) * np.eye(d)
        Z = mu + rng.normal(scale=3, size=(100, d)) @ np.linalg.cholesky(cov + np.eye(d)).T
        got = np.array([ftss.mahalanobis_sq(z, c) for z in Z])
        oracle = np.array([(z - mu) @ np.linalg.solve(reg, z - mu) for z in Z])
        worst = max(worst, float(np.max(np.abs(got - oracle) / np.abs(oracle))))
    print(f"worst relative error {worst:.2e}")
    assert worst <= 1e-8


# -- 4 -------------------------------------------------------------------------


def _best_two_partition(X):
    best = np.inf
    for bits in itertools.product([False, True], repeat=len(X) - 1):
        m = np.array((False,) + bits)
        if m.any():
            best = min(best, sum(((X[g] - X[g].mean(0)) ** 2).sum() for g in (m, ~m)))
    return best


@criterion(4, "k-means inertia equals exhaustive 2-partition optimum on 50 tiny instances")
def test_kmeans_exhaustive():
    rng = np.random.default_rng(77)
    for case in range(50):
        n = int(rng.integers(2, 9))
        X = rng.uniform(-5, 5, size=(n, 2))
        km = ftss.kmeans(X, 2, seed=case, n_init=10)
        opt = _best_two_partition(X)
        assert km.inertia == pytest.approx(opt, rel=1e-9, abs=1e-12), case


# -- 5 -------------------------------------------------------------------------


@criterion(5, "cross-entropy gradient matches central differences, relative error < 1e-5")
def test_gradient_check():
    rng = np.random.default_rng(5)
    h = 1e-5
    for _ in range(20):
        K, d, n = int(rng.integers(2, 6)), int(rng.integers(1, 11)), int(rng.integers(1, 21))
        W, b = rng.normal(size=(K, d)), rng.normal(size=K)
        X = rng.normal(size=(n, d))
        Y = np.eye(K)[rng.integers(0, K, n)]
        l2 = 1e-4
        _, gW, gb = loss_and_grad(W, b, X, Y, l2)
        theta = np.concatenate([W.ravel(), b])
        fd = np.zeros_like(theta)

        def f(t):
            return loss_and_grad(t[: K * d].reshape(K, d), t[K * d:], X, Y, l2)[0]

        for i in range(len(theta)):
            e = np.zeros_like(theta)
            e[i] = h
            fd[i] = (f(theta + e) - f(theta - e)) / (2 * h)
        an = np.concatenate([gW.ravel(), gb])
        rel = np.linalg.norm(an - fd) / max(np.linalg.norm(an) + np.linalg.norm(fd), 1e-12)
        assert rel < 1e-5


# -- 6 -------------------------------------------------------------------------


@criterion(6, "metric arithmetic: precision 40/50 = 0.8, recall (30+50)/200 = 0.4")
def test_metric_arithmetic():
    assert E.compute_metrics([(40, 10)], 200).precision == 0.8
    assert E.compute_metrics([(30, 7), (50, 3)], 200).recall == 0.4


# -- 7 -------------------------------------------------------------------------


@criterion(7, "two identical `run` invocations give byte-identical JSON-lines reports")
def test_determinism(tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text(
        "[experiment]\nstrategy = openal\nrounds = 3\n"
        "[pool]\nsource = synth\ntarget_classes = 0,1,2\n"
        "[synth]\nclasses = 9\ncount = 150\ndim = 16\n"
    )
    for out in ("a", "b"):
        assert main(["run", "--config", str(cfg), "--seed", "11", "--out", str(tmp_path / out)]) == 0
    a = (tmp_path / "a" / "run_seed11.jsonl").read_bytes()
    b = (tmp_path / "b" / "run_seed11.jsonl").read_bytes()
    assert a and a == b


# -- 8 -------------------------------------------------------------------------

_PROP = settings(max_examples=40, deadline=None)


@criterion(8, "invariant suite (partition, monotonicity, normalize, entropy, selection, recall)")
@_PROP
@given(ops=st.lists(st.tuples(st.integers(0, 29), st.booleans()), max_size=60))
def test_partition_and_monotone_annotation(ops):
    pool = SamplePool(np.arange(30), np.zeros((30, 1)), np.arange(30) % 3, target_classes=(0,))
    for pos, tgt in ops:
        was = pool.state[pos]
        try:
            pool.mark_target(pos, 0) if tgt else pool.mark_nontarget(pos)
            assert was == UNLABELED
        except E.poolmod.PoolError:
            assert was != UNLABELED and pool.state[pos] == was
        pool.check_partition()


@criterion(8, "invariant suite (partition, monotonicity, normalize, entropy, selection, recall)")
@_PROP
@given(hnp.arrays(np.float64, st.integers(1, 40), elements=st.floats(-1e3, 1e3)))
def test_normalize_invariants(x):
    y = ftss.normalize(x)
    assert np.all((0 <= y) & (y <= 1))
    order = np.argsort(x, kind="stable")
    assert np.all(np.diff(y[order]) >= 0)


@criterion(8, "invariant suite (partition, monotonicity, normalize, entropy, selection, recall)")
@_PROP
@given(st.lists(st.floats(0, 100), min_size=1, max_size=12).filter(lambda w: sum(w) > 0))
def test_entropy_invariants(w):
    p = np.array(w) / sum(w)
    assert -1e-12 <= entropy(p) <= np.log(len(p)) + 1e-9


@criterion(8, "invariant suite (partition, monotonicity, normalize, entropy, selection, recall)")
@_PROP
@given(
    name=st.sampled_from(S.STRATEGIES),
    budget=st.integers(1, 300),
    seed=st.integers(0, 50),
)
def test_selection_invariants(name, budget, seed):
    rng = np.random.default_rng(seed)
    n = 200
    pool = SamplePool(np.arange(n) * 2, rng.normal(size=(n, 3)) + (np.arange(n) % 4)[:, None] * 3,
                      np.arange(n) % 4, target_classes=(0, 1))
    oracle = E.OracleView(pool)
    E.seed_label(pool, oracle, 0.1, seed)
    model = E._fit(pool, E.ExperimentConfig())
    cfg = E.ExperimentConfig(strategy=name)
    U_before = set(pool.ids[pool.unlabeled()].tolist())
    if name == "openal" and not len(pool.labeled_target()):
        return
    sel, _ = E._select(pool, model, min(budget, len(U_before)), cfg, seed, 1)
    ids = sel.ids.tolist()
    assert len(ids) == len(set(ids)) == min(budget, len(U_before))
    assert set(ids) <= U_before


@criterion(8, "invariant suite (partition, monotonicity, normalize, entropy, selection, recall)")
@pytest.mark.parametrize("strategy", S.STRATEGIES)
def test_recall_monotone_and_budget_accounting(strategy):
    cfg = E.ExperimentConfig(strategy=strategy, rounds=5, synth_classes=6, synth_count=100,
                             synth_dim=8, seeds=(0,)).validate()
    reports = E.run_seed(cfg, 0)
    recalls = [r.recall for r in reports]
    assert all(b >= a for a, b in zip(recalls, recalls[1:])) and recalls[-1] <= 1.0
    seed_n = reports[0].seed_target + reports[0].seed_nontarget
    for m, r in enumerate(reports, start=1):
        assert r.n_labeled_target + r.n_queried_nontarget == seed_n + sum(x.k + x.l for x in reports[:m])
        if r.k + r.l:
            assert r.precision == r.k / (r.k + r.l)
