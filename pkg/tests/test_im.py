import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wordmap.im import (
    UNASSIGNED,
    VIRTUAL,
    ImConfig,
    Mapping,
    default_virtual_distance,
    im_optimize,
    load_mapping_tsv,
    loss_delta,
    mapping_loss,
    random_init,
    save_mapping_tsv,
    save_trace_csv,
    seed_mapping,
)
from wordmap.spectral import mutual_nn_pairs, spectral_features

from conftest import make_space, random_orthogonal

# scalene triangle with side lengths d01=1, d02=2, d12=2.5
_x2 = -0.625
SCALENE = np.array([[0.0, 0.0], [1.0, 0.0], [_x2, math.sqrt(4.0 - _x2**2)]])


def brute_loss(x, y, assign, c=None):
    """Direct double loop over unordered source pairs."""
    total = 0.0
    for p, q in itertools.combinations(range(len(x)), 2):
        dx = np.linalg.norm(x[p] - x[q])
        tp, tq = assign[p], assign[q]
        if tp == VIRTUAL or tq == VIRTUAL:
            dy = c
        else:
            dy = np.linalg.norm(y[tp] - y[tq])
        total += (dx - dy) ** 2
    return total


def test_scalene_fixture_distances():
    d = lambda i, j: np.linalg.norm(SCALENE[i] - SCALENE[j])
    assert d(0, 1) == pytest.approx(1.0) and d(0, 2) == pytest.approx(2.0)
    assert d(1, 2) == pytest.approx(2.5)


class TestMappingLoss:
    def test_isometric_copy_zero(self, rng):
        x = rng.standard_normal((10, 3))
        y = x @ random_orthogonal(3, rng).T + 1.0
        assert mapping_loss(make_space(x), make_space(y), Mapping(np.arange(10))) == pytest.approx(0, abs=1e-20)

    def test_two_words(self):
        # D_X = 2, D_Y = 1 -> (2 - 1)^2
        X = make_space([[0.0], [2.0]])
        Y = make_space([[0.0], [1.0]])
        assert mapping_loss(X, Y, Mapping([0, 1])) == pytest.approx(1.0)

    def test_virtual_rule(self):
        # D_X = 3, second word virtual with c = 5 -> (3 - 5)^2
        X = make_space([[0.0], [3.0]])
        Y = make_space([[0.0], [1.0]])
        assert mapping_loss(X, Y, Mapping([0, VIRTUAL], 5.0)) == pytest.approx(4.0)

    def test_virtual_to_virtual_is_c(self):
        X = make_space([[0.0], [3.0]])
        Y = make_space([[0.0]])
        assert mapping_loss(X, Y, Mapping([VIRTUAL, VIRTUAL], 5.0)) == pytest.approx(4.0)

    def test_shared_target_distance_zero(self):
        X = make_space([[0.0], [3.0]])
        Y = make_space([[0.0], [1.0]])
        assert mapping_loss(X, Y, Mapping([1, 1])) == pytest.approx(9.0)

    def test_unassigned_rejected(self):
        X = make_space([[0.0], [3.0]])
        with pytest.raises(ValueError, match="unassigned"):
            mapping_loss(X, X, Mapping([0, UNASSIGNED]))

    def test_virtual_needs_c(self):
        X = make_space([[0.0], [3.0]])
        with pytest.raises(ValueError):
            mapping_loss(X, X, Mapping([0, VIRTUAL]))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 8), st.integers(1, 6), st.integers(0, 2**31))
    def test_matches_brute_force(self, n, m, seed):
        rng = np.random.default_rng(seed)
        x, y = rng.standard_normal((n, 3)), rng.standard_normal((m, 3))
        assign = rng.integers(-1, m, size=n)
        got = mapping_loss(make_space(x), make_space(y), Mapping(assign, 1.7))
        assert got == pytest.approx(brute_loss(x, y, assign, 1.7), rel=1e-12, abs=1e-12)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**31))
    def test_invariant_under_isometry_of_y(self, seed):
        rng = np.random.default_rng(seed)
        x, y = rng.standard_normal((12, 4)), rng.standard_normal((9, 4))
        M = Mapping(rng.integers(-1, 9, size=12), 2.0)
        base = mapping_loss(make_space(x), make_space(y), M)
        moved = y @ random_orthogonal(4, rng).T + rng.standard_normal(4) * 5
        assert mapping_loss(make_space(x), make_space(moved), M) == pytest.approx(base, rel=1e-6)


class TestLossDelta:
    def test_noop(self, rng):
        X = make_space(rng.standard_normal((5, 2)))
        assert loss_delta(X, X, Mapping(np.arange(5)), 2, 2) == 0.0

    def test_scalene_hand_value(self):
        # move source 0 from t0 to t1: pair (0,1) 1 -> 0 gives 1, pair (0,2) 2 -> 2.5 gives 0.25
        X = make_space(SCALENE)
        assert loss_delta(X, X, Mapping([0, 1, 2]), 0, 1) == pytest.approx(1.25, rel=1e-12)

    def test_unassigned(self, rng):
        X = make_space(rng.standard_normal((3, 2)))
        with pytest.raises(ValueError):
            loss_delta(X, X, Mapping([0, UNASSIGNED, 1]), 1, 0)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(2, 10), st.integers(1, 8), st.integers(0, 2**31))
    def test_matches_full_recompute(self, n, m, seed):
        rng = np.random.default_rng(seed)
        X, Y = make_space(rng.standard_normal((n, 3))), make_space(rng.standard_normal((m, 3)))
        M = Mapping(rng.integers(-1, m, size=n), 1.3)
        i = int(rng.integers(n))
        new = int(rng.integers(-1, m))
        want = mapping_loss(X, Y, M.moved(i, new)) - mapping_loss(X, Y, M)
        got = loss_delta(X, Y, M, i, new)
        assert got == pytest.approx(want, rel=1e-9, abs=1e-9)


class TestRandomInit:
    def test_deterministic(self, rng):
        X, Y = make_space(rng.standard_normal((20, 2))), make_space(rng.standard_normal((7, 2)))
        assert random_init(X, Y, 4) == random_init(X, Y, 4)
        assert random_init(X, Y, 4) != random_init(X, Y, 5)

    def test_single_target(self, rng):
        X = make_space(rng.standard_normal((6, 2)))
        assert random_init(X, make_space([[0.0, 0.0]]), 0).assignment.tolist() == [0] * 6

    def test_empty_target(self, rng):
        X = make_space(rng.standard_normal((3, 2)))
        Y = make_space(np.zeros((0, 2)))
        with pytest.raises(ValueError):
            random_init(X, Y, 0)

    def test_uniform_histogram(self):
        X, Y = make_space(np.zeros((50, 1))), make_space(np.zeros((5, 1)))
        draws = np.concatenate([random_init(X, Y, s).assignment for s in range(400)])
        counts = np.bincount(draws, minlength=5)
        n, p = draws.size, 1 / 5
        assert np.all(np.abs(counts - n * p) <= 3 * math.sqrt(n * p * (1 - p)))


def _enumerate_optima(X, Y):
    best, arg = math.inf, []
    for assign in itertools.product(range(Y.n), repeat=X.n):
        loss = brute_loss(X.vectors, Y.vectors, assign)
        if loss < best - 1e-12:
            best, arg = loss, [assign]
        elif abs(loss - best) <= 1e-12:
            arg.append(assign)
    return best, arg


class TestImOptimize:
    def test_fixed_point(self, rng):
        x = rng.standard_normal((30, 4))
        y = x @ random_orthogonal(4, rng).T
        res = im_optimize(make_space(x), make_space(y), Mapping(np.arange(30)))
        assert len(res.trace) == 1 and res.trace[0].accepted_updates == 0
        assert res.converged and res.loss == pytest.approx(0, abs=1e-20)

    def test_scalene_recovery(self):
        X = make_space(SCALENE)
        best, optima = _enumerate_optima(X, X)
        assert best == pytest.approx(0, abs=1e-20) and optima == [(0, 1, 2)]
        res = im_optimize(X, X, Mapping([1, 1, 2]), ImConfig(max_epochs=10))
        assert res.mapping.assignment.tolist() == [0, 1, 2]
        assert res.loss == pytest.approx(0, abs=1e-20)

    def test_restarts_select_min(self, rng):
        X, Y = make_space(rng.standard_normal((25, 3))), make_space(rng.standard_normal((25, 3)))
        init = random_init(X, Y, 0)
        res = im_optimize(X, Y, init, ImConfig(restarts=10, rng_seed=0))
        singles = [im_optimize(X, Y, init, ImConfig(rng_seed=s)).loss for s in range(10)]
        assert res.restart_losses == singles
        assert res.loss == min(singles)
        assert res.seed == int(np.argmin(singles))

    def test_empty_target(self, rng):
        X = make_space(rng.standard_normal((3, 2)))
        with pytest.raises(ValueError):
            im_optimize(X, make_space(np.zeros((0, 2))), Mapping([VIRTUAL] * 3, 1.0))

    @pytest.mark.parametrize("seed", range(20))
    def test_monotone_trace(self, seed):
        rng = np.random.default_rng(seed)
        n, m = int(rng.integers(5, 30)), int(rng.integers(3, 30))
        X, Y = make_space(rng.standard_normal((n, 3))), make_space(rng.standard_normal((m, 3)))
        init = Mapping(np.where(rng.random(n) < 0.3, VIRTUAL, rng.integers(0, m, size=n)))
        cand = "real+virtual" if seed % 2 else "real"
        res = im_optimize(X, Y, init, ImConfig(max_epochs=50, rng_seed=seed, candidates=cand))
        losses = [res.initial_loss] + [r.loss for r in res.trace]
        assert all(b <= a for a, b in zip(losses, losses[1:]))
        assert res.loss == pytest.approx(mapping_loss(X, Y, res.mapping), rel=1e-9)

    def test_every_accepted_update_decreases(self, rng):
        # replay the greedy scan one source at a time with a single epoch
        X, Y = make_space(rng.standard_normal((15, 2))), make_space(rng.standard_normal((12, 2)))
        M = random_init(X, Y, 1)
        prev = mapping_loss(X, Y, M)
        for epoch in range(5):
            res = im_optimize(X, Y, M, ImConfig(max_epochs=1, rng_seed=epoch))
            if res.trace[0].accepted_updates:
                assert res.loss < prev
            else:
                assert res.loss == pytest.approx(prev, rel=1e-12)
            M, prev = res.mapping, res.loss

    def test_greedy_step_is_argmin(self, rng):
        # at convergence no single move strictly improves the loss (real candidates)
        X, Y = make_space(rng.standard_normal((10, 2))), make_space(rng.standard_normal((8, 2)))
        res = im_optimize(X, Y, random_init(X, Y, 3), ImConfig(max_epochs=100))
        assert res.converged
        for i in range(10):
            for t in range(8):
                assert loss_delta(X, Y, res.mapping, i, t) >= -1e-9

    def test_virtual_candidate_mode(self):
        # an outlier source with no good real partner: moving it to the virtual token pays
        X = make_space([[0.0], [1.0], [2.0], [50.0]])
        Y = make_space([[0.0], [1.0], [2.0]])
        init = Mapping([0, 1, 2, 2], 10.0)
        assert loss_delta(X, Y, init, 3, VIRTUAL) < 0
        real = im_optimize(X, Y, init, ImConfig(candidates="real"))
        virt = im_optimize(X, Y, init, ImConfig(candidates="real+virtual"))
        assert real.mapping.n_virtual == 0
        assert virt.mapping.n_virtual > 0
        assert virt.loss < real.loss

    def test_default_virtual_distance_used(self, rng):
        X = make_space(rng.standard_normal((6, 2)))
        res = im_optimize(X, X, Mapping([VIRTUAL] * 6))
        assert res.mapping.virtual_distance == pytest.approx(default_virtual_distance(X))

    @pytest.mark.parametrize("n_jobs, chunk", [(1, 3), (3, 3), (4, 512)])
    def test_parallel_determinism(self, rng, n_jobs, chunk):
        X, Y = make_space(rng.standard_normal((40, 3))), make_space(rng.standard_normal((35, 3)))
        init = random_init(X, Y, 9)
        ref = im_optimize(X, Y, init, ImConfig(rng_seed=2, restarts=2, chunk_size=chunk))
        par = im_optimize(X, Y, init, ImConfig(rng_seed=2, restarts=2, chunk_size=chunk, n_jobs=n_jobs))
        assert ref.mapping == par.mapping
        assert [r.loss for r in ref.trace] == [r.loss for r in par.trace]

    def test_exact_isometry_from_spectral_seed(self, rng):
        x = rng.standard_normal((50, 6))
        perm = rng.permutation(50)
        y = np.empty_like(x)
        y[perm] = x @ random_orthogonal(6, rng).T + 2.0
        X, Y = make_space(x), make_space(y)
        assert mapping_loss(X, Y, Mapping(perm)) == pytest.approx(0, abs=1e-18)
        seeds = mutual_nn_pairs(spectral_features(X, 8), spectral_features(Y, 8))
        res = im_optimize(X, Y, seed_mapping(seeds, default_virtual_distance(X)))
        assert res.loss == pytest.approx(0, abs=1e-18)
        assert res.mapping.assignment.tolist() == perm.tolist()


def test_mapping_tsv_round_trip(tmp_path):
    X = make_space(np.zeros((4, 1)), "s")
    Y = make_space(np.zeros((3, 1)), "t")
    M = Mapping([2, VIRTUAL, UNASSIGNED, 0])
    path = tmp_path / "m.tsv"
    save_mapping_tsv(M, X.tokens, Y.tokens, path)
    assert path.read_text() == "s0\tt2\ns1\t__VIRTUAL__\ns3\tt0\n"
    assert load_mapping_tsv(path, X.vocab, Y.vocab) == M


def test_trace_csv(tmp_path, rng):
    X = make_space(rng.standard_normal((6, 2)))
    res = im_optimize(X, X, random_init(X, X, 0))
    path = tmp_path / "trace.csv"
    save_trace_csv(res.trace, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "epoch,loss,accepted_updates"
    assert len(lines) == len(res.trace) + 1
    assert float(lines[-1].split(",")[1]) == res.loss


def test_config_validation():
    with pytest.raises(ValueError):
        ImConfig(max_epochs=0)
    with pytest.raises(ValueError):
        ImConfig(restarts=0)
    with pytest.raises(ValueError):
        ImConfig(candidates="all")
    with pytest.raises(ValueError):
        Mapping([0], virtual_distance=0.0)
