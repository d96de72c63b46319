import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wordmap.embeddings import Vocabulary
from wordmap.evaluation import (
    DEFAULT_K_VALUES,
    BilingualDictionary,
    EvalReport,
    band_counts,
    corrupt_pairs,
    dictionary_sensitivity,
    frequency_band_overlap,
    precision_at_k,
    sample_training_pairs,
    split_gold,
    supervised_baseline,
)
from wordmap.synth import generate, gold_dictionary
from wordmap.transform import RetrievalConfig


class TestPrecisionAtK:
    def test_top_hit(self):
        r = precision_at_k({"a": ["x", "y"]}, BilingualDictionary({"a": {"x"}}), [1])
        assert r.precision[1] == 1.0

    def test_second_place(self):
        r = precision_at_k({"a": ["y", "x", "z"]}, BilingualDictionary({"a": {"x"}}), [1, 5])
        assert r.precision == {1: 0.0, 5: 1.0}

    def test_hand_count(self):
        gold = BilingualDictionary({"a": {"x"}, "b": {"y"}, "c": {"z"}, "d": {"w"}})
        preds = {
            "a": ["x", "q", "q", "q", "q"],  # hit at 1
            "b": ["y", "q", "q", "q", "q"],  # hit at 1
            "c": ["q", "q", "z", "q", "q"],  # hit at 3
            "d": ["q", "q", "q", "q", "q"],  # miss
        }
        r = precision_at_k(preds, gold, [1, 5])
        assert r.precision == {1: 0.5, 5: 0.75}
        assert r.n_test == 4

    def test_any_gold_target_counts(self):
        gold = BilingualDictionary({"a": {"x", "y"}})
        assert precision_at_k({"a": ["y"]}, gold, [1]).precision[1] == 1.0

    def test_missing_gold_excluded(self):
        gold = BilingualDictionary({"a": {"x"}})
        r = precision_at_k({"a": ["x"], "zz": ["x"]}, gold, [1])
        assert r.n_test == 1 and r.n_excluded == 1 and r.precision[1] == 1.0

    def test_short_lists_miss(self):
        r = precision_at_k({"a": ["y"]}, BilingualDictionary({"a": {"x"}}), [1, 100])
        assert r.precision == {1: 0.0, 100: 0.0}

    def test_nothing_to_score(self):
        with pytest.raises(ValueError):
            precision_at_k({"zz": ["x"]}, BilingualDictionary({"a": {"x"}}), [1])

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31), st.integers(1, 20))
    def test_monotone_bounded_and_order_free(self, seed, n):
        rng = np.random.default_rng(seed)
        targets = [f"t{i}" for i in range(15)]
        gold = BilingualDictionary({f"s{i}": {targets[rng.integers(15)]} for i in range(n)})
        preds = {f"s{i}": list(rng.permutation(targets)[: rng.integers(1, 15)]) for i in range(n)}
        r = precision_at_k(preds, gold, DEFAULT_K_VALUES)
        vals = [r.precision[k] for k in r.k_values]
        assert all(0.0 <= v <= 1.0 for v in vals)
        assert all(a <= b for a, b in zip(vals, vals[1:]))
        keys = list(preds)
        shuffled = {k: preds[k] for k in rng.permutation(keys)}
        assert precision_at_k(shuffled, gold, DEFAULT_K_VALUES).precision == r.precision


class TestReport:
    def test_json_and_csv(self, tmp_path):
        r = EvalReport([1, 5], {1: 0.5, 5: 0.75}, 4, 1, {"metric": "cosine"})
        r.save_json(tmp_path / "r.json")
        r.save_csv(tmp_path / "r.csv")
        doc = json.loads((tmp_path / "r.json").read_text())
        assert doc["precision"] == {"1": 0.5, "5": 0.75} and doc["n_excluded"] == 1
        assert (tmp_path / "r.csv").read_text() == "k,precision\n1,0.5\n5,0.75\n"


class TestDictionary:
    def test_tsv_merges_repeated_sources(self, tmp_path):
        path = tmp_path / "g.tsv"
        path.write_text("a\tx\na\ty\nb\tz\n\n")
        gold = BilingualDictionary.load_tsv(path)
        assert len(gold) == 2 and gold["a"] == {"x", "y"}
        gold.save_tsv(tmp_path / "h.tsv")
        assert (tmp_path / "h.tsv").read_text() == "a\tx\na\ty\nb\tz\n"

    def test_malformed_line(self, tmp_path):
        path = tmp_path / "g.tsv"
        path.write_text("a\tx\nbad line\n")
        with pytest.raises(ValueError, match=":2:"):
            BilingualDictionary.load_tsv(path)

    def test_empty_target_set(self):
        with pytest.raises(ValueError):
            BilingualDictionary({"a": set()})

    def test_restrict_counts_dropped(self):
        gold = BilingualDictionary({"a": {"x", "nope"}, "gone": {"x"}})
        kept, dropped = gold.restrict(Vocabulary(["a", "b"]), Vocabulary(["x"]))
        assert kept.pairs() == [("a", "x")] and dropped == 2


def vocab_with_ranks(prefix, ranks):
    return Vocabulary([f"{prefix}{i}" for i in range(len(ranks))], ranks)


class TestBandOverlap:
    def test_all_in_band(self):
        src = vocab_with_ranks("s", range(6))
        tgt = vocab_with_ranks("t", range(6))
        gold = BilingualDictionary({f"s{i}": {f"t{i}"} for i in range(6)})
        np.testing.assert_array_equal(frequency_band_overlap(gold, src, tgt, 2, 3), [1.0, 1.0, 1.0])

    def test_none_in_band(self):
        src = vocab_with_ranks("s", range(4))
        tgt = vocab_with_ranks("t", range(4))
        gold = BilingualDictionary({"s0": {"t2"}, "s1": {"t3"}, "s2": {"t0"}, "s3": {"t1"}})
        np.testing.assert_array_equal(frequency_band_overlap(gold, src, tgt, 2, 2), [0.0, 0.0])

    def test_three_of_four(self):
        # band 0 has four source words; three translate into target band 0
        src = vocab_with_ranks("s", range(8))
        tgt = vocab_with_ranks("t", range(8))
        gold = BilingualDictionary(
            {"s0": {"t0"}, "s1": {"t3", "t6"}, "s2": {"t2"}, "s3": {"t7"}, "s4": {"t4"}, "s5": {"t5"}}
        )
        got = frequency_band_overlap(gold, src, tgt, 4, 2)
        np.testing.assert_array_equal(got, [0.75, 1.0])
        hits, totals = band_counts(gold, src, tgt, 4, 2)
        assert hits.tolist() == [3, 2] and totals.tolist() == [4, 2]

    def test_out_of_vocab_targets_excluded(self):
        src = vocab_with_ranks("s", range(2))
        tgt = vocab_with_ranks("t", range(2))
        gold = BilingualDictionary({"s0": {"t0"}, "s1": {"elsewhere"}})
        np.testing.assert_array_equal(frequency_band_overlap(gold, src, tgt, 2, 1), [1.0])

    def test_empty_band_is_nan(self):
        src = vocab_with_ranks("s", range(4))
        tgt = vocab_with_ranks("t", range(4))
        out = frequency_band_overlap(BilingualDictionary({"s0": {"t0"}}), src, tgt, 2, 2)
        assert out[0] == 1.0 and np.isnan(out[1])

    def test_bands_exceed_vocab(self):
        v = vocab_with_ranks("s", range(5))
        with pytest.raises(ValueError):
            frequency_band_overlap(BilingualDictionary({"s0": {"s0"}}), v, v, 2, 3)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31))
    def test_bounded_and_relabel_invariant(self, seed):
        rng = np.random.default_rng(seed)
        n = 30
        src = vocab_with_ranks("s", rng.permutation(n))
        tgt = vocab_with_ranks("t", rng.permutation(n))
        gold = BilingualDictionary(
            {f"s{i}": {f"t{j}" for j in rng.choice(n, rng.integers(1, 3))} for i in range(n)}
        )
        base = frequency_band_overlap(gold, src, tgt, 5, 6)
        assert np.all((base >= 0) & (base <= 1))
        # rename every token while keeping its rank
        ren_s = Vocabulary([f"a{i}" for i in range(n)], src.rank)
        ren_t = Vocabulary([f"b{i}" for i in range(n)], tgt.rank)
        ren_gold = BilingualDictionary(
            {"a" + s[1:]: {"b" + t[1:] for t in ts} for s, ts in gold.entries.items()}
        )
        np.testing.assert_array_equal(frequency_band_overlap(ren_gold, ren_s, ren_t, 5, 6), base)


@pytest.fixture(scope="module")
def linear_instance():
    inst = generate(400, 20, "general-linear", 0.0, seed=7)
    return inst, gold_dictionary(inst)


class TestSupervised:
    def test_exact_data_perfect_precision(self):
        inst = generate(300, 20, "orthogonal", 0.0, seed=3)
        gold = gold_dictionary(inst)
        pool, test = split_gold(gold, 100, 0)
        r = supervised_baseline(pool, inst.X, inst.Y, test)
        assert r.n_test == 100 and all(v == 1.0 for v in r.precision.values())
        assert r.settings["n_train"] == 200 and r.settings["fit_residual"] < 1e-20
        assert r.settings["metric"] == "cosine"

    def test_overlap_rejected(self, linear_instance):
        inst, gold = linear_instance
        train = gold.pairs()[:50]
        with pytest.raises(ValueError, match="train sources"):
            supervised_baseline(train, inst.X, inst.Y, gold.subset([train[0][0]]))

    def test_empty_test(self, linear_instance):
        inst, gold = linear_instance
        with pytest.raises(ValueError):
            supervised_baseline(gold.pairs()[:50], inst.X, inst.Y, BilingualDictionary())


class TestSensitivity:
    def test_split_is_disjoint_and_seeded(self, linear_instance):
        _, gold = linear_instance
        pool, test = split_gold(gold, 80, 5)
        assert len(test) == 80 and not {s for s, _ in pool} & set(test.sources())
        assert split_gold(gold, 80, 5)[1].sources() == test.sources()

    def test_training_sample_depends_on_size_and_seed_only(self, linear_instance):
        _, gold = linear_instance
        pool = gold.pairs()
        a = sample_training_pairs(pool, 50, 1)
        assert a == sample_training_pairs(pool, 50, 1)
        assert len(set(a)) == 50
        with pytest.raises(ValueError):
            sample_training_pairs(pool, len(pool) + 1, 1)

    @pytest.mark.parametrize("noise, expected", [(0.0, 0), (0.1, 10), (0.25, 25), (0.333, 34), (1.0, 100)])
    def test_corruption_count_and_wrongness(self, linear_instance, noise, expected):
        inst, gold = linear_instance
        train = gold.pairs()[:100]
        noisy, bad = corrupt_pairs(train, noise, gold, inst.Y, 0)
        assert len(bad) == expected
        for i, ((s, t), (s2, t2)) in enumerate(zip(train, noisy)):
            assert s == s2
            if i in set(bad.tolist()):
                assert t2 not in gold[s] and t2 in inst.Y.vocab
            else:
                assert t2 == t

    def test_corruption_bounds(self, linear_instance):
        inst, gold = linear_instance
        with pytest.raises(ValueError):
            corrupt_pairs(gold.pairs()[:5], 1.5, gold, inst.Y, 0)

    def test_noise_free_cell_equals_baseline(self, linear_instance):
        inst, gold = linear_instance
        grid = dictionary_sensitivity(inst.X, inst.Y, gold, [50, 150], [0.0, 0.5], seed=4, test_size=100)
        pool, test = split_gold(gold, 100, 4)
        for size in (50, 150):
            base = supervised_baseline(sample_training_pairs(pool, size, 4), inst.X, inst.Y, test)
            assert grid.cell(size, 0.0).report.precision == base.precision
        assert grid.cell(150, 0.5).n_corrupted == 75

    def test_full_noise_near_random(self, linear_instance):
        inst, gold = linear_instance
        grid = dictionary_sensitivity(inst.X, inst.Y, gold, [300], [1.0], seed=0, test_size=100,
                                      k_values=[1, 10])
        p = grid.cell(300, 1.0).report.precision
        # random retrieval from 400 targets: P@1 = 1/400, P@10 = 10/400; allow a few chance hits
        assert p[1] <= 0.03 and p[10] <= 0.1

    def test_noise_hurts_on_average(self):
        inst = generate(400, 40, "general-linear", 0.3, seed=11)
        gold = gold_dictionary(inst)
        clean, half = [], []
        for seed in range(5):
            grid = dictionary_sensitivity(inst.X, inst.Y, gold, [100], [0.0, 0.5], seed=seed,
                                          test_size=100, k_values=[1])
            clean.append(grid.cell(100, 0.0).report.precision[1])
            half.append(grid.cell(100, 0.5).report.precision[1])
        assert np.mean(clean) >= np.mean(half)

    def test_sizes_must_fit(self, linear_instance):
        inst, gold = linear_instance
        with pytest.raises(ValueError, match="exceeds"):
            dictionary_sensitivity(inst.X, inst.Y, gold, [400], [0.0], test_size=100)

    def test_grid_files(self, tmp_path, linear_instance):
        inst, gold = linear_instance
        grid = dictionary_sensitivity(inst.X, inst.Y, gold, [40], [0.0, 0.25], seed=1, test_size=50,
                                      k_values=[1, 5], config=RetrievalConfig(metric="euclidean"))
        grid.save_csv(tmp_path / "g.csv")
        rows = (tmp_path / "g.csv").read_text().splitlines()
        assert rows[0] == "size,noise,k,precision" and len(rows) == 5
        assert rows[1].startswith("40,0.0,1,")
        grid.save_json(tmp_path / "g.json")
        doc = json.loads((tmp_path / "g.json").read_text())
        assert doc["settings"]["metric"] == "euclidean" and len(doc["cells"]) == 2
