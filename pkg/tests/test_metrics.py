import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from embedaudit.distances import DistanceMatrix
from embedaudit.metrics import (
    ConsistencyRecord,
    DeltaVector,
    agreement_values,
    average_ranks,
    between_acc,
    between_rho,
    bootstrap_ci,
    delta,
    delta_vector,
    original_space_rho,
    spearman,
    summarize,
    within_consistency,
)
from embedaudit.transforms import OG, TransformSpec


def brute_ranks(x):
    x = np.asarray(x, dtype=float)
    return np.array([np.sum(x < v) + (np.sum(x == v) + 1) / 2.0 for v in x])


def brute_spearman(x, y):
    rx, ry = brute_ranks(x), brute_ranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = np.sqrt(np.dot(rx, rx) * np.dot(ry, ry))
    if denom == 0:
        return float("nan")
    return float(np.dot(rx, ry) / denom)


class TestDelta:
    def test_clear_nearest(self):
        assert delta(0.1, [0.5, 0.9]) == 0

    def test_tie_counts_as_error(self):
        assert delta(0.5, [0.5]) == 1

    def test_other_original_nearer(self):
        assert delta(0.7, [0.3]) == 1

    def test_needs_competitors(self):
        with pytest.raises(ValueError):
            delta(0.1, [])


class TestWithinConsistency:
    def _dv(self, entries):
        return DeltaVector(entries=entries, space="audio", measure="dtw", transform=OG)

    def test_all_consistent(self):
        assert within_consistency(self._dv({"a": 0, "b": 0})) == 1.0

    def test_all_errors(self):
        assert within_consistency(self._dv({"a": 1, "b": 1})) == 0.0

    def test_half(self):
        assert within_consistency(self._dv({"a": 0, "b": 1, "c": 0, "d": 1})) == 0.5


class TestSpearman:
    def test_identity(self):
        assert spearman([1.0, 5.0, 2.0, 9.0], [1.0, 5.0, 2.0, 9.0]) == 1.0

    def test_reversed(self):
        assert spearman([1.0, 2.0, 3.0, 4.0], [4.0, 3.0, 2.0, 1.0]) == -1.0

    def test_hand_computed(self):
        # d^2 = (0, 1, 1, 0): 1 - 6*2/(4*15)
        assert spearman([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8, abs=1e-12)

    def test_constant_input_is_nan(self):
        assert np.isnan(spearman([3, 3, 3, 3], [1, 2, 3, 4]))

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            spearman([1, 2], [1, 2, 3])

    def test_too_short(self):
        with pytest.raises(ValueError):
            spearman([1, 2], [2, 1])

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=100, deadline=None)
    def test_matches_brute_force_with_ties(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(3, 40))
        x = np.round(rng.normal(size=n), 1)
        y = np.round(rng.normal(size=n), 1)
        mine, oracle = spearman(x, y), brute_spearman(x, y)
        if np.isnan(oracle):
            assert np.isnan(mine)
        else:
            assert mine == pytest.approx(oracle, abs=1e-12)

    def test_average_ranks_ties(self):
        assert np.array_equal(average_ranks([10.0, 20.0, 20.0, 30.0]),
                              [1.0, 2.5, 2.5, 4.0])


class TestBetween:
    def test_monotone_map_gives_one(self):
        audio = np.array([0.3, 1.2, 0.7, 2.0, 0.9])
        latent = np.exp(audio)
        assert between_rho(audio, latent) == pytest.approx(1.0, abs=1e-12)

    def test_reversed_ordering_gives_minus_one(self):
        audio = np.array([0.3, 1.2, 0.7, 2.0, 0.9])
        assert between_rho(audio, -audio) == pytest.approx(-1.0, abs=1e-12)

    def test_matches_oracle_on_random_rows(self):
        rng = np.random.default_rng(12)
        a, b = rng.normal(size=(2, 10))
        assert between_rho(a, b) == pytest.approx(brute_spearman(a, b), abs=1e-12)

    def _dv(self, entries):
        return DeltaVector(entries=entries, space="x", measure="m", transform=OG)

    def test_acc_identical(self):
        v = self._dv({"a": 0, "b": 1})
        assert between_acc(v, v) == 1.0

    def test_acc_complementary(self):
        a = self._dv({"a": 0, "b": 1})
        b = self._dv({"a": 1, "b": 0})
        assert between_acc(a, b) == 0.0

    def test_acc_half(self):
        a = self._dv({"a": 0, "b": 0, "c": 1, "d": 1})
        b = self._dv({"a": 0, "b": 1, "c": 1, "d": 0})
        assert between_acc(a, b) == 0.5

    def test_acc_key_mismatch(self):
        with pytest.raises(ValueError):
            between_acc(self._dv({"a": 0}), self._dv({"b": 0}))

    def test_acc_equals_hamming_complement(self):
        rng = np.random.default_rng(3)
        keys = [f"k{i}" for i in range(50)]
        a = self._dv({k: int(rng.integers(0, 2)) for k in keys})
        b = self._dv({k: int(rng.integers(0, 2)) for k in keys})
        hamming = sum(a.entries[k] != b.entries[k] for k in keys)
        assert between_acc(a, b) == pytest.approx(1.0 - hamming / len(keys))


class TestDeltaVector:
    def _matrix(self, values, ids):
        return DistanceMatrix(row_ids=ids, col_ids=ids, values=np.asarray(values, float),
                              measure="euclidean", space="latent")

    def test_delta_vector_from_matrix(self):
        ids = ("a", "b", "c")
        values = [
            [0.1, 0.5, 0.9],  # a: own nearest
            [0.2, 0.6, 0.3],  # b: a is nearer than own
            [0.7, 0.8, 0.4],  # c: own nearest
        ]
        dv = delta_vector(self._matrix(values, ids), {i: i for i in ids}, "latent", OG)
        assert dv.entries == {"a": 0, "b": 1, "c": 0}

    def test_missing_own_column(self):
        ids = ("a", "b")
        matrix = self._matrix([[0.1, 0.5], [0.2, 0.6]], ids)
        with pytest.raises(ValueError):
            delta_vector(matrix, {"a": "zz", "b": "b"}, "latent", OG)


class TestOriginalSpaceRho:
    def _pair(self, audio_values, latent_values, n):
        ids = tuple(f"c{i}" for i in range(n))
        return (
            DistanceMatrix(row_ids=ids, col_ids=ids, values=audio_values,
                           measure="dtw", space="audio"),
            DistanceMatrix(row_ids=ids, col_ids=ids, values=latent_values,
                           measure="euclidean", space="latent"),
        )

    def test_scaled_copy_gives_all_ones(self):
        rng = np.random.default_rng(5)
        audio = np.abs(rng.normal(size=(5, 5)))
        np.fill_diagonal(audio, 0.0)
        a, z = self._pair(audio, 2.0 * audio, 5)
        assert original_space_rho(a, z) == pytest.approx([1.0] * 5)

    def test_matches_per_point_oracle(self):
        rng = np.random.default_rng(6)
        audio = np.abs(rng.normal(size=(5, 5)))
        latent = np.abs(rng.normal(size=(5, 5)))
        a, z = self._pair(audio, latent, 5)
        rhos = original_space_rho(a, z)
        for i in range(5):
            expect = brute_spearman(np.delete(audio[i], i), np.delete(latent[i], i))
            assert rhos[i] == pytest.approx(expect, abs=1e-12)

    def test_shuffled_latent_rows_decorrelate(self):
        rng = np.random.default_rng(7)
        audio = np.abs(rng.normal(size=(12, 12)))
        low_mean_count = 0
        for seed in range(100):
            perm = np.random.default_rng(seed).permutation(12)
            a, z = self._pair(audio, audio[perm][:, perm], 12)
            rhos = original_space_rho(a, z)
            if abs(np.mean(rhos)) < 0.5:
                low_mean_count += 1
        assert low_mean_count >= 90

    def test_needs_four_originals(self):
        rng = np.random.default_rng(8)
        m = np.abs(rng.normal(size=(3, 3)))
        a, z = self._pair(m, m, 3)
        with pytest.raises(ValueError):
            original_space_rho(a, z)


class TestBootstrap:
    def test_constant_list_degenerate(self):
        boot = bootstrap_ci([2.5] * 10, seed=1)
        assert boot.ci_low == boot.ci_high == boot.mean == 2.5

    def test_interval_contains_mean(self):
        rng = np.random.default_rng(9)
        for i in range(100):
            values = rng.normal(size=int(rng.integers(2, 40)))
            boot = bootstrap_ci(values, seed=i)
            assert boot.ci_low <= boot.mean <= boot.ci_high

    def test_deterministic_per_seed(self):
        values = np.random.default_rng(10).normal(size=30)
        assert bootstrap_ci(values, seed=4) == bootstrap_ci(values, seed=4)
        assert bootstrap_ci(values, seed=4) != bootstrap_ci(values, seed=5)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            bootstrap_ci([])


class TestConsistencyRecord:
    def test_summarize_builds_valid_record(self):
        record = summarize("CW", [1.0, 1.0, 0.0, 1.0], encoder="e",
                           audio_measure="dtw", category="PN", magnitude=30.0, seed=3)
        assert record.value == 0.75
        assert record.ci_low <= record.value <= record.ci_high
        assert record.n == 4

    def test_range_validation(self):
        with pytest.raises(ValueError):
            ConsistencyRecord(metric="CW", value=1.2, ci_low=0.0, ci_high=1.3,
                              encoder="", task_label="", audio_measure="",
                              latent_measure="", category="PN", magnitude=1.0, n=3)


class TestArgminInvariance:
    def test_cw_invariant_under_monotone_rescale(self):
        rng = np.random.default_rng(11)
        ids = tuple(f"c{i}" for i in range(8))
        values = np.abs(rng.normal(size=(8, 8))) + 0.1
        own = {i: i for i in ids}
        spec = TransformSpec("PN", 30.0)

        def cw(v):
            matrix = DistanceMatrix(row_ids=ids, col_ids=ids, values=v,
                                    measure="dtw", space="audio")
            return within_consistency(delta_vector(matrix, own, "audio", spec))

        base = cw(values)
        for transform in (np.sqrt, np.log1p, lambda v: v**3 + 2 * v):
            assert cw(transform(values)) == base

    def test_cb_rho_invariant_under_monotone_rescale(self):
        rng = np.random.default_rng(12)
        a, z = np.abs(rng.normal(size=(2, 9)))
        assert between_rho(np.exp(a), z) == pytest.approx(between_rho(a, z), abs=1e-12)
