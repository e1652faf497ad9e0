import numpy as np
import pytest
from scipy import stats as sps

from posthoc.data import SubjectStack
from posthoc.errors import ParamError
from posthoc.stats import (
    P_MIN,
    Z_CAP,
    one_sample_z,
    p_from_z,
    sign_flip_null,
)

from conftest import line_mask, random_stack


def stack_of(*columns):
    """Stack whose voxel j holds columns[j] across subjects."""
    data = np.array(columns, dtype=np.float32).T
    return SubjectStack(line_mask(data.shape[1]), data)


class TestOneSampleZ:
    def test_scalar_oracle(self):
        # independent recomputation: t by formula, z by probit of the t CDF
        vals = np.array([2.1, 1.3, 0.8, 1.7, 1.1], dtype=np.float32)
        stack = stack_of(vals)
        got = one_sample_z(stack).z[0]
        v64 = vals.astype(np.float64)
        t = v64.mean() / (v64.std(ddof=1) / np.sqrt(5))
        expected = sps.norm.isf(sps.t.sf(abs(t), 4)) * np.sign(t)
        assert got == pytest.approx(expected, abs=1e-10)

    def test_matches_ttest_oracle_across_voxels(self, rng):
        stack = random_stack(rng, m=40, n=12)
        res = sps.ttest_1samp(stack.data.astype(np.float64), 0.0, axis=0)
        expected = np.sign(res.statistic) * sps.norm.isf(sps.t.sf(np.abs(res.statistic), 11))
        assert np.allclose(one_sample_z(stack).z, expected, atol=1e-10)

    def test_constant_positive_voxel_capped(self):
        stack = stack_of([1.0, 1.0, 1.0, 1.0])
        assert one_sample_z(stack).z[0] == Z_CAP

    def test_constant_negative_voxel_capped(self):
        stack = stack_of([-2.0, -2.0, -2.0])
        assert one_sample_z(stack).z[0] == -Z_CAP

    def test_all_zero_voxel_is_zero(self):
        stack = stack_of([0.0, 0.0, 0.0])
        assert one_sample_z(stack).z[0] == 0.0

    def test_antisymmetric_pair_is_zero(self):
        stack = stack_of([1.0, -1.0])
        assert one_sample_z(stack).z[0] == 0.0

    def test_flips_all_plus_one_is_default(self, rng):
        stack = random_stack(rng)
        a = one_sample_z(stack).z
        b = one_sample_z(stack, np.ones(stack.n_subjects)).z
        assert np.array_equal(a, b)

    def test_global_sign_flip_negates_z(self, rng):
        stack = random_stack(rng)
        plus = one_sample_z(stack).z
        minus = one_sample_z(stack, -np.ones(stack.n_subjects)).z
        assert np.allclose(plus, -minus, atol=1e-12)

    def test_single_subject_rejected(self):
        stack = stack_of([1.0])
        with pytest.raises(ParamError):
            one_sample_z(stack)

    def test_invalid_flip_values_rejected(self, rng):
        stack = random_stack(rng, n=4)
        with pytest.raises(ParamError):
            one_sample_z(stack, np.array([1.0, -1.0, 0.5, 1.0]))
        with pytest.raises(ParamError):
            one_sample_z(stack, np.ones(3))


class TestPFromZ:
    def test_zero_gives_one(self):
        stack = stack_of([1.0, -1.0])
        p = p_from_z(one_sample_z(stack))
        assert p.p[0] == 1.0

    def test_gaussian_quantile_oracle(self, rng):
        from posthoc.data import StatMap

        mask = line_mask(1)
        zmap = StatMap(mask, np.array([1.959964]))
        assert p_from_z(zmap).p[0] == pytest.approx(0.05, abs=1e-6)

    def test_two_sided_matches_scipy(self, rng):
        stack = random_stack(rng)
        zmap = one_sample_z(stack)
        assert np.allclose(p_from_z(zmap).p, 2 * sps.norm.sf(np.abs(zmap.z)), atol=1e-14)

    def test_one_sided_symmetry(self):
        from posthoc.data import StatMap

        mask = line_mask(7)
        z = np.array([-3.0, -1.0, -0.25, 0.0, 0.25, 1.0, 3.0])
        p_pos = p_from_z(StatMap(mask, z), "one-sided").p
        p_neg = p_from_z(StatMap(mask, -z), "one-sided").p
        assert np.all(np.abs(p_pos + p_neg - 1.0) < 1e-12)

    def test_floor_applied_at_cap(self):
        from posthoc.data import StatMap

        mask = line_mask(1)
        p = p_from_z(StatMap(mask, np.array([Z_CAP])))
        assert p.p[0] == P_MIN

    def test_unknown_sidedness(self, rng):
        stack = random_stack(rng)
        with pytest.raises(ParamError):
            p_from_z(one_sample_z(stack), "both")


class TestSignFlipNull:
    def test_row0_is_observed(self, rng):
        stack = random_stack(rng)
        null = sign_flip_null(stack, 16, seed=5)
        observed = np.sort(p_from_z(one_sample_z(stack)).p)
        assert np.array_equal(null.rows[0], observed)

    def test_rows_sorted_in_range(self, rng):
        null = sign_flip_null(random_stack(rng), 32, seed=9)
        assert np.all(null.rows[:, 1:] >= null.rows[:, :-1])
        assert null.rows.min() >= P_MIN and null.rows.max() <= 1.0

    def test_deterministic_in_seed(self, rng):
        stack = random_stack(rng)
        a = sign_flip_null(stack, 24, seed=3)
        b = sign_flip_null(stack, 24, seed=3)
        c = sign_flip_null(stack, 24, seed=4)
        assert a.rows.tobytes() == b.rows.tobytes()
        assert a.rows.tobytes() != c.rows.tobytes()

    def test_worker_count_does_not_change_bytes(self, rng):
        stack = random_stack(rng)
        serial = sign_flip_null(stack, 40, seed=11, workers=1)
        threaded = sign_flip_null(stack, 40, seed=11, workers=8)
        assert serial.rows.tobytes() == threaded.rows.tobytes()

    def test_prefix_property(self, rng):
        # first B rows coincide for nested B: rows keyed by index, not a stream
        stack = random_stack(rng)
        small = sign_flip_null(stack, 8, seed=2)
        big = sign_flip_null(stack, 16, seed=2)
        assert np.array_equal(big.rows[:8], small.rows)

    def test_b_too_small(self, rng):
        with pytest.raises(ParamError):
            sign_flip_null(random_stack(rng), 1, seed=0)

    def test_min_p_matches_min_of_uniforms(self):
        # two-sided flip p-values are exact t-test p-values, uniform under the
        # null, so row minima follow the min-of-m-uniforms law
        rng = np.random.default_rng(77)
        m, n, B = 50, 12, 1000
        stack = SubjectStack(line_mask(m), rng.standard_normal((n, m)).astype(np.float32))
        null = sign_flip_null(stack, B, seed=13)
        minima = np.sort(null.rows[:, 0])
        ecdf = np.arange(1, B + 1) / B
        law = 1.0 - (1.0 - minima) ** m
        ks = np.max(np.abs(ecdf - law))
        assert ks <= 0.08

    def test_observed_rank_uniform_within_columns(self):
        # symmetric null data: the observed row is exchangeable with the
        # flipped rows, so its within-column rank is uniform on average
        rng = np.random.default_rng(123)
        B, m, n, n_stacks = 50, 20, 8, 200
        ranks = []
        for s in range(n_stacks):
            data = rng.standard_normal((n, m)).astype(np.float32)
            stack = SubjectStack(line_mask(m), data)
            null = sign_flip_null(stack, B, seed=1000 + s)
            col = null.rows
            obs = col[0]
            frac = (np.sum(col < obs, axis=0) + 0.5 * np.sum(col == obs, axis=0)) / B
            ranks.append(frac.mean())
        assert 0.45 <= np.mean(ranks) <= 0.55
