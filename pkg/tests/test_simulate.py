"""Simulation harness: effect geometry, noise calibration, determinism."""

import numpy as np
import pytest

from posthoc.errors import ParamError
from posthoc.simulate import (
    Region,
    SimConfig,
    effect_volume,
    gaussian_lag1_autocorr,
    simulate_dataset,
    smoothing_norm,
)


def null_config(seed=0, nx=12, ny=12, nz=12, n=8, sigma=1.5):
    return SimConfig(
        nx=nx, ny=ny, nz=nz, n_subjects=n, sigma=sigma, regions=(), seed=seed
    )


def test_zero_regions_is_all_null():
    cfg = null_config()
    stack, h0 = simulate_dataset(cfg)
    assert h0.all()
    assert h0.shape == (12 * 12 * 12,)
    assert stack.data.shape == (8, 12 * 12 * 12)


def test_effect_ball_voxel_count():
    # radius 1.5 around an interior voxel covers the 19 offsets with
    # euclidean norm <= 1.5 (center, 6 faces, 12 edges)
    cfg = SimConfig(
        nx=5, ny=5, nz=5, n_subjects=2, sigma=0.0,
        regions=(Region(center=(2.0, 2.0, 2.0), radius=1.5, effect=1.0),),
        seed=0,
    )
    vol = effect_volume(cfg)
    assert vol.shape == (5, 5, 5)
    assert int(np.count_nonzero(vol)) == 19
    assert vol[2, 2, 2] == 1.0
    assert vol[3, 2, 2] == 1.0 and vol[2, 3, 2] == 1.0 and vol[2, 2, 3] == 1.0
    assert vol[3, 3, 3] == 0.0


def test_overlapping_regions_take_max_effect():
    cfg = SimConfig(
        nx=7, ny=7, nz=7, n_subjects=2, sigma=0.0,
        regions=(
            Region(center=(3.0, 3.0, 3.0), radius=2.0, effect=0.5),
            Region(center=(3.0, 3.0, 3.0), radius=1.0, effect=2.0),
        ),
        seed=0,
    )
    vol = effect_volume(cfg)
    assert vol[3, 3, 3] == 2.0  # stronger region wins at the shared center
    assert vol[5, 3, 3] == 0.5  # only the wide region reaches here


def test_h0_matches_effect_volume_in_x_fastest_order():
    cfg = SimConfig(
        nx=6, ny=5, nz=4, n_subjects=3, sigma=1.0,
        regions=(Region(center=(1.0, 2.0, 1.0), radius=1.2, effect=0.7),),
        seed=4,
    )
    _, h0 = simulate_dataset(cfg)
    vol = effect_volume(cfg)
    assert np.array_equal(h0, (vol == 0.0).ravel(order="F"))
    assert 0 < int((~h0).sum()) < h0.size


def test_strong_unsmoothed_effect_yields_large_z():
    from posthoc.stats import one_sample_z

    # effect 10 vs unit noise gives t ~ 10*sqrt(n); at n=12 the df=11
    # tail still converts that to z above 6
    misses = 0
    for seed in range(50):
        cfg = SimConfig(
            nx=6, ny=6, nz=6, n_subjects=12, sigma=0.0,
            regions=(Region(center=(3.0, 3.0, 3.0), radius=1.5, effect=10.0),),
            seed=seed,
        )
        stack, h0 = simulate_dataset(cfg)
        zmap = one_sample_z(stack)
        if zmap.z[~h0].min() <= 5.0:
            misses += 1
    assert misses == 0


def test_noise_variance_is_one_after_smoothing():
    # the smoothing kernel is L2-normalized, so marginal variance stays 1
    cfg = null_config(seed=9, nx=24, ny=24, nz=24, n=10, sigma=2.0)
    stack, _ = simulate_dataset(cfg)
    per_subject_var = stack.data.astype(np.float64).var(axis=1)
    assert abs(per_subject_var.mean() - 1.0) < 0.1


def test_unsmoothed_noise_variance_is_one():
    cfg = null_config(seed=2, nx=16, ny=16, nz=16, n=6, sigma=0.0)
    stack, _ = simulate_dataset(cfg)
    v = stack.data.astype(np.float64).var()
    assert abs(v - 1.0) < 0.05


@pytest.mark.parametrize("sigma", [1.0, 2.0])
def test_lag1_autocorrelation_matches_closed_form(sigma):
    cfg = null_config(seed=5, nx=30, ny=30, nz=30, n=4, sigma=sigma)
    stack, _ = simulate_dataset(cfg)
    vols = stack.data.reshape(4, 30, 30, 30, order="F").astype(np.float64)
    # wrap-mode smoothing makes the field stationary on the torus, so the
    # circular lag-1 product over the x axis estimates the autocorrelation
    rs = []
    for vol in vols:
        shifted = np.roll(vol, 1, axis=0)
        rs.append(np.mean(vol * shifted) / np.mean(vol * vol))
    predicted = gaussian_lag1_autocorr(sigma)
    assert abs(np.mean(rs) - predicted) < 0.05


def test_lag1_closed_form_values():
    assert gaussian_lag1_autocorr(0.0) == 0.0
    assert gaussian_lag1_autocorr(2.0) == pytest.approx(np.exp(-1.0 / 16.0))
    assert 0.0 < gaussian_lag1_autocorr(1.0) < gaussian_lag1_autocorr(3.0) < 1.0


def test_smoothing_norm_identity_when_sigma_zero():
    assert smoothing_norm((8, 8, 8), 0.0) == 1.0


def test_smoothing_norm_shrinks_with_sigma():
    n1 = smoothing_norm((16, 16, 16), 1.0)
    n2 = smoothing_norm((16, 16, 16), 2.0)
    assert 0.0 < n2 < n1 < 1.0


def test_simulation_is_deterministic():
    cfg = SimConfig(
        nx=10, ny=10, nz=10, n_subjects=5, sigma=1.0,
        regions=(Region(center=(4.0, 4.0, 4.0), radius=2.0, effect=1.0),),
        seed=77,
    )
    a, h0a = simulate_dataset(cfg)
    b, h0b = simulate_dataset(cfg)
    assert a.data.tobytes() == b.data.tobytes()
    assert np.array_equal(h0a, h0b)


def test_seed_changes_noise_but_not_truth():
    base = dict(
        nx=10, ny=10, nz=10, n_subjects=5, sigma=1.0,
        regions=(Region(center=(4.0, 4.0, 4.0), radius=2.0, effect=1.0),),
    )
    a, h0a = simulate_dataset(SimConfig(seed=1, **base))
    b, h0b = simulate_dataset(SimConfig(seed=2, **base))
    assert a.data.tobytes() != b.data.tobytes()
    assert np.array_equal(h0a, h0b)


def test_subject_streams_are_independent_of_count():
    # adding subjects must not perturb the earlier ones (per-subject keying)
    base = dict(nx=8, ny=8, nz=8, sigma=1.0, regions=(), seed=3)
    small, _ = simulate_dataset(SimConfig(n_subjects=4, **base))
    large, _ = simulate_dataset(SimConfig(n_subjects=6, **base))
    assert small.data.tobytes() == large.data[:4].tobytes()


def test_config_json_round_trip():
    cfg = SimConfig(
        nx=10, ny=12, nz=14, n_subjects=5, sigma=1.5,
        voxel_size=(2.0, 2.5, 3.0),
        regions=(Region(center=(4.0, 5.0, 6.0), radius=2.0, effect=1.0),),
        seed=77, pi0_target=0.9,
    )
    assert SimConfig.from_json_dict(cfg.to_json_dict()) == cfg


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(nx=0),
        dict(n_subjects=1),
        dict(sigma=-0.5),
        dict(regions=(Region(center=(50.0, 4.0, 4.0), radius=1.0, effect=1.0),)),
        dict(voxel_size=(3.0, 0.0, 3.0)),
    ],
)
def test_config_validation(kwargs):
    base = dict(
        nx=10, ny=10, nz=10, n_subjects=5, sigma=1.0, regions=(), seed=0
    )
    base.update(kwargs)
    with pytest.raises(ParamError):
        SimConfig(**base)


def test_region_rejects_nonfinite_effect():
    with pytest.raises(ParamError):
        Region(center=(1.0, 1.0, 1.0), radius=1.0, effect=float("nan"))


def test_region_rejects_negative_radius():
    with pytest.raises(ParamError):
        Region(center=(1.0, 1.0, 1.0), radius=-1.0, effect=1.0)
