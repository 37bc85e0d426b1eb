"""Decoder fitting: fixture and data modes, objectives, uncertainty."""

import numpy as np
import pytest

from decodergen import (BasisSpec, FixtureSpec, build_scene, fit_linear_decoder,
                        render_scene, standard_calib)
from decodergen.basis import dct2d_basis
from decodergen.fit import _laplace_irls, depth_to_proximity, uncertainty_map


def rendered_frame(seed=11, w=64, h=48):
    spec = FixtureSpec(width=w, height=h, seed=seed)
    scene = build_scene(spec)
    return render_scene(scene, np.eye(4), standard_calib(w, h))


def test_fixture_mode_records_a_code_that_explains_the_bias():
    image, depth = rendered_frame()
    basis = BasisSpec(kind="dct2d", code_size=8)
    data, info = fit_linear_decoder(
        image, depth, basis, 2.0, mode="fixture",
        rng=np.random.default_rng(5), bias_rms=0.03, rough_rms=0.002,
    )
    prox = depth_to_proximity(depth, 2.0)
    lvl = data.levels[0]
    zero_rms = np.sqrt(np.mean((lvl.mean_zero.astype(np.float64) - prox) ** 2))
    dec = lvl.mean_zero.astype(np.float64) \
        + (lvl.jacobian.astype(np.float64) @ info.code).reshape(48, 64)
    code_rms = np.sqrt(np.mean((dec - prox) ** 2))
    assert 0.02 < zero_rms < 0.05  # bias is really there
    assert info.rms < 0.01
    assert code_rms < 1.5 * info.rms + 1e-6  # float32 storage dust


def test_levels_halve_and_stay_in_range():
    image, depth = rendered_frame(seed=2)
    data, _ = fit_linear_decoder(image, depth, BasisSpec(code_size=5), 2.0,
                                 mode="fixture", rng=np.random.default_rng(1))
    dims = [(l.width, l.height) for l in data.levels]
    assert dims == [(64, 48), (32, 24), (16, 12), (8, 6)]
    for l in data.levels:
        assert l.mean_zero.min() > 0 and l.mean_zero.max() <= 1
        assert l.uncertainty.min() > 0
        assert l.jacobian.shape == (l.width * l.height, 5)


def test_downsampled_jacobian_commutes_with_decoding():
    image, depth = rendered_frame(seed=3)
    data, info = fit_linear_decoder(image, depth, BasisSpec(code_size=6), 2.0,
                                    mode="fixture", rng=np.random.default_rng(2))
    c = np.random.default_rng(3).standard_normal(6)
    l0, l1 = data.levels[0], data.levels[1]
    fine = l0.mean_zero.astype(np.float64) \
        + (l0.jacobian.astype(np.float64) @ c).reshape(48, 64)
    pooled = fine.reshape(24, 2, 32, 2).mean(axis=(1, 3))
    coarse = l1.mean_zero.astype(np.float64) \
        + (l1.jacobian.astype(np.float64) @ c).reshape(24, 32)
    assert np.abs(pooled - coarse).max() < 1e-6  # float32 rounding only


def test_data_mode_fits_through_holes():
    image, depth = rendered_frame(seed=7)
    valid = np.random.default_rng(0).random(depth.shape) > 0.3
    data, info = fit_linear_decoder(image, depth, BasisSpec(code_size=12), 2.0,
                                    mode="data", valid=valid)
    prox = depth_to_proximity(depth, 2.0)
    lvl = data.levels[0]
    dec = lvl.mean_zero.astype(np.float64) \
        + (lvl.jacobian.astype(np.float64) @ info.code).reshape(48, 64)
    # code must improve on the smoothed prior over the valid set
    prior_rms = np.sqrt(np.mean((lvl.mean_zero.astype(np.float64) - prox)[valid] ** 2))
    assert np.sqrt(np.mean((dec - prox)[valid] ** 2)) < prior_rms
    assert info.rms < prior_rms


def test_laplace_objective_resists_outliers():
    rng = np.random.default_rng(9)
    phi = dct2d_basis(16, 12, 6, smoothness=0.0)
    c0 = rng.standard_normal(6)
    r = phi @ c0
    hits = rng.random(r.size) < 0.05
    r = r + hits * rng.choice([-1.0, 1.0], r.size) * 0.5  # gross outliers
    b = np.full(r.size, 0.1)
    c_l1 = _laplace_irls(phi, r, b)
    c_l2 = np.linalg.lstsq(phi, r, rcond=None)[0]
    assert np.linalg.norm(c_l1 - c0) < 0.2 * np.linalg.norm(c_l2 - c0)
    # and it actually descends the stated objective
    obj = lambda c: np.sum(np.abs(r - phi @ c) / b)
    assert obj(c_l1) < obj(c_l2)


def test_uncertainty_rises_at_depth_discontinuities():
    depth = np.full((40, 60), 2.5)
    depth[12:28, 20:40] = 1.2  # occluding slab
    b = uncertainty_map(depth_to_proximity(depth, 2.0))
    edge = b[11:14, 20:40].max()
    flat = np.median(b[:6])
    assert edge > 5 * flat
    assert flat == pytest.approx(0.05, abs=1e-3)


def test_bad_mode_and_objective_raise():
    image, depth = rendered_frame(seed=1)
    with pytest.raises(ValueError):
        fit_linear_decoder(image, depth, BasisSpec(code_size=4), 2.0, mode="vae")
    with pytest.raises(ValueError):
        fit_linear_decoder(image, depth, BasisSpec(code_size=4), 2.0,
                           mode="data", objective="huber")
