"""Basis construction properties."""

import numpy as np
import pytest

from decodergen import BasisSpec, BasisTooLarge, build_basis, pca_basis
from decodergen.basis import dct2d_basis, edge_modulation, gaussian_rbf_basis


def test_dct_columns_are_orthonormal_without_smoothing():
    phi = dct2d_basis(16, 12, 20, smoothness=0.0)
    gram = phi.T @ phi
    assert np.allclose(gram, np.eye(20), atol=1e-10)


def test_dct_leads_with_the_constant_term():
    phi = dct2d_basis(10, 8, 5, smoothness=0.0)
    dc = phi[:, 0]
    assert np.allclose(dc, dc[0])
    assert np.isclose(np.linalg.norm(dc), 1.0)


def test_smoothness_attenuates_high_frequencies():
    plain = dct2d_basis(16, 16, 10, smoothness=0.0)
    shaped = dct2d_basis(16, 16, 10, smoothness=2.0)
    norms = np.linalg.norm(shaped, axis=0)
    assert np.isclose(norms[0], 1.0)  # DC untouched
    assert np.all(norms[1:] < 1.0)
    assert norms[-1] < norms[1]  # higher frequency, stronger shrink
    # shape preserved, only amplitude scales
    ratio = shaped[:, 3] / plain[:, 3]
    assert np.allclose(ratio, ratio[0])


def test_code_size_cannot_exceed_pixel_count():
    with pytest.raises(BasisTooLarge):
        dct2d_basis(8, 8, 65)
    with pytest.raises(BasisTooLarge):
        gaussian_rbf_basis(8, 8, 65)
    with pytest.raises(BasisTooLarge):
        pca_basis(np.random.default_rng(0).standard_normal((10, 64)), 11)


def test_rbf_columns_are_unit_localized_bumps():
    phi = gaussian_rbf_basis(32, 24, 9, smoothness=0.8)
    assert phi.shape == (768, 9)
    assert np.allclose(np.linalg.norm(phi, axis=0), 1.0)
    assert np.all(phi > 0)
    # peaks land on distinct pixels spread over the image
    peaks = np.argmax(phi, axis=0)
    assert len(set(peaks.tolist())) == 9


def test_pca_recovers_a_planted_subspace():
    rng = np.random.default_rng(3)
    basis_true = rng.standard_normal((50, 3))
    coeffs = rng.standard_normal((40, 3)) * [5.0, 2.0, 1.0]
    samples = coeffs @ basis_true.T + 1e-9 * rng.standard_normal((40, 50))
    cols, ratio = pca_basis(samples, 3)
    assert ratio[:3].sum() > 1 - 1e-12
    assert np.isclose(ratio.sum(), 1.0)
    # planted vectors lie in the recovered span
    proj = cols @ (cols.T @ basis_true)
    assert np.allclose(proj, basis_true, atol=1e-6)


def test_edge_modulation_is_one_on_flat_images_and_dips_on_edges():
    flat = np.full((12, 16), 0.4)
    assert np.allclose(edge_modulation(flat), 1.0)
    step = np.zeros((12, 16))
    step[:, 8:] = 1.0
    m = edge_modulation(step, strength=1.0).reshape(12, 16)
    assert np.all(m <= 1.0)
    assert m[:, 7:9].max() < 0.2  # strong attenuation across the step
    assert m[:, :4].min() > 0.9  # flat region barely touched


def test_build_basis_dispatch():
    spec = BasisSpec(kind="dct2d", code_size=6, smoothness=0.0)
    assert build_basis(spec, 10, 8).shape == (80, 6)
    spec = BasisSpec(kind="gaussian_rbf", code_size=6)
    assert build_basis(spec, 10, 8).shape == (80, 6)
    with pytest.raises(ValueError):
        build_basis(BasisSpec(kind="pca", code_size=6), 10, 8)
    with pytest.raises(ValueError):
        build_basis(BasisSpec(kind="wavelet", code_size=6), 10, 8)
