import numpy as np
import pytest

from pixeltower.analysis import (
    gap_report,
    linear_cka,
    modality_gap,
    pairwise_distance_hist,
    patch_kernel_pca,
    pca_project,
)
from pixeltower.errors import ContractError


def unit_rows(rng, n, d):
    x = rng.standard_normal((n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def random_orthogonal(rng, d):
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    return q


# ------------------------------------------------------- modality gap

def test_gap_identical_sets_is_zero():
    rng = np.random.default_rng(0)
    x = unit_rows(rng, 10, 6)
    assert modality_gap(x, x) == 0.0


def test_gap_antipodal_singletons():
    e = np.array([[0.0, 1.0, 0.0]])
    assert abs(modality_gap(e, -e) - 2.0) < 1e-15


def test_gap_matches_scalar_recomputation():
    rng = np.random.default_rng(1)
    x, y = unit_rows(rng, 12, 5), unit_rows(rng, 9, 5)
    # Oracle: plain loops and scalar arithmetic.
    mx = [sum(x[i][j] for i in range(12)) / 12 for j in range(5)]
    my = [sum(y[i][j] for i in range(9)) / 9 for j in range(5)]
    expected = sum((a - b) ** 2 for a, b in zip(mx, my)) ** 0.5
    assert abs(modality_gap(x, y) - expected) < 1e-12


def test_gap_orthogonal_invariance_and_range():
    rng = np.random.default_rng(2)
    x, y = unit_rows(rng, 20, 8), unit_rows(rng, 15, 8)
    r = random_orthogonal(rng, 8)
    g = modality_gap(x, y)
    assert abs(g - modality_gap(x @ r, y @ r)) < 1e-12
    assert 0.0 <= g <= 2.0


def test_gap_rejects_empty():
    with pytest.raises(ContractError):
        modality_gap(np.zeros((0, 4)), np.zeros((3, 4)))


# ---------------------------------------------------------------- pca

def test_pca_line_captures_all_variance():
    t = np.linspace(-1, 1, 20)[:, None]
    data = t * np.array([[1.0, 2.0, -0.5]]) + 3.0
    with pytest.warns(UserWarning):
        coords, ratios = pca_project(data, components=2)
    assert ratios[0] > 0.999999
    assert coords.shape[1] == 1  # rank 1: second component truncated


def test_pca_rotation_invariant_spectrum():
    rng = np.random.default_rng(3)
    data = rng.standard_normal((30, 5))
    r = random_orthogonal(rng, 5)
    _, a = pca_project(data, 3)
    _, b = pca_project(data @ r, 3)
    assert np.allclose(a, b, atol=1e-10)


def test_pca_matches_brute_force_eigensolve():
    rng = np.random.default_rng(4)
    data = rng.standard_normal((5, 3))
    coords, ratios = pca_project(data, components=2)
    # Oracle: direct covariance eigendecomposition.
    centered = data - data.mean(axis=0)
    cov = centered.T @ centered / 4
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    for j in range(2):
        v = vecs[:, j]
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        assert np.allclose(coords[:, j], centered @ v, atol=1e-10)
    assert np.allclose(ratios, vals[:2] / vals.sum(), atol=1e-12)


def test_pca_reproducible():
    rng = np.random.default_rng(5)
    data = rng.standard_normal((40, 6))
    a, _ = pca_project(data, 2)
    b, _ = pca_project(data.copy(), 2)
    assert np.abs(a - b).max() < 1e-8


def test_pca_explained_variance_bounded():
    rng = np.random.default_rng(6)
    data = rng.standard_normal((25, 7))
    _, ratios = pca_project(data, 4)
    assert ratios.sum() <= 1.0 + 1e-12
    assert (np.diff(ratios) <= 1e-12).all()


# ---------------------------------------------------------- histogram

def test_hist_identical_pairs_first_bin():
    rng = np.random.default_rng(7)
    x = unit_rows(rng, 9, 4)
    counts, edges = pairwise_distance_hist(x, x)
    assert counts[0] == 9
    assert counts.sum() == 9
    assert edges[0] == 0.0 and edges[-1] == 2.0


def test_hist_mean_distance_bounds_gap():
    rng = np.random.default_rng(8)
    x, y = unit_rows(rng, 30, 6), unit_rows(rng, 30, 6)
    distances = np.linalg.norm(x - y, axis=1)
    assert distances.mean() >= modality_gap(x, y) - 1e-12


def test_hist_counts_match_direct_loop():
    rng = np.random.default_rng(9)
    x, y = unit_rows(rng, 40, 5), unit_rows(rng, 40, 5)
    counts, edges = pairwise_distance_hist(x, y, bins=20)
    # Oracle: scalar loop over pairs and bins.
    manual = [0] * 20
    for i in range(40):
        d = sum((x[i][j] - y[i][j]) ** 2 for j in range(5)) ** 0.5
        b = min(int(d / (2.0 / 20)), 19)
        manual[b] += 1
    assert counts.tolist() == manual
    assert counts.sum() == 40


def test_hist_rejects_mismatch():
    with pytest.raises(ContractError):
        pairwise_distance_hist(np.zeros((3, 4)), np.zeros((2, 4)))


# ---------------------------------------------------------------- cka

def test_cka_self_is_one():
    rng = np.random.default_rng(10)
    x = rng.standard_normal((20, 6))
    assert abs(linear_cka(x, x) - 1.0) < 1e-12


def test_cka_rotation_invariance():
    rng = np.random.default_rng(11)
    x = rng.standard_normal((25, 6))
    r = random_orthogonal(rng, 6)
    assert abs(linear_cka(x, x @ r) - 1.0) < 1e-9


def test_cka_symmetric_and_bounded():
    rng = np.random.default_rng(12)
    x = rng.standard_normal((30, 5))
    y = rng.standard_normal((30, 8))
    a, b = linear_cka(x, y), linear_cka(y, x)
    assert abs(a - b) < 1e-12
    assert 0.0 <= a <= 1.0


def test_cka_matches_direct_formula():
    rng = np.random.default_rng(13)
    x = rng.standard_normal((50, 4))
    y = rng.standard_normal((50, 7))
    xc = x - x.mean(0)
    yc = y - y.mean(0)
    expected = (np.linalg.norm(yc.T @ xc) ** 2) / (
        np.linalg.norm(xc.T @ xc) * np.linalg.norm(yc.T @ yc)
    )
    assert abs(linear_cka(x, y) - expected) < 1e-12


def test_cka_independent_matrices_small():
    rng = np.random.default_rng(14)
    x = rng.standard_normal((500, 3))
    y = rng.standard_normal((500, 3))
    assert linear_cka(x, y) < 0.1


def test_cka_zero_variance_warns_zero():
    with pytest.warns(UserWarning):
        assert linear_cka(np.ones((5, 3)), np.random.default_rng(0).standard_normal((5, 3))) == 0.0


# --------------------------------------------------- patch kernel pca

def test_patch_pca_rank_one_kernel():
    u = np.random.default_rng(15).standard_normal((16, 1))
    v = np.random.default_rng(16).standard_normal((1, 8))
    with pytest.warns(UserWarning):
        images, spectrum = patch_kernel_pca(u @ v, patch_px=4, components=5)
    assert images.shape == (1, 4, 4, 1)
    assert len(spectrum) == 1


def test_patch_pca_spectrum_nonincreasing():
    kernel = np.random.default_rng(17).standard_normal((16, 12))
    images, spectrum = patch_kernel_pca(kernel, patch_px=4, components=6)
    assert (np.diff(spectrum) <= 1e-12).all()
    assert images.shape == (6, 4, 4, 1)


def test_patch_pca_matches_eigensolve():
    rng = np.random.default_rng(18)
    kernel = rng.standard_normal((16, 10))
    images, spectrum = patch_kernel_pca(kernel, patch_px=4, components=3)
    data = kernel.T
    centered = data - data.mean(axis=0)
    cov = centered.T @ centered / 9
    vals = np.sort(np.linalg.eigvalsh(cov))[::-1]
    assert np.allclose(spectrum, vals[:3], atol=1e-10)


# ------------------------------------------------------------- report

def test_gap_report_bundle():
    rng = np.random.default_rng(19)
    x, y = unit_rows(rng, 12, 6), unit_rows(rng, 12, 6)
    report = gap_report(x, y)
    assert report.gap == modality_gap(x, y)
    assert report.coords.shape == (24, 2)
    assert report.hist_counts.sum() == 12
    assert report.modalities.count("image") == 12
