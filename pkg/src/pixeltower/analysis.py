"""Representation diagnostics over embedding and activation matrices.

All analyses are read-only numpy computations: the Euclidean gap between
modality means, low-dimensional PCA projections, paired-distance
histograms, linear centered kernel alignment between layer outputs, and
PCA of the patch-embedding kernel. Unit-norm embeddings bound pairwise
distances by 2, which fixes the histogram range.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, ShapeError

HIST_BINS = 50
HIST_RANGE = (0.0, 2.0)


def modality_gap(image_embs: np.ndarray, text_embs: np.ndarray) -> float:
    """Euclidean distance between the image-mean and text-mean embeddings.
    Row counts may differ; dimensions must match."""
    image_embs, text_embs = np.asarray(image_embs), np.asarray(text_embs)
    if image_embs.size == 0 or text_embs.size == 0:
        raise ContractError("modality_gap needs nonempty embedding sets")
    if image_embs.shape[1] != text_embs.shape[1]:
        raise ShapeError("embedding dimensions differ")
    return float(np.linalg.norm(image_embs.mean(axis=0) - text_embs.mean(axis=0)))


def pca_project(embeddings: np.ndarray, components: int = 2):
    """Project onto the top principal components of the (mean-centered)
    data matrix via the d x d covariance eigendecomposition.

    Sign convention: each component's largest-magnitude coordinate is
    positive, so projections are reproducible. Returns (coords N x k,
    explained_variance_ratio k); asks beyond the matrix rank are
    truncated with a warning.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    n, d = x.shape
    if n <= components:
        raise ContractError(f"need more than {components} rows, got {n}")
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals, eigvecs = eigvals[order], eigvecs[:, order]
    eigvals = np.clip(eigvals, 0.0, None)
    rank = int((eigvals > eigvals[0] * 1e-12).sum()) if eigvals[0] > 0 else 0
    k = min(components, rank)
    if k < components:
        warnings.warn(f"rank {rank} below requested {components} components; truncating")
    basis = eigvecs[:, :k]
    for j in range(k):
        col = basis[:, j]
        if col[np.argmax(np.abs(col))] < 0:
            basis[:, j] = -col
    coords = centered @ basis
    total = eigvals.sum()
    ratios = eigvals[:k] / total if total > 0 else np.zeros(k)
    return coords, ratios


def pairwise_distance_hist(image_embs: np.ndarray, text_embs: np.ndarray, bins: int = HIST_BINS):
    """Histogram of ||image_i - text_i|| over aligned pairs, binned on
    [0, 2]. Returns (counts, bin_edges)."""
    image_embs, text_embs = np.asarray(image_embs), np.asarray(text_embs)
    if image_embs.shape != text_embs.shape:
        raise ContractError(
            f"paired inputs must align: {image_embs.shape} vs {text_embs.shape}"
        )
    distances = np.linalg.norm(image_embs - text_embs, axis=1)
    counts, edges = np.histogram(distances, bins=bins, range=HIST_RANGE)
    return counts, edges


def linear_cka(x: np.ndarray, y: np.ndarray) -> float:
    """Linear centered kernel alignment between two activation matrices
    over the same examples: ||Y^T X||_F^2 / (||X^T X||_F ||Y^T Y||_F)
    after column centering. Zero-variance input yields 0 with a warning."""
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ContractError(f"need N x d matrices with equal N: {x.shape} vs {y.shape}")
    if x.shape[0] < 2:
        raise ContractError("need at least 2 rows")
    xc = x - x.mean(axis=0)
    yc = y - y.mean(axis=0)
    cross = np.linalg.norm(yc.T @ xc) ** 2
    den = np.linalg.norm(xc.T @ xc) * np.linalg.norm(yc.T @ yc)
    if den == 0.0:
        warnings.warn("zero-variance input to linear_cka; returning 0")
        return 0.0
    return float(cross / den)


def patch_kernel_pca(kernel: np.ndarray, patch_px: int, channels: int = 1, components: int = 30):
    """PCA of the patch-embedding kernel columns, each component folded
    back into a patch_px x patch_px x channels image.

    kernel has shape (patch_dim, width): width columns of patch_dim
    each. Returns (component images [k, p, p, c], spectrum [k]).
    """
    kernel = np.asarray(kernel, dtype=np.float64)
    patch_dim = patch_px * patch_px * channels
    if kernel.ndim != 2 or kernel.shape[0] != patch_dim:
        raise ShapeError(f"kernel must be ({patch_dim}, width), got {kernel.shape}")
    data = kernel.T  # width samples of dimension patch_dim
    centered = data - data.mean(axis=0)
    cov = centered.T @ centered / max(1, data.shape[0] - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.clip(eigvals[order], 0.0, None)
    eigvecs = eigvecs[:, order]
    rank = int((eigvals > max(eigvals[0], 1e-300) * 1e-12).sum()) if eigvals.size else 0
    k = min(components, rank)
    if k < components:
        warnings.warn(f"kernel rank {rank} below requested {components}; truncating")
    images = np.empty((k, patch_px, patch_px, channels))
    for j in range(k):
        col = eigvecs[:, j]
        if col[np.argmax(np.abs(col))] < 0:
            col = -col
        images[j] = col.reshape(patch_px, patch_px, channels)
    return images, eigvals[:k]


@dataclass
class GapReport:
    gap: float
    image_mean: np.ndarray
    text_mean: np.ndarray
    coords: np.ndarray  # (N_img + N_txt, 2) PCA projection of the stack
    modalities: list[str]
    hist_counts: np.ndarray
    hist_edges: np.ndarray


def gap_report(image_embs: np.ndarray, text_embs: np.ndarray, bins: int = HIST_BINS) -> GapReport:
    """Bundle the gap, the 2-component projection of the stacked
    embeddings, and the paired-distance histogram (pairs required)."""
    image_embs, text_embs = np.asarray(image_embs), np.asarray(text_embs)
    gap = modality_gap(image_embs, text_embs)
    stacked = np.vstack([image_embs, text_embs])
    coords, _ = pca_project(stacked, components=2)
    counts, edges = pairwise_distance_hist(image_embs, text_embs, bins=bins)
    return GapReport(
        gap=gap,
        image_mean=image_embs.mean(axis=0),
        text_mean=text_embs.mean(axis=0),
        coords=coords,
        modalities=["image"] * len(image_embs) + ["rendered_text"] * len(text_embs),
        hist_counts=counts,
        hist_edges=edges,
    )
