#!/usr/bin/env python3
"""Representation diagnostics: modality gap, PCA, distances, CKA.

Two point clouds on the unit sphere stand in for image and text
embeddings; the same functions run unchanged on real checkpoint output
(see the embed subcommand and the analysis container format).
"""

import numpy as np

from pixeltower.analysis import (
    gap_report,
    linear_cka,
    modality_gap,
    pairwise_distance_hist,
    patch_kernel_pca,
    pca_project,
)

rng = np.random.default_rng(0)

def cloud(center, n=100, spread=0.4):
    x = center + spread * rng.standard_normal((n, 16))
    return x / np.linalg.norm(x, axis=1, keepdims=True)

center = rng.standard_normal(16)
images = cloud(center)
texts_near = cloud(center + 0.3 * rng.standard_normal(16))
texts_far = cloud(-center)

print(f"gap, overlapping clouds: {modality_gap(images, texts_near):.3f}")
print(f"gap, opposite clouds:    {modality_gap(images, texts_far):.3f}  (2.0 is the unit-norm maximum)")

report = gap_report(images, texts_near)
coords = report.coords
print(f"2-component projection of {len(coords)} embeddings; first image point -> {coords[0].round(3)}")

counts, edges = pairwise_distance_hist(images, texts_near, bins=10)
print("paired-distance histogram on [0, 2]:", counts.tolist())

# CKA is 1 for any rotation of the same representation.
q, _ = np.linalg.qr(rng.standard_normal((16, 16)))
print(f"CKA(X, XQ) = {linear_cka(images, images @ q):.6f}")
print(f"CKA(X, noise) = {linear_cka(images, rng.standard_normal(images.shape)):.3f}")

# Patch-kernel PCA turns a (patch_dim x width) kernel into basis patches.
kernel = rng.standard_normal((64, 48))
components, spectrum = patch_kernel_pca(kernel, patch_px=8, components=5)
print(f"top-5 kernel spectrum: {spectrum.round(2)}")
