"""Clustering of surface normals into dominant plane directions.

Two modes: axial k-means with an orthogonality constraint (three mutually
perpendicular axes, each covering both signs), and a histogram mode that
bins folded normals on a hemisphere lattice and keeps thresholded,
non-max-suppressed peaks. Connected planar patches are then extracted per
assigned axis.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .camera import Intrinsics, NormalMap, viewing_ray

NO_LABEL = -1
FOUR_CONN = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass(frozen=True)
class PlanarPatch:
    mask: np.ndarray      # (H, W) bool, 4-connected
    normal: np.ndarray    # unit, camera-facing (set after refinement)
    pixel_count: int
    axis_label: int

    def top_left(self):
        ys, xs = np.nonzero(self.mask)
        order = np.lexsort((xs, ys))
        return int(ys[order[0]]), int(xs[order[0]])


def _principal_axis(vectors):
    """Largest-eigenvalue eigenvector of the scatter sum(v v^T)."""
    s = vectors.T @ vectors
    _, vecs = np.linalg.eigh(s)
    return vecs[:, -1]


def _nearest_rotation(M):
    u, _, vt = np.linalg.svd(M)
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def _assign(normals_flat, axes, cos_gate):
    """Axial assignment with a minimum |dot| gate. axes: (3, k) columns."""
    dots = np.abs(normals_flat @ axes)
    labels = np.argmax(dots, axis=1)
    best = dots[np.arange(len(labels)), labels]
    labels[best < cos_gate] = NO_LABEL
    return labels


def cluster_normals_orthogonal(
    normals: NormalMap,
    theta_assign: float = 30.0,
    max_iters: int = 50,
    stride: int = 2,
):
    """Fit three mutually orthogonal axial directions to the valid normals.

    Returns (frame, labels): frame is a rotation matrix whose columns are the
    axes (None when fewer than 100 valid normals), labels is an (H, W) int
    map with values in {-1, 0, 1, 2} gated by theta_assign.
    """
    h, w = normals.valid.shape
    labels_full = np.full((h, w), NO_LABEL, dtype=np.int32)
    sub = normals.valid[::stride, ::stride]
    n_sub = normals.normals[::stride, ::stride][sub]
    if normals.valid.sum() < 100 or len(n_sub) < 3:
        return None, labels_full

    cos_gate = np.cos(np.radians(theta_assign))

    def lloyd(axes):
        labels = np.full(len(n_sub), -2, dtype=np.int64)
        for _ in range(max_iters):
            dots = np.abs(n_sub @ axes)
            new_labels = np.argmax(dots, axis=1)
            if np.array_equal(new_labels, labels):
                break
            labels = new_labels
            M = axes.copy()
            weights = np.zeros(3)
            for j in range(3):
                members = n_sub[labels == j]
                if len(members) > 0:
                    M[:, j] = _principal_axis(members)
                    weights[j] = len(members)
            # mass-weighted Procrustes: a sparse or empty cluster must not
            # drag the well-supported axes away from their fitted directions
            axes = _nearest_rotation(M * (weights / weights.sum()))
        # score only the alignment that survives the assignment gate, so a
        # frame that nails the dominant plane beats one that splits the
        # difference across all of them
        best = np.max(np.abs(n_sub @ axes), axis=1)
        return axes, float(np.sum(np.square(best[best >= cos_gate])))

    # deterministic multi-start: the axial k-means objective has local
    # optima, so seed from the scatter eigenframe, the hemisphere-histogram
    # mode, and the camera frame, and keep the best converged fit
    _, vecs = np.linalg.eigh(n_sub.T @ n_sub)
    inits = [_nearest_rotation(vecs), np.eye(3)]
    folded = np.where((n_sub[:, 2] > 0)[:, None], -n_sub, n_sub)
    centers = _fibonacci_hemisphere(200)
    peak = centers[np.argmax(np.bincount(
        np.argmax(np.abs(folded @ centers.T), axis=1), minlength=200
    ))]
    seed = np.eye(3)[np.argmin(np.abs(peak))]
    u = np.cross(peak, seed)
    u /= np.linalg.norm(u)
    inits.append(np.column_stack([peak, u, np.cross(peak, u)]))

    axes = max((lloyd(a) for a in inits), key=lambda t: t[1])[0]
    flat = _assign(normals.normals[normals.valid], axes, cos_gate)
    labels_full[normals.valid] = flat
    return axes, labels_full


def _fibonacci_hemisphere(n_cells):
    """Near-equal-area direction samples on the z <= 0 hemisphere."""
    i = np.arange(n_cells, dtype=np.float64)
    golden = (1 + np.sqrt(5)) / 2
    z = -(i + 0.5) / n_cells  # (−1, 0)
    r = np.sqrt(1 - z * z)
    phi = 2 * np.pi * i / golden
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def cluster_normals_histogram(
    normals: NormalMap,
    bins: int = 200,
    threshold_frac: float = 0.05,
    nms_radius: float = 15.0,
    theta_assign: float = 30.0,
):
    """Plane directions by histogramming folded normals on a hemisphere.

    Returns (axes list (k, 3), labels map). Cells with at least
    threshold_frac of the total count survive angular non-max suppression
    (a cell is dropped if a strictly stronger cell, or an equal one with a
    lower index, lies within nms_radius degrees).
    """
    h, w = normals.valid.shape
    labels_full = np.full((h, w), NO_LABEL, dtype=np.int32)
    valid_n = normals.normals[normals.valid]
    if len(valid_n) < 100:
        return np.zeros((0, 3)), labels_full

    folded = np.where((valid_n[:, 2] > 0)[:, None], -valid_n, valid_n)
    centers = _fibonacci_hemisphere(bins)
    cell = np.argmax(np.abs(folded @ centers.T), axis=1)
    counts = np.bincount(cell, minlength=bins)

    total = counts.sum()
    strong = np.nonzero(counts >= threshold_frac * total)[0]
    cos_nms = np.cos(np.radians(nms_radius))
    keep = []
    for c in strong:
        suppressed = False
        for other in strong:
            if other == c:
                continue
            close = abs(centers[c] @ centers[other]) >= cos_nms
            if close and (counts[other] > counts[c] or (counts[other] == counts[c] and other < c)):
                suppressed = True
                break
        if not suppressed:
            keep.append(c)
    if not keep:
        return np.zeros((0, 3)), labels_full

    # refine each hypothesis to the principal direction of its members
    axes = []
    for c in keep:
        members = folded[cell == c]
        axes.append(_principal_axis(members))
    axes = np.stack(axes, axis=0)

    cos_gate = np.cos(np.radians(theta_assign))
    flat = _assign(normals.normals[normals.valid], axes.T, cos_gate)
    labels_full[normals.valid] = flat
    return axes, labels_full


def connected_components(labels, min_patch_pixels):
    """4-connected components per axis label, masks only (normals unset).

    Components smaller than min_patch_pixels are dropped. Patch order is
    deterministic: axis label, then top-left mask pixel.
    """
    patches = []
    for lab in np.unique(labels):
        if lab == NO_LABEL:
            continue
        comp, n = ndimage.label(labels == lab, structure=FOUR_CONN)
        if n == 0:
            continue
        sizes = np.bincount(comp.ravel(), minlength=n + 1)
        for ci in range(1, n + 1):
            if sizes[ci] < min_patch_pixels:
                continue
            mask = comp == ci
            patches.append(
                PlanarPatch(
                    mask=mask,
                    normal=np.zeros(3),
                    pixel_count=int(sizes[ci]),
                    axis_label=int(lab),
                )
            )
    patches.sort(key=lambda p: (p.axis_label, p.top_left()))
    return patches


def refine_patch_normal(mask, normals: NormalMap, K: Intrinsics):
    """Principal direction of the member normals, camera-facing at the
    patch centroid's viewing ray."""
    member_mask = mask & normals.valid
    members = normals.normals[member_mask]
    if len(members) == 0:
        raise ValueError("patch mask holds no valid normals")
    n = _principal_axis(members)
    ys, xs = np.nonzero(mask)
    ray = viewing_ray(K, xs.mean(), ys.mean())
    if n @ ray > 0:
        n = -n
    return n
