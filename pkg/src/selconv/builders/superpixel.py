"""SLIC superpixels and centroid graphs."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..graph import PositionalGraph, default_epsilon, select_many

SLIC_ITERATIONS = 10
_FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])


@dataclass(frozen=True, eq=False)
class SuperpixelSet:
    labels: np.ndarray  # (H, W) ints in 0..K-1
    centroids: np.ndarray  # (K, 2) mean (x, y)
    mean_features: np.ndarray  # (K, C)

    @property
    def count(self) -> int:
        return len(self.centroids)

    @classmethod
    def from_labels(cls, labels, image) -> "SuperpixelSet":
        labels = _relabel(np.asarray(labels))
        img = _as_hwc(image)
        h, w = labels.shape
        k = int(labels.max()) + 1
        flat = labels.ravel()
        counts = np.bincount(flat, minlength=k).astype(np.float64)
        ys, xs = np.divmod(np.arange(h * w), w)
        cx = np.bincount(flat, weights=xs, minlength=k) / counts
        cy = np.bincount(flat, weights=ys, minlength=k) / counts
        feats = np.stack(
            [np.bincount(flat, weights=img[..., c].ravel(), minlength=k) / counts
             for c in range(img.shape[2])],
            axis=1,
        )
        return cls(labels, np.stack([cx, cy], axis=1), feats.astype(np.float32))

    def paint(self, values) -> np.ndarray:
        """Broadcast per-superpixel values back to every member pixel."""
        values = np.asarray(values)
        return values[self.labels]


def _as_hwc(image) -> np.ndarray:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        img = img[..., None]
    if img.ndim != 3:
        raise ValueError(f"expected an H x W x C image, got shape {img.shape}")
    return img


def _relabel(labels: np.ndarray) -> np.ndarray:
    _, inv = np.unique(labels, return_inverse=True)
    return inv.reshape(labels.shape).astype(np.int64)


def _seed_grid(h: int, w: int, k: int) -> np.ndarray:
    nx = max(1, min(w, k, math.ceil(math.sqrt(k * w / h))))
    ny = max(1, min(h, round(k / nx)))
    xs = (np.arange(nx) + 0.5) * w / nx
    ys = (np.arange(ny) + 0.5) * h / ny
    gx, gy = np.meshgrid(xs, ys)
    return np.stack([gy.ravel(), gx.ravel()], axis=1)


def _gradient(img: np.ndarray) -> np.ndarray:
    p = np.pad(img, ((1, 1), (1, 1), (0, 0)), mode="edge")
    gx = p[1:-1, 2:] - p[1:-1, :-2]
    gy = p[2:, 1:-1] - p[:-2, 1:-1]
    return (gx**2).sum(-1) + (gy**2).sum(-1)


def slic(image, k: int, compactness: float = 10.0, iterations: int = SLIC_ITERATIONS) -> SuperpixelSet:
    """Simple linear iterative clustering.

    Distance between a pixel and a centre is ``|colour| + compactness / S * |xy|``
    with grid interval ``S = sqrt(H * W / k)``; the search window is 2S x 2S.
    """
    img = _as_hwc(image)
    h, w, _ = img.shape
    if not (1 <= k <= h * w):
        raise ValueError(f"superpixel count must be in 1..{h * w}, got {k}")
    S = math.sqrt(h * w / k)
    grad = _gradient(img)

    centers_yx = []
    for cy, cx in _seed_grid(h, w, k):
        r0, c0 = min(int(cy), h - 1), min(int(cx), w - 1)
        best = (np.inf, r0, c0)
        for r in range(max(r0 - 1, 0), min(r0 + 2, h)):
            for c in range(max(c0 - 1, 0), min(c0 + 2, w)):
                if grad[r, c] < best[0]:
                    best = (grad[r, c], r, c)
        centers_yx.append(best[1:])
    cyx = np.array(centers_yx, dtype=np.float64)
    ccol = img[cyx[:, 0].astype(int), cyx[:, 1].astype(int)]

    ys, xs = np.mgrid[0:h, 0:w]
    ratio = compactness / S
    labels = np.full((h, w), -1, dtype=np.int64)
    for _ in range(iterations):
        dist = np.full((h, w), np.inf)
        labels.fill(-1)
        for i, ((cy, cx), col) in enumerate(zip(cyx, ccol)):
            r0, r1 = max(int(cy - S), 0), min(int(cy + S) + 1, h)
            c0, c1 = max(int(cx - S), 0), min(int(cx + S) + 1, w)
            win = img[r0:r1, c0:c1]
            dc = np.sqrt(((win - col) ** 2).sum(-1))
            ds = np.hypot(ys[r0:r1, c0:c1] - cy, xs[r0:r1, c0:c1] - cx)
            d = dc + ratio * ds
            sub = dist[r0:r1, c0:c1]
            better = d < sub
            sub[better] = d[better]
            labels[r0:r1, c0:c1][better] = i
        if np.any(labels < 0):
            # pixels outside every window fall back to a full search
            rr, cc = np.nonzero(labels < 0)
            dc = np.sqrt(((img[rr, cc][:, None, :] - ccol[None]) ** 2).sum(-1))
            ds = np.hypot(rr[:, None] - cyx[None, :, 0], cc[:, None] - cyx[None, :, 1])
            labels[rr, cc] = np.argmin(dc + ratio * ds, axis=1)
        flat = labels.ravel()
        kk = len(cyx)
        cnt = np.bincount(flat, minlength=kk).astype(np.float64)
        alive = cnt > 0
        safe = np.where(alive, cnt, 1.0)
        new_y = np.bincount(flat, weights=ys.ravel(), minlength=kk) / safe
        new_x = np.bincount(flat, weights=xs.ravel(), minlength=kk) / safe
        new_c = np.stack(
            [np.bincount(flat, weights=img[..., c].ravel(), minlength=kk) / safe
             for c in range(img.shape[2])],
            axis=1,
        )
        cyx = np.where(alive[:, None], np.stack([new_y, new_x], axis=1), cyx)
        ccol = np.where(alive[:, None], new_c, ccol)

    labels = enforce_connectivity(labels)
    return SuperpixelSet.from_labels(labels, img)


def enforce_connectivity(labels: np.ndarray) -> np.ndarray:
    """Keep each label's largest 4-connected piece; merge the rest into a neighbour.

    An orphan piece joins the adjacent label with the largest pixel count.
    """
    labels = _relabel(np.asarray(labels)).copy()
    while True:
        changed = False
        sizes = np.bincount(labels.ravel())
        for lab in range(len(sizes)):
            if sizes[lab] == 0:
                continue
            comp, ncomp = ndimage.label(labels == lab, structure=_FOUR_CONNECTED)
            if ncomp <= 1:
                continue
            comp_sizes = np.bincount(comp.ravel())[1:]
            keep = int(np.argmax(comp_sizes)) + 1
            for piece in range(1, ncomp + 1):
                if piece == keep:
                    continue
                region = comp == piece
                ring = ndimage.binary_dilation(region, structure=_FOUR_CONNECTED) & ~region
                neigh = np.unique(labels[ring])
                neigh = neigh[neigh != lab]
                if len(neigh) == 0:
                    continue
                target = neigh[np.argmax(sizes[neigh])]
                labels[region] = target
                sizes[target] += int(region.sum())
                sizes[lab] -= int(region.sum())
                changed = True
        if not changed:
            return _relabel(labels)


def build_superpixel_graph(sp: SuperpixelSet, knn: int = 8) -> PositionalGraph:
    """Centroid graph: k nearest centroids, at most one (the closest) per selection."""
    if knn < 1:
        raise ValueError("knn must be at least 1")
    c = np.asarray(sp.centroids, dtype=np.float64)
    n = len(c)
    if n < 2:
        raise ValueError("a superpixel graph needs at least two superpixels")
    k = min(knn, n - 1)
    diff = c[None, :, :] - c[:, None, :]
    dist = np.hypot(diff[..., 0], diff[..., 1])
    np.fill_diagonal(dist, np.inf)
    src, dst = [], []
    for i in range(n):
        order = np.lexsort((np.arange(n), dist[i]))[:k]
        src.extend([i] * k)
        dst.extend(order.tolist())
    src = np.asarray(src)
    dst = np.asarray(dst)
    nonself = src != dst
    eps = default_epsilon(c, src[nonself], dst[nonself])
    sel = select_many(c[dst] - c[src], eps)
    # prune: nearest candidate per (node, selection); coincident centroids dropped
    d = dist[src, dst]
    order = np.lexsort((dst, d, sel, src))
    src, dst, sel = src[order], dst[order], sel[order]
    first = np.ones(len(src), dtype=bool)
    first[1:] = (src[1:] != src[:-1]) | (sel[1:] != sel[:-1])
    keep = first & (sel != 0)
    return PositionalGraph.from_edges(c, src[keep], dst[keep], sel[keep], eps, add_self=True)
