"""Per-player instance segmentation by harmonic interpolation.

A continuous association value per pixel (0 = tracked player, 1 =
background, 2 = other players) is solved so every free pixel equals the
affinity-weighted average of its 8-neighbors, with skeleton/background
pixels held fixed as anchors. Thresholding at 0.5 yields the player mask,
which is intersected with an externally supplied person mask.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph, linalg as sparse_linalg

from .errors import (
    ConvergenceError,
    DimensionMismatchError,
    UnanchoredRegionError,
)

PLAYER_VALUE = 0.0
BACKGROUND_VALUE = 1.0
OTHER_VALUE = 2.0
DEFAULT_TAU = 0.5

# Anchor label-image codes (External Interfaces).
LABEL_PLAYER = 0
LABEL_BACKGROUND = 1
LABEL_OTHER = 2
LABEL_FREE = 255

# 8-neighborhood offsets as (dv, du).
_OFFSETS = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


@dataclass(frozen=True)
class AnchorSet:
    """Anchor pixels: (N, 2) int arrays of (u, v); pairwise disjoint."""

    player_pixels: np.ndarray
    background_pixels: np.ndarray
    other_player_pixels: np.ndarray

    def __init__(self, player_pixels, background_pixels=None,
                 other_player_pixels=None):
        def clean(a):
            return np.asarray(a if a is not None else [], dtype=int).reshape(-1, 2)

        player = clean(player_pixels)
        background = clean(background_pixels)
        other = clean(other_player_pixels)
        if len(player) == 0:
            raise ValueError("anchor set needs at least one player pixel")
        sets = [set(map(tuple, a.tolist())) for a in (player, background, other)]
        if (sets[0] & sets[1]) or (sets[0] & sets[2]) or (sets[1] & sets[2]):
            raise ValueError("anchor pixel sets must be pairwise disjoint")
        object.__setattr__(self, "player_pixels", player)
        object.__setattr__(self, "background_pixels", background)
        object.__setattr__(self, "other_player_pixels", other)

    @classmethod
    def from_label_image(cls, labels) -> "AnchorSet":
        labels = np.asarray(labels)

        def pixels(code):
            vs, us = np.nonzero(labels == code)
            return np.column_stack([us, vs])

        return cls(pixels(LABEL_PLAYER), pixels(LABEL_BACKGROUND),
                   pixels(LABEL_OTHER))

    def to_label_image(self, shape) -> np.ndarray:
        img = np.full(shape, LABEL_FREE, dtype=np.uint8)
        for pixels, code in ((self.player_pixels, LABEL_PLAYER),
                             (self.background_pixels, LABEL_BACKGROUND),
                             (self.other_player_pixels, LABEL_OTHER)):
            if len(pixels):
                img[pixels[:, 1], pixels[:, 0]] = code
        return img


def build_affinity(image, edges, normalize=True) -> sparse.csr_matrix:
    """Sparse 8-neighborhood affinity from color and edge strength.

    The raw weight from pixel p to neighbor q is
    exp(-|I_p - I_q|^2) * exp(-G_p^2); with normalize=True each row is
    scaled to sum to 1, which makes the association solve a weighted
    harmonic interpolation.

    Raises:
        DimensionMismatchError: image and edge grids differ in size.
    """
    img = np.asarray(image, dtype=float)
    g = np.asarray(edges, dtype=float)
    if img.shape[:2] != g.shape:
        raise DimensionMismatchError(
            f"image {img.shape[:2]} vs edges {g.shape}")
    if img.ndim == 2:
        img = img[..., None]
    h, w = g.shape
    n = h * w
    rows, cols, vals = [], [], []
    vi, ui = np.indices((h, w))
    for dv, du in _OFFSETS:
        v0, v1 = max(0, -dv), min(h, h - dv)
        u0, u1 = max(0, -du), min(w, w - du)
        src_v = vi[v0:v1, u0:u1]
        src_u = ui[v0:v1, u0:u1]
        dst_v = src_v + dv
        dst_u = src_u + du
        diff = img[src_v, src_u] - img[dst_v, dst_u]
        weight = np.exp(-(diff ** 2).sum(axis=-1)) * np.exp(-g[src_v, src_u] ** 2)
        rows.append((src_v * w + src_u).ravel())
        cols.append((dst_v * w + dst_u).ravel())
        vals.append(weight.ravel())
    mat = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n))
    if normalize:
        row_sums = np.asarray(mat.sum(axis=1)).ravel()
        inv = np.where(row_sums > 0, 1.0 / np.maximum(row_sums, 1e-300), 0.0)
        mat = sparse.diags(inv) @ mat
    return mat


@dataclass(frozen=True)
class AssociationField:
    """Solved per-pixel association values on the crop grid."""

    values: np.ndarray


def solve_association(affinity: sparse.csr_matrix, anchors: AnchorSet,
                      shape, residual_tol=1e-6) -> AssociationField:
    """Harmonic interpolation of anchor values over the affinity graph.

    Every non-anchor pixel p satisfies o_p = sum_q w_pq o_q at the solution
    (sparse direct solve; the residual contract is checked explicitly).
    Anchor pixels hold exactly their anchor values.

    Raises:
        UnanchoredRegionError: a connected component has no anchor.
        ConvergenceError: the solved residual exceeds residual_tol.
    """
    h, w = shape
    n = h * w
    if affinity.shape != (n, n):
        raise DimensionMismatchError(
            f"affinity {affinity.shape} does not match grid {shape}")
    values = np.zeros(n)
    anchor_mask = np.zeros(n, dtype=bool)
    for pixels, value in ((anchors.player_pixels, PLAYER_VALUE),
                          (anchors.background_pixels, BACKGROUND_VALUE),
                          (anchors.other_player_pixels, OTHER_VALUE)):
        if len(pixels):
            idx = pixels[:, 1] * w + pixels[:, 0]
            values[idx] = value
            anchor_mask[idx] = True

    symmetric = affinity.maximum(affinity.T)
    n_comp, comp = csgraph.connected_components(symmetric, directed=False)
    anchored = np.zeros(n_comp, dtype=bool)
    anchored[comp[anchor_mask]] = True
    if not anchored.all():
        missing = int((~anchored).sum())
        raise UnanchoredRegionError(
            f"{missing} connected component(s) contain no anchor")

    free = ~anchor_mask
    if free.any():
        system = sparse.eye(n, format="csr") - affinity
        a_ff = system[free][:, free]
        rhs = -system[free][:, anchor_mask] @ values[anchor_mask]
        solution = sparse_linalg.spsolve(a_ff.tocsc(), rhs)
        values[free] = np.atleast_1d(solution)
        residual = float(np.abs(a_ff @ values[free] - rhs).max())
        if residual >= residual_tol:
            raise ConvergenceError(residual)
    return AssociationField(values.reshape(h, w))


def threshold_mask(field: AssociationField, tau=DEFAULT_TAU) -> np.ndarray:
    """Player mask: pixels with association value <= tau (inclusive)."""
    return field.values <= tau


def combine_masks(mask_a, mask_b) -> np.ndarray:
    """Pixelwise AND of two binary masks of equal shape."""
    a = np.asarray(mask_a, dtype=bool)
    b = np.asarray(mask_b, dtype=bool)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"mask shapes {a.shape} vs {b.shape}")
    return a & b


def segment_player(image, edges, anchors: AnchorSet, tau=DEFAULT_TAU,
                   person_mask=None) -> np.ndarray:
    """Full per-player mask: solve, threshold, and combine with person_mask."""
    affinity = build_affinity(image, edges)
    field = solve_association(affinity, anchors, np.asarray(edges).shape)
    mask = threshold_mask(field, tau)
    if person_mask is not None:
        mask = combine_masks(mask, person_mask)
    return mask
