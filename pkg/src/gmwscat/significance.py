"""Per-genre significance scores of deepest-layer coefficients.

A genre's lasso-GLM coefficient vector lives in PCA space; mapping it back
through the component rows and taking magnitudes gives one weight per
scattering coefficient.  Restricted to the deepest layer and normalized to
a maximum of 1, these weights show which scale paths drive the genre's
classification.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .features import FeatureLayout, PcaModel

log = logging.getLogger(__name__)

CLAMP_FLOOR = 0.4
SCORE_LAYER = 3


@dataclass
class SignificanceMap:
    """Normalized score tensor with axes (j_3, j_2, j_1, time)."""

    genre: str
    scores: np.ndarray
    degenerate: bool = False

    @property
    def block_columns(self) -> int:
        """Columns per scale-j_3 block in the exported grid layout."""
        return self.scores.shape[2] * self.scores.shape[3]


def significance_scores(theta_row: np.ndarray, pca: PcaModel,
                        layout: FeatureLayout, genre: str = "",
                        layer: int = SCORE_LAYER) -> SignificanceMap:
    """Invert one genre's PCA-space coefficients and max-normalize them.

    Computes |components^T theta|, keeps the positions of the requested
    layer, reorders the tensor to (j_m, ..., j_1, time), and scales so the
    maximum entry is exactly 1.  An all-zero coefficient vector yields a
    degenerate all-zero map (flagged, with a warning).
    """
    theta_row = np.asarray(theta_row, dtype=np.float64)
    if theta_row.ndim != 1 or theta_row.size != pca.k:
        raise ConfigError(
            f"theta_row must have {pca.k} entries, got shape {theta_row.shape}")
    if len(layout) != pca.dim:
        raise ConfigError(
            f"layout length {len(layout)} does not match PCA dimension {pca.dim}")
    back = np.abs(pca.components.T @ theta_row)
    block = back[layout.layer_slice(layer)].reshape(layout.layer_shapes[layer])
    # stored tensor is (time, j_m, ..., j_1); move time to the last axis
    scores = np.moveaxis(block, 0, -1)
    peak = scores.max()
    if peak == 0.0:
        log.warning("significance map for %r is degenerate (all-zero theta)",
                    genre or "<unnamed>")
        return SignificanceMap(genre=genre, scores=scores, degenerate=True)
    return SignificanceMap(genre=genre, scores=scores / peak)


def heatmap_grid(smap: SignificanceMap, clamp_lo: float = CLAMP_FLOOR) -> np.ndarray:
    """Block-arranged 2-D grid with the lower bound clamped.

    One block per leading scale index (j_3), laid side by side: rows are
    j_2, and each block's columns group the per-path time samples by j_1,
    giving (j_1 count) * (time count) columns per block.
    """
    j3n, j2n, j1n, tn = smap.scores.shape
    blocks = [np.maximum(smap.scores[b], clamp_lo).reshape(j2n, j1n * tn)
              for b in range(j3n)]
    return np.hstack(blocks)


def export_heatmap(smap: SignificanceMap, path, clamp_lo: float = CLAMP_FLOOR) -> np.ndarray:
    """Write the clamped block grid as CSV; returns the grid.

    The header comments record the block layout so the file is
    self-describing for plotting.
    """
    grid = heatmap_grid(smap, clamp_lo)
    j3n, j2n, j1n, tn = smap.scores.shape
    header = (
        f"significance scores for genre {smap.genre or '<unnamed>'}\n"
        f"{j3n} blocks of {j1n * tn} columns laid left to right, one per j3 "
        f"(coarse to fine)\n"
        f"rows: j2 = 0..{j2n - 1}; within a block, columns are j1-major with "
        f"{tn} time samples per j1\n"
        f"values clamped below at {clamp_lo}"
        + ("\ndegenerate: all-zero coefficients" if smap.degenerate else "")
    )
    np.savetxt(path, grid, delimiter=",", header=header, comments="# ")
    return grid
