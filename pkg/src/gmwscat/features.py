"""Flattening of scattering coefficients into feature vectors, and PCA.

The layout of a flattened vector is fixed by the scattering configuration
alone, so every segment processed under one config shares a single layout
object mapping positions back to (layer, scale path, time index).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericError
from .scattering import ScatteringOutput

_RANK_TOL = 1e-10


class FeatureLayout:
    """Position descriptor for flattened coefficients.

    Layers appear in ascending order; within a layer the tensor is unrolled
    in C order with time as the leading axis, i.e. position = ((t * (J_m+1)
    + j_m) * ... ) walking down to j_1.
    """

    def __init__(self, layer_shapes: dict):
        self.layer_shapes = dict(sorted(layer_shapes.items()))
        self.offsets = {}
        total = 0
        for m, shape in self.layer_shapes.items():
            self.offsets[m] = total
            total += int(np.prod(shape))
        self.total_len = total

    @classmethod
    def from_output(cls, out: ScatteringOutput, layers_included) -> "FeatureLayout":
        layers_included = sorted(set(layers_included))
        if not layers_included:
            raise ConfigError("layers_included must be a nonempty set")
        max_m = len(out.layers)
        for m in layers_included:
            if m < 0 or m > max_m:
                raise ConfigError(f"layer {m} not present (network has {max_m} layers)")
        shapes = {}
        for m in layers_included:
            shapes[m] = out.layer0.shape if m == 0 else out.layers[m - 1].shape
        return cls(shapes)

    def __len__(self) -> int:
        return self.total_len

    @property
    def layers(self) -> list:
        return list(self.layer_shapes)

    def layer_slice(self, m: int) -> slice:
        if m not in self.layer_shapes:
            raise ConfigError(f"layer {m} is not part of this layout")
        start = self.offsets[m]
        return slice(start, start + int(np.prod(self.layer_shapes[m])))

    def describe(self, position: int) -> tuple:
        """Maps a flat position to (layer m, scale path (j_m..j_1), time t)."""
        if not 0 <= position < self.total_len:
            raise ConfigError(f"position {position} out of range 0..{self.total_len - 1}")
        for m in reversed(self.layer_shapes):
            if position >= self.offsets[m]:
                idx = np.unravel_index(position - self.offsets[m], self.layer_shapes[m])
                return m, tuple(int(i) for i in idx[1:]), int(idx[0])
        raise AssertionError("unreachable")

    def column_names(self):
        """Yields one compact name per position, e.g. 'm3_2.7.12_t4'."""
        for m, shape in self.layer_shapes.items():
            for flat in range(int(np.prod(shape))):
                idx = np.unravel_index(flat, shape)
                t, js = idx[0], idx[1:]
                if js:
                    yield f"m{m}_" + ".".join(str(j) for j in js) + f"_t{t}"
                else:
                    yield f"m{m}_t{t}"


@dataclass
class FeatureVector:
    values: np.ndarray
    layout: FeatureLayout


def cumulative_layers(depth: int) -> set:
    """The layer set for a depth-m experiment: orders 0 through m."""
    return set(range(depth + 1))


def flatten(out: ScatteringOutput, layers_included) -> FeatureVector:
    """Concatenate the requested layers into one vector under a shared layout."""
    layout = FeatureLayout.from_output(out, layers_included)
    parts = []
    for m in layout.layers:
        arr = out.layer0 if m == 0 else out.layers[m - 1]
        parts.append(np.asarray(arr).ravel())
    return FeatureVector(values=np.concatenate(parts), layout=layout)


@dataclass
class PcaModel:
    """Mean vector plus top-k orthonormal principal directions.

    `components` has shape (k, d) with orthonormal rows; `singular_values`
    are nonincreasing.  Projection subtracts the mean; inversion is the
    transpose map plus the mean, so project(invert(z)) == z.
    """

    mean: np.ndarray
    components: np.ndarray
    singular_values: np.ndarray

    @property
    def k(self) -> int:
        return self.components.shape[0]

    @property
    def dim(self) -> int:
        return self.components.shape[1]

    def project(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        if x.shape[-1] != self.dim:
            raise ConfigError(f"expected dimension {self.dim}, got {x.shape[-1]}")
        return (x - self.mean) @ self.components.T

    def invert(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z)
        if z.shape[-1] != self.k:
            raise ConfigError(f"expected {self.k} coordinates, got {z.shape[-1]}")
        return z @ self.components + self.mean


def _orthonormal_complement(basis: np.ndarray, count: int, d: int,
                            rng: np.random.Generator) -> np.ndarray:
    """Deterministic orthonormal vectors orthogonal to the given row basis."""
    extra = np.empty((count, d))
    have = basis
    for i in range(count):
        for _ in range(100):
            v = rng.standard_normal(d)
            v -= (have @ v) @ have if have.size else 0.0
            norm = np.linalg.norm(v)
            if norm > 1e-8:
                break
        else:
            raise NumericError("could not complete an orthonormal basis")
        extra[i] = v / norm
        have = np.vstack([have, extra[i]]) if have.size else extra[i:i + 1]
    return extra


def fit_pca(X: np.ndarray, k: int, *, seed: int = 0) -> PcaModel:
    """Mean-centered truncated SVD keeping the top-k right singular vectors.

    Exact (via an eigendecomposition of the smaller Gram/covariance matrix)
    whenever feasible; a seeded randomized range finder takes over for very
    large problems with k far below min(n, d).  Deterministic for a fixed
    seed either way.  Rank-deficient inputs are padded with an orthonormal
    complement so the component rows always satisfy C C^T = I.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ConfigError("fit_pca expects a 2-D matrix")
    n, d = X.shape
    if n < 2:
        raise ConfigError(f"need at least 2 rows, got {n}")
    if not 1 <= k <= min(n, d):
        raise ConfigError(f"k={k} must lie in 1..min(n, d)={min(n, d)}")
    if not np.all(np.isfinite(X)):
        raise NumericError("fit_pca input contains non-finite values")

    mean = X.mean(axis=0)
    Xc = X - mean
    small = min(n, d)

    if small <= 4000 or k >= small // 4:
        if n <= d:
            gram = Xc @ Xc.T
            w, U = np.linalg.eigh(gram)
            w = w[::-1][:k]
            U = U[:, ::-1][:, :k]
            sing = np.sqrt(np.maximum(w, 0.0))
            comps = _back_project(Xc, U, sing, k, d, seed)
        else:
            cov = Xc.T @ Xc
            w, V = np.linalg.eigh(cov)
            sing = np.sqrt(np.maximum(w[::-1][:k], 0.0))
            comps = V[:, ::-1][:, :k].T.copy()
    else:
        comps, sing = _randomized_svd(Xc, k, seed)

    comps = _fix_signs(comps)
    return PcaModel(mean=mean, components=comps, singular_values=sing)


def _back_project(Xc, U, sing, k, d, seed):
    tol = max(sing[0] if len(sing) else 0.0, 1.0) * _RANK_TOL
    rank = int(np.sum(sing > tol))
    comps = np.empty((k, d))
    if rank:
        comps[:rank] = (U[:, :rank] / sing[:rank]).T @ Xc
        # re-orthonormalize: guards against precision loss at small gaps
        q, r = np.linalg.qr(comps[:rank].T)
        comps[:rank] = (q * np.sign(np.diag(r))).T
    if rank < k:
        rng = np.random.default_rng(seed)
        comps[rank:] = _orthonormal_complement(comps[:rank], k - rank, d, rng)
    return comps


def _randomized_svd(Xc, k, seed, oversample=10, power_iters=4):
    rng = np.random.default_rng(seed)
    n, d = Xc.shape
    p = min(k + oversample, min(n, d))
    probe = rng.standard_normal((d, p))
    Y = Xc @ probe
    for _ in range(power_iters):
        Y, _ = np.linalg.qr(Y)
        Y = Xc @ (Xc.T @ Y)
    Q, _ = np.linalg.qr(Y)
    B = Q.T @ Xc
    Ub, s, Vt = np.linalg.svd(B, full_matrices=False)
    return Vt[:k].copy(), s[:k]


def _fix_signs(comps: np.ndarray) -> np.ndarray:
    """Deterministic sign convention: largest-magnitude entry positive."""
    idx = np.argmax(np.abs(comps), axis=1)
    signs = np.sign(comps[np.arange(comps.shape[0]), idx])
    signs[signs == 0] = 1.0
    return comps * signs[:, None]


def standardize(X: np.ndarray) -> tuple:
    """Z-score columns (population std); zero-variance columns pass through."""
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return (X - mu) / sd, mu, sd
