"""Layered scattering transform: wavelet convolution, modulus, subsampling, averaging.

Each layer convolves the running coefficients with every filter of its bank
(circularly, via frequency-domain products), takes the pointwise modulus,
and subsamples.  Averaged, subsampled copies of each layer form the output
coefficients; the zeroth output is just the averaged input.  All shapes
follow the ceil rule len_out = ceil(len_in / rate) from keeping indices
0, r, 2r, ...
"""
from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .errors import ConfigError
from .filters import (
    DEFAULT_PEAK_FRACTION,
    FilterBank,
    FilterFamily,
    GmwParams,
    build_filter_bank,
    lowpass_row,
)

# Defaults sized for 5-second segments at 22050 Hz.
DEFAULT_QUALITIES = (8.0, 4.0, 4.0)
DEFAULT_J_MAXES = (32, 13, 9)
DEFAULT_SUB_RATE = 8
DEFAULT_AVG_RATE = 32


@dataclass(frozen=True)
class ScatteringConfig:
    """Per-layer bank parameters and subsampling rates for a 1-3 layer network.

    `avg_rates` has one extra leading entry: index m is the averaging
    subsampling rate used for the order-m output, with index 0 covering the
    averaged raw input.
    """

    num_layers: int = 3
    qualities: tuple = DEFAULT_QUALITIES
    j_maxes: tuple = DEFAULT_J_MAXES
    sub_rates: tuple = (DEFAULT_SUB_RATE,) * 3
    avg_rates: tuple = (DEFAULT_AVG_RATE,) * 4
    family: FilterFamily = FilterFamily.GMW
    gmw: GmwParams = field(default_factory=GmwParams)
    contraction: str = "modulus"
    peak_fraction: float = DEFAULT_PEAK_FRACTION
    dtype: str = "float64"
    prune_paths: bool = False

    def __post_init__(self):
        m = self.num_layers
        if not 1 <= m <= 3:
            raise ConfigError(f"num_layers must be 1..3, got {m}")
        if len(self.qualities) != m or len(self.j_maxes) != m or len(self.sub_rates) != m:
            raise ConfigError("qualities, j_maxes and sub_rates must have num_layers entries")
        if len(self.avg_rates) != m + 1:
            raise ConfigError("avg_rates must have num_layers + 1 entries")
        if any(q <= 0 for q in self.qualities):
            raise ConfigError("quality factors must be positive")
        if any(j < 0 for j in self.j_maxes):
            raise ConfigError("j_max values must be >= 0")
        if any(int(r) != r or r < 1 for r in self.sub_rates + self.avg_rates):
            raise ConfigError("subsampling rates must be integers >= 1")
        if self.contraction != "modulus":
            raise ConfigError(f"unsupported contraction {self.contraction!r}")
        if self.dtype not in ("float64", "float32"):
            raise ConfigError(f"dtype must be float64 or float32, got {self.dtype!r}")

    @classmethod
    def defaults(cls, num_layers: int = 3, family: FilterFamily | str = FilterFamily.GMW,
                 gmw: GmwParams | None = None, **kw) -> "ScatteringConfig":
        """Standard configuration truncated to the requested depth."""
        m = num_layers
        return cls(num_layers=m,
                   qualities=DEFAULT_QUALITIES[:m],
                   j_maxes=DEFAULT_J_MAXES[:m],
                   sub_rates=(DEFAULT_SUB_RATE,) * m,
                   avg_rates=(DEFAULT_AVG_RATE,) * (m + 1),
                   family=FilterFamily(family),
                   gmw=gmw if gmw is not None else GmwParams(),
                   **kw)


@dataclass
class ScatteringOutput:
    """Averaged coefficients per layer.

    `layer0` is the averaged input; `layers[m-1]` holds order m with axes
    (time, j_m, j_{m-1}, ..., j_1).  `path_mask[m-1]`, present only when
    path pruning is enabled, flags the retained paths over the same
    non-time axes.
    """

    layer0: np.ndarray
    layers: list
    config: ScatteringConfig
    input_len: int
    path_mask: list | None = None

    def layer_shapes(self) -> list:
        return [self.layer0.shape] + [a.shape for a in self.layers]

    def path_count(self, m: int) -> int:
        """Number of scale paths feeding the order-m output."""
        if m == 0:
            return 1
        return int(np.prod([j + 1 for j in self.config.j_maxes[:m]]))


def contraction(values: np.ndarray) -> np.ndarray:
    """Pointwise modulus: the 1-Lipschitz nonlinearity between layers."""
    return np.abs(values)


def subsample(values: np.ndarray, rate: int) -> np.ndarray:
    """Keep every `rate`-th sample along the last axis (indices 0, r, 2r, ...).

    Output length is ceil(n / rate); rate 1 is the identity.
    """
    if int(rate) != rate or rate < 1:
        raise ConfigError(f"subsampling rate must be an integer >= 1, got {rate}")
    return np.asarray(values)[..., ::int(rate)]


def analytic_conv(signal: np.ndarray, filter_row: np.ndarray) -> np.ndarray:
    """Circular convolution with a frequency-sampled filter.

    Computes the inverse DFT of DFT(signal) * filter_row, which equals
    direct circular convolution with the filter's impulse response.
    """
    x = np.asarray(signal)
    row = np.asarray(filter_row)
    if x.shape[-1] != row.shape[-1]:
        raise ConfigError(
            f"signal length {x.shape[-1]} does not match filter length {row.shape[-1]}")
    return sfft.ifft(sfft.fft(x, axis=-1) * row, axis=-1)


def layer_U(signal: np.ndarray, bank: FilterBank, rate: int) -> np.ndarray:
    """Wavelet-modulus propagator: |signal * psi_j| subsampled, for every j.

    Returns an array of shape (num_filters, ceil(n / rate)); `signal` may
    carry leading batch axes, which are preserved after the filter axis.
    """
    x = np.asarray(signal)
    if x.shape[-1] != bank.signal_len:
        raise ConfigError(
            f"signal length {x.shape[-1]} does not match bank length {bank.signal_len}")
    xh = sfft.fft(x, axis=-1)
    n_out = -(-x.shape[-1] // int(rate))
    rows = bank.filters.astype(x.real.dtype, copy=False)
    out = np.empty((bank.num_filters,) + x.shape[:-1] + (n_out,), dtype=x.real.dtype)
    for j in range(bank.num_filters):
        out[j] = subsample(contraction(sfft.ifft(xh * rows[j], axis=-1)), rate)
    return out


def layer_S(u: np.ndarray, lowpass: np.ndarray, avg_rate: int) -> np.ndarray:
    """Averaged, subsampled coefficients: real part of the lowpass smoothing.

    `u` may carry leading batch axes; its last axis must match the lowpass
    DFT length (rebuild the lowpass per layer length).  The output is real,
    and nonnegative up to lowpass ringing when `u` is nonnegative.
    """
    x = np.asarray(u)
    lp = np.asarray(lowpass)
    if x.shape[-1] != lp.shape[-1]:
        raise ConfigError(
            f"input length {x.shape[-1]} does not match lowpass length {lp.shape[-1]}")
    lp = lp.astype(x.real.dtype, copy=False)
    smoothed = sfft.ifft(sfft.fft(x, axis=-1) * lp, axis=-1).real
    return subsample(smoothed, avg_rate)


@functools.lru_cache(maxsize=32)
def _cached_bank(family: FilterFamily, n: int, quality: float, j_max: int,
                 params: GmwParams, peak_fraction: float) -> FilterBank:
    return build_filter_bank(family, n, quality, j_max, params, peak_fraction)


def _prune_mask(cfg: ScatteringConfig, m: int) -> np.ndarray:
    """Boolean mask with axes (j_m, ..., j_1) of paths kept under pruning."""
    shape = tuple(j + 1 for j in reversed(cfg.j_maxes[:m]))
    mask = np.ones(shape, dtype=bool)
    drop = 1.0
    peaks = []
    for i in range(m):
        lam = (np.arange(cfg.j_maxes[i] + 1) - cfg.j_maxes[i]) / cfg.qualities[i]
        peaks.append(2.0 ** lam * cfg.peak_fraction * np.pi / drop)
        drop *= cfg.sub_rates[i]
    for i in range(1, m):
        # j_{i+1} center frequency must fall below the j_i center frequency
        ax_hi = m - 1 - i     # axis of j_{i+1}
        ax_lo = m - i         # axis of j_i
        hi = np.expand_dims(peaks[i], tuple(a for a in range(m) if a != ax_hi))
        lo = np.expand_dims(peaks[i - 1], tuple(a for a in range(m) if a != ax_lo))
        mask &= hi < lo
    return mask


def scatter(signal: np.ndarray, cfg: ScatteringConfig | None = None) -> ScatteringOutput:
    """Run the full scattering cascade over a 1-D signal.

    Computes the averaged input, then for each layer m the averaged
    wavelet-modulus coefficients over all scale paths (j_m, ..., j_1).
    The result is deterministic: identical input and config give
    bitwise-identical output.
    """
    if cfg is None:
        cfg = ScatteringConfig()
    x = np.asarray(signal, dtype=cfg.dtype)
    if x.ndim != 1 or x.size == 0:
        raise ConfigError("scatter expects a nonempty 1-D signal")

    n = x.size
    banks = []
    for m in range(cfg.num_layers):
        banks.append(_cached_bank(cfg.family, n, cfg.qualities[m], cfg.j_maxes[m],
                                  cfg.gmw, cfg.peak_fraction))
        n = -(-n // cfg.sub_rates[m])

    scale0 = banks[0].coarsest_scale()
    layer0 = layer_S(x, lowpass_row(x.size, scale0, cfg.peak_fraction), cfg.avg_rates[0])

    layers = []
    masks = [] if cfg.prune_paths else None
    u = x
    for m in range(cfg.num_layers):
        u = layer_U(u, banks[m], cfg.sub_rates[m])
        if cfg.prune_paths and m >= 1:
            mask = _prune_mask(cfg, m + 1)
            u = u * mask[..., None].astype(u.dtype)
        lp = lowpass_row(u.shape[-1], banks[m].coarsest_scale(), cfg.peak_fraction)
        s = layer_S(u, lp, cfg.avg_rates[m + 1])
        layers.append(np.moveaxis(s, -1, 0))
        if cfg.prune_paths:
            masks.append(_prune_mask(cfg, m + 1))
    return ScatteringOutput(layer0=layer0, layers=layers, config=cfg,
                            input_len=x.size, path_mask=masks)
