"""Analytic wavelet filter banks sampled on the DFT grid.

Two families are supported: generalized Morse wavelets (GMW), which are
exactly zero on nonpositive frequencies, and zero-mean Morlet wavelets,
which leak a small amount of energy to negative frequencies.  Filters are
constructed directly in the frequency domain, so the analyticity of the
GMW family holds bitwise on the grid.  A reference analytic wavelet
transform (`awt`) is provided for validation and inspection.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .errors import ConfigError

# The finest filter of a bank peaks at this fraction of the Nyquist
# frequency (0.875 * pi rad/sample), a conventional safety margin that
# keeps the passband clear of the fold-over point.  Overridable per bank.
DEFAULT_PEAK_FRACTION = 0.875


class FilterFamily(str, enum.Enum):
    GMW = "gmw"
    MORLET = "morlet"


@dataclass(frozen=True)
class GmwParams:
    """Morse wavelet exponents: `beta` sets time decay, `gamma` frequency decay."""

    beta: float = 4.0
    gamma: float = 2.0

    def __post_init__(self):
        if not (self.beta > 0 and math.isfinite(self.beta)):
            raise ConfigError(f"beta must be positive and finite, got {self.beta}")
        if not (self.gamma > 1 and math.isfinite(self.gamma)):
            raise ConfigError(f"gamma must be > 1 and finite, got {self.gamma}")


def peak_frequency(params: GmwParams) -> float:
    """Frequency at which the Morse spectrum is maximal: (beta/gamma)**(1/gamma)."""
    return (params.beta / params.gamma) ** (1.0 / params.gamma)


def normalization_constant(params: GmwParams) -> float:
    """Amplitude constant making the spectrum peak value exactly 2.

    The peak-value-2 convention lets the analytic filter pass a real
    sinusoid of unit amplitude with unit-modulus output.
    """
    return 2.0 * (math.e * params.gamma / params.beta) ** (params.beta / params.gamma)


def gmw_spectrum(params: GmwParams, omega):
    """Morse wavelet spectrum alpha * omega**beta * exp(-omega**gamma), zero for omega <= 0.

    Accepts a scalar or array `omega`; the result is exactly 0.0 (not merely
    small) wherever omega <= 0, and never NaN for finite input.
    """
    w = np.maximum(np.asarray(omega, dtype=np.float64), 0.0)
    alpha = normalization_constant(params)
    with np.errstate(divide="ignore", over="ignore"):
        # log-domain evaluation avoids inf*0 for very large omega
        out = alpha * np.exp(params.beta * np.log(w) - w ** params.gamma)
    if np.isscalar(omega):
        return float(out)
    return out


def morlet_center(quality: float) -> float:
    """Morlet center frequency for a bank with `quality` filters per octave.

    Chosen so that adjacent filters, spaced by a factor 2**(1/Q), cross at
    half power: omega0 = sqrt(ln 2) * (rho + 1) / (rho - 1) with rho = 2**(1/Q).
    """
    if quality <= 0:
        raise ConfigError(f"quality must be positive, got {quality}")
    rho = 2.0 ** (1.0 / quality)
    return math.sqrt(math.log(2.0)) * (rho + 1.0) / (rho - 1.0)


def morlet_spectrum(center: float, omega):
    """Zero-mean Morlet spectrum exp(-(w-w0)^2/2) - kappa*exp(-w^2/2).

    kappa = exp(-w0^2/2) cancels the response at omega = 0 so the
    time-domain wavelet has zero mean.  The value is signed: for
    omega < 0 it is a small negative number (the leakage that keeps the
    Morlet only approximately analytic).
    """
    if center <= 0:
        raise ConfigError(f"Morlet center must be positive, got {center}")
    w = np.asarray(omega, dtype=np.float64)
    kappa = math.exp(-0.5 * center * center)
    out = np.exp(-0.5 * (w - center) ** 2) - kappa * np.exp(-0.5 * w * w)
    if np.isscalar(omega):
        return float(out)
    return out


def averaging_spectrum(coarsest_scale: float, omega, params: GmwParams = GmwParams()):
    """Gaussian lowpass exp(-omega^2 sigma^2 / 2) with sigma = scale / peak frequency.

    Unit gain at DC, even in omega, monotone nonincreasing in |omega|.
    """
    if coarsest_scale <= 0:
        raise ConfigError(f"coarsest_scale must be positive, got {coarsest_scale}")
    sigma = coarsest_scale / peak_frequency(params)
    w = np.asarray(omega, dtype=np.float64)
    out = np.exp(-0.5 * (w * sigma) ** 2)
    if np.isscalar(omega):
        return float(out)
    return out


def dft_omega(n: int) -> np.ndarray:
    """Signed DFT bin frequencies in rad/sample: bins above n//2 alias to negatives.

    For even n the Nyquist bin n/2 is kept at +pi (a positive frequency).
    """
    if n < 2:
        raise ConfigError(f"DFT grid needs n >= 2, got {n}")
    k = np.arange(n, dtype=np.float64)
    omega = 2.0 * np.pi * k / n
    omega[np.arange(n) > n // 2] -= 2.0 * np.pi
    return omega


def lowpass_row(n: int, coarsest_scale: float,
                peak_fraction: float = DEFAULT_PEAK_FRACTION) -> np.ndarray:
    """Averaging filter sampled on the length-n DFT grid.

    The mother-frequency axis is mapped so a dilation factor of 1 sits at
    `peak_fraction` of Nyquist, matching the wavelet rows; on that grid the
    Gaussian width is peak_fraction*pi / coarsest_scale regardless of family.
    """
    omega = dft_omega(n)
    target = peak_fraction * np.pi
    return np.exp(-0.5 * (omega * coarsest_scale / target) ** 2)


@dataclass
class FilterBank:
    """Frequency-domain wavelet filters for one layer plus its averaging filter.

    `filters[s]` holds |Psi(2**(-scales[s]) * omega_k)| over the signed DFT
    grid of length `signal_len`; `lowpass` is the matched Gaussian averaging
    row.  Rows are ordered coarse (j=0) to fine (j=j_max) and the arrays are
    frozen after construction, so a bank is safe to share across workers.
    """

    family: FilterFamily
    signal_len: int
    quality: float
    j_max: int
    scales: tuple
    filters: np.ndarray
    lowpass: np.ndarray
    params: GmwParams | None = None
    center: float | None = None
    peak_fraction: float = DEFAULT_PEAK_FRACTION

    @property
    def num_filters(self) -> int:
        return self.filters.shape[0]

    def predicted_peak_bin(self, index: int) -> float:
        """Analytic peak location of row `index`, in (fractional) DFT bins."""
        return 2.0 ** self.scales[index] * self.peak_fraction * self.signal_len / 2.0

    def coarsest_scale(self) -> float:
        """Largest dilation factor in the bank, 2**(j_max/quality)."""
        return 2.0 ** (self.j_max / self.quality)


def build_filter_bank(family: FilterFamily | str, signal_len: int, quality: float,
                      j_max: int, params: GmwParams = GmwParams(),
                      peak_fraction: float = DEFAULT_PEAK_FRACTION) -> FilterBank:
    """Construct a dyadic filter bank of j_max + 1 rows on a length-N DFT grid.

    Row j applies the dilation 2**(-lambda_j) with lambda_j = (j - j_max)/quality,
    so the finest row (j = j_max, lambda = 0) peaks at peak_fraction * Nyquist
    and each step down in j divides the peak frequency by 2**(1/quality).
    The lowpass row is the Gaussian averaging filter at the coarsest scale.
    """
    family = FilterFamily(family)
    if signal_len < 2:
        raise ConfigError(f"signal_len must be >= 2, got {signal_len}")
    if quality <= 0 or not math.isfinite(quality):
        raise ConfigError(f"quality must be positive, got {quality}")
    if j_max < 0:
        raise ConfigError(f"j_max must be >= 0, got {j_max}")
    if not (0.0 < peak_fraction < 1.0):
        raise ConfigError(f"peak_fraction must lie in (0, 1), got {peak_fraction}")

    omega = dft_omega(signal_len)
    target = peak_fraction * np.pi
    scales = tuple((j - j_max) / quality for j in range(j_max + 1))

    center = None
    if family is FilterFamily.GMW:
        to_mother = peak_frequency(params) / target
        rows = np.empty((j_max + 1, signal_len), dtype=np.float64)
        for s, lam in enumerate(scales):
            rows[s] = gmw_spectrum(params, (2.0 ** -lam) * to_mother * omega)
    else:
        center = morlet_center(quality)
        to_mother = center / target
        rows = np.empty((j_max + 1, signal_len), dtype=np.float64)
        for s, lam in enumerate(scales):
            # factor 2 puts the Morlet on the same peak-value-2 convention
            rows[s] = np.abs(2.0 * morlet_spectrum(center, (2.0 ** -lam) * to_mother * omega))

    lowpass = lowpass_row(signal_len, 2.0 ** (j_max / quality), peak_fraction)
    rows.flags.writeable = False
    lowpass.flags.writeable = False
    return FilterBank(family=family, signal_len=signal_len, quality=quality,
                      j_max=j_max, scales=scales, filters=rows, lowpass=lowpass,
                      params=params if family is FilterFamily.GMW else None,
                      center=center, peak_fraction=peak_fraction)


def awt(signal: np.ndarray, scales, params: GmwParams = GmwParams()) -> np.ndarray:
    """Reference analytic wavelet transform of a real signal.

    Row s holds the transform at dilation scales[s], computed as sqrt(a) times
    the inverse DFT of DFT(signal) * Psi(a * omega_k); the sqrt(a) factor is
    the L2 normalization of the dilated wavelet.  Output is complex so the
    amplitude and phase of the signal are both available.

    Parameters
    ----------
    signal : real 1-D array, nonempty
    scales : sequence of positive dilation factors (in samples/radian units)
    params : Morse wavelet exponents
    """
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise ConfigError("awt expects a nonempty 1-D signal")
    scales = np.asarray(scales, dtype=np.float64)
    if scales.ndim != 1 or scales.size == 0 or np.any(scales <= 0):
        raise ConfigError("awt scales must be a nonempty sequence of positive reals")

    omega = dft_omega(x.size)
    xh = sfft.fft(x)
    out = np.empty((scales.size, x.size), dtype=np.complex128)
    for s, a in enumerate(scales):
        out[s] = math.sqrt(a) * sfft.ifft(xh * gmw_spectrum(params, a * omega))
    return out
