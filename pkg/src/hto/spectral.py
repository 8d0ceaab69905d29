"""Frequency-domain tools: DFT, PSD, band selection and band-pass projection.

Frequencies are in Hz internally; sample periods are in µs as everywhere
else in the package. The forward transform is
``S[k] = sum_n s[n] exp(-2j pi n k / N)`` (numpy's convention), the inverse
carries the 1/N factor.
"""
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .traces import DEFAULT_SAMPLE_PERIOD_US


@dataclass(frozen=True)
class Spectrum:
    bins: np.ndarray
    bin_width_hz: float

    def __len__(self):
        return self.bins.shape[-1]


@dataclass(frozen=True)
class BandPassFilter:
    f_min_hz: float
    f_max_hz: float

    def __post_init__(self):
        if not 0 <= self.f_min_hz < self.f_max_hz:
            raise ConfigError(f"invalid band [{self.f_min_hz}, {self.f_max_hz}] Hz")

    @classmethod
    def from_mhz(cls, f_min_mhz, f_max_mhz):
        return cls(f_min_mhz * 1e6, f_max_mhz * 1e6)

    @classmethod
    def parse(cls, text):
        """Parse the CLI form ``a:b`` (MHz)."""
        try:
            lo, hi = (float(v) for v in text.split(":"))
        except ValueError:
            raise ConfigError(f"band must look like 'fmin:fmax' in MHz, got {text!r}") from None
        return cls.from_mhz(lo, hi)

    @property
    def mhz(self):
        return [self.f_min_hz / 1e6, self.f_max_hz / 1e6]

    def validate_for(self, n, sample_period=DEFAULT_SAMPLE_PERIOD_US):
        nyquist = nyquist_hz(sample_period)
        if self.f_max_hz > nyquist * (1 + 1e-12):
            raise ConfigError(f"f_max {self.f_max_hz} Hz exceeds Nyquist {nyquist} Hz")
        if not band_mask(n, self, sample_period).any():
            raise ConfigError("band contains no DFT bin")


def bin_width_hz(n, sample_period=DEFAULT_SAMPLE_PERIOD_US):
    return 1.0 / (n * sample_period * 1e-6)


def nyquist_hz(sample_period=DEFAULT_SAMPLE_PERIOD_US):
    return 0.5 / (sample_period * 1e-6)


def bin_frequencies(n, sample_period=DEFAULT_SAMPLE_PERIOD_US):
    """Absolute frequency |f_k| of every two-sided bin."""
    k = np.arange(n)
    return np.minimum(k, n - k) * bin_width_hz(n, sample_period)


def dft(signal, sample_period=DEFAULT_SAMPLE_PERIOD_US):
    s = np.asarray(signal)
    if s.shape[-1] == 0:
        raise ShapeError("cannot transform an empty signal")
    return Spectrum(np.fft.fft(s, axis=-1), bin_width_hz(s.shape[-1], sample_period))


def dft_direct(signal):
    """O(N^2) reference transform, summed term by term."""
    s = np.asarray(signal, dtype=np.complex128)
    n = s.shape[0]
    if n == 0:
        raise ShapeError("cannot transform an empty signal")
    idx = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(idx, idx) / n) @ s


def idft(spectrum, real=True):
    bins = spectrum.bins if isinstance(spectrum, Spectrum) else np.asarray(spectrum)
    out = np.fft.ifft(bins, axis=-1)
    return out.real if real else out


def psd(signal):
    """|S(k)|^2 / N, so that the bins sum to the signal energy."""
    s = np.asarray(signal, dtype=np.float64)
    S = np.fft.fft(s, axis=-1)
    return (S.real ** 2 + S.imag ** 2) / s.shape[-1]


def band_mask(n, band, sample_period=DEFAULT_SAMPLE_PERIOD_US):
    """Bins whose center |frequency| lies in [f_min, f_max]."""
    f = bin_frequencies(n, sample_period)
    tol = 1e-9 * bin_width_hz(n, sample_period)
    return (f >= band.f_min_hz - tol) & (f <= band.f_max_hz + tol)


def band_pass(signal, band, sample_period=DEFAULT_SAMPLE_PERIOD_US):
    """Zero every out-of-band bin (mirrored pairs together) and return the real part.

    Works row-wise on a 2-D array of traces.
    """
    s = np.asarray(signal, dtype=np.float64)
    mask = band_mask(s.shape[-1], band, sample_period)
    if mask.all():
        return s.copy()
    S = np.fft.fft(s, axis=-1)
    S[..., ~mask] = 0.0
    return np.fft.ifft(S, axis=-1).real


def spectral_clip(delta, band, sample_period=DEFAULT_SAMPLE_PERIOD_US):
    """Project a patch onto the pass band. Magnitude re-clipping is the caller's job."""
    return band_pass(delta, band, sample_period)


def out_of_band_fraction(signal, band, sample_period=DEFAULT_SAMPLE_PERIOD_US):
    """Share of signal energy carried by bins outside the band."""
    p = psd(signal)
    total = float(p.sum())
    if total == 0:
        return 0.0
    mask = band_mask(len(p), band, sample_period)
    return float(p[~mask].sum()) / total


def choose_band(dataset, energy_fraction=0.99):
    """Smallest band [0, f_max] holding ``energy_fraction`` of the mean trace energy.

    f_max is placed at the upper edge of the last included bin (clamped to
    Nyquist), so exactly the included bin centers fall inside the band.
    """
    if not 0 < energy_fraction < 1:
        raise ConfigError("energy_fraction must be in (0, 1)")
    n = dataset.d
    mean_psd = psd(dataset.X).mean(axis=0)
    half = n // 2
    k = np.arange(half + 1)
    # fold mirrored bins onto their nonnegative frequency
    folded = mean_psd[k].copy()
    mirror = (k > 0) & (n - k != k)
    folded[mirror] += mean_psd[n - k[mirror]]
    total = folded.sum()
    width = bin_width_hz(n, dataset.sample_period)
    if total == 0:
        return BandPassFilter(0.0, 0.5 * width)
    cum = np.cumsum(folded) / total
    last = int(np.searchsorted(cum, energy_fraction - 1e-15))
    last = min(last, half)
    f_max = min((last + 0.5) * width, nyquist_hz(dataset.sample_period))
    return BandPassFilter(0.0, f_max)


def spectrum_report(signal, sample_period=DEFAULT_SAMPLE_PERIOD_US):
    """One-sided magnitude spectrum as rows (freq_mhz, magnitude).

    Magnitudes below 1e-12 of the peak are reported as exact zeros.
    """
    s = np.asarray(signal, dtype=np.float64)
    mag = np.abs(np.fft.rfft(s))
    peak = mag.max() if mag.size else 0.0
    mag[mag <= 1e-12 * peak] = 0.0
    freqs = np.arange(mag.size) * bin_width_hz(s.shape[0], sample_period) / 1e6
    return [(float(f), float(m)) for f, m in zip(freqs, mag)]
