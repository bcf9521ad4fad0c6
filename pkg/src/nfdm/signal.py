"""Sampled complex baseband signals and Fourier utilities.

Everything downstream (NFT solvers, modem, channel) works on
:class:`ComplexEnvelope`: a uniformly sampled complex envelope with an
explicit time grid and a unit mode tag (``physical`` amplitudes in
sqrt(W), ``normalized`` amplitudes dimensionless).  The continuous-time
Fourier transform convention is

    S(f) = integral s(t) exp(-j 2 pi f t) dt

approximated by ``dt * fft`` with an explicit ``exp(-j 2 pi f t0)`` phase
so that absolute time is preserved.  With this scaling Parseval holds
literally: sum |s|^2 dt == sum |S|^2 df.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

PHYSICAL = "physical"
NORMALIZED = "normalized"


@dataclass(frozen=True)
class ComplexEnvelope:
    """Uniformly sampled complex envelope.

    samples : complex array
    t0      : time of the first sample (s, or dimensionless in normalized mode)
    dt      : sample spacing, > 0
    unit_mode : "physical" or "normalized"
    """

    samples: np.ndarray
    t0: float
    dt: float
    unit_mode: str = NORMALIZED

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.complex128)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 1 or samples.size < 1:
            raise ValueError("empty signal")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.unit_mode not in (PHYSICAL, NORMALIZED):
            raise ValueError(f"unknown unit_mode {self.unit_mode!r}")

    def __len__(self):
        return self.samples.size

    @property
    def t(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.samples.size)

    @property
    def t_end(self) -> float:
        """Time of the last sample."""
        return self.t0 + self.dt * (self.samples.size - 1)

    def with_samples(self, samples: np.ndarray) -> "ComplexEnvelope":
        return replace(self, samples=np.asarray(samples, dtype=np.complex128))


@dataclass(frozen=True)
class FrequencyEnvelope:
    """Spectrum of a :class:`ComplexEnvelope` on a uniform frequency grid.

    ``t0`` remembers the start time of the originating grid so the
    transform is invertible without side information.
    """

    values: np.ndarray
    f0: float
    df: float
    t0: float = 0.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.complex128)
        object.__setattr__(self, "values", values)
        if values.ndim != 1 or values.size < 1:
            raise ValueError("empty spectrum")
        if not self.df > 0:
            raise ValueError(f"df must be positive, got {self.df}")

    def __len__(self):
        return self.values.size

    @property
    def f(self) -> np.ndarray:
        return self.f0 + self.df * np.arange(self.values.size)


def forward_ft(sig: ComplexEnvelope) -> FrequencyEnvelope:
    """Continuous-time Fourier transform on the discrete grid.

    Returns S(f) on the fftshifted grid of the signal; round-trips with
    :func:`inverse_ft` to machine precision.
    """
    n = len(sig)
    f = np.fft.fftshift(np.fft.fftfreq(n, d=sig.dt))
    spec = np.fft.fftshift(np.fft.fft(sig.samples)) * sig.dt
    spec = spec * np.exp(-2j * np.pi * f * sig.t0)
    return FrequencyEnvelope(values=spec, f0=f[0], df=f[1] - f[0] if n > 1 else 1.0 / sig.dt, t0=sig.t0)


def inverse_ft(spec: FrequencyEnvelope, unit_mode: str = NORMALIZED) -> ComplexEnvelope:
    """Exact inverse of :func:`forward_ft`."""
    n = len(spec)
    dt = 1.0 / (n * spec.df)
    f = spec.f
    vals = spec.values * np.exp(2j * np.pi * f * spec.t0)
    samples = np.fft.ifft(np.fft.ifftshift(vals)) / dt
    return ComplexEnvelope(samples=samples, t0=spec.t0, dt=dt, unit_mode=unit_mode)


def signal_energy(sig: ComplexEnvelope) -> float:
    """Total energy sum |s|^2 dt (J in physical mode)."""
    return float(np.sum(np.abs(sig.samples) ** 2) * sig.dt)


def spectrum_energy(spec: FrequencyEnvelope) -> float:
    return float(np.sum(np.abs(spec.values) ** 2) * spec.df)


def time_reverse(sig: ComplexEnvelope) -> ComplexEnvelope:
    """Map s(t) -> s(-t); the grid is mirrored so output(t) = input(-t)."""
    return ComplexEnvelope(
        samples=sig.samples[::-1].copy(),
        t0=-sig.t_end,
        dt=sig.dt,
        unit_mode=sig.unit_mode,
    )


def next_pow2(n: int) -> int:
    return 1 << max(0, (int(n) - 1)).bit_length()


def pad_to_length(sig: ComplexEnvelope, n: int) -> ComplexEnvelope:
    """Explicitly zero-pad at the end of the grid to n samples."""
    if n < len(sig):
        raise ValueError(f"cannot pad {len(sig)} samples down to {n}")
    out = np.zeros(n, dtype=np.complex128)
    out[: len(sig)] = sig.samples
    return sig.with_samples(out)


def pad_to_pow2(sig: ComplexEnvelope, min_factor: int = 1) -> ComplexEnvelope:
    """Zero-pad to the next power-of-two length >= min_factor * len(sig)."""
    return pad_to_length(sig, next_pow2(len(sig) * min_factor))


def brickwall_lowpass(sig: ComplexEnvelope, bandwidth: float) -> ComplexEnvelope:
    """Ideal rectangular low-pass: zero every frequency with |f| > bandwidth.

    ``bandwidth`` is the one-sided cutoff in the signal's frequency unit.
    """
    n = len(sig)
    f = np.fft.fftfreq(n, d=sig.dt)
    spec = np.fft.fft(sig.samples)
    spec[np.abs(f) > bandwidth] = 0.0
    return sig.with_samples(np.fft.ifft(spec))


def require_mode(sig: ComplexEnvelope, mode: str) -> None:
    if sig.unit_mode != mode:
        raise ValueError(f"expected a {mode}-units signal, got {sig.unit_mode}")


def relative_l2(a: np.ndarray, b: np.ndarray) -> float:
    """|| a - b ||_2 / || b ||_2 (0 if both empty/zero)."""
    denom = np.linalg.norm(b)
    if denom == 0.0:
        return float(np.linalg.norm(a))
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)) / denom)
