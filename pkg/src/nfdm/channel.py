"""Fiber propagation, normalization bridge, and the AWGN-ansatz channel.

Physical-domain convention (attenuation exactly balanced by ideal
distributed gain, so the deterministic evolution is lossless):

    dA/dz = -j (beta2 / 2) d^2A/dt^2 + j gamma |A|^2 A

whose linear part filters the spectrum by exp(+j beta2 w^2 z / 2) and
whose gamma-only part rotates the phase by gamma |A|^2 z.

The dimensionless fields consumed by the NFT modules are

    q(tau) = conj(A(tau * T0)) / sqrt(P0),     tau = t / T0,

with Z0 = 2 T0^2 / |beta2| and P0 = |beta2| / (gamma T0^2).  The complex
conjugation makes the channel act on the continuous nonlinear spectrum
as multiplication by exp(-4j lam^2 L/Z0), matching the rotation
direction used by the precompensation; without it the sign of the
spectral phase flips.  Conjugation is invisible to energies, distances
and noise statistics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.constants import h as PLANCK

from .errors import SolverError
from .signal import NORMALIZED, PHYSICAL, ComplexEnvelope, require_mode

DB_PER_KM_TO_PER_M = np.log(10.0) / 10.0 / 1e3


@dataclass(frozen=True)
class FiberLink:
    """Physical link parameters (SI units)."""

    beta2: float  # GVD, s^2/m (anomalous: < 0)
    gamma_nl: float  # nonlinear coefficient, 1/(W m)
    alpha_att: float  # attenuation, 1/m (power)
    length: float  # m
    eta_sp: float = 4.0  # spontaneous emission factor
    carrier_freq: float = 193.4e12  # Hz; sets the photon energy of the ASE
    span_length: float = 50e3  # m; DBP step budget is quoted per span

    def __post_init__(self):
        if not self.length > 0:
            raise ValueError("link length must be positive")
        if self.eta_sp < 1:
            raise ValueError("eta_sp must be >= 1")

    @classmethod
    def standard_smf(cls, length_km: float = 2000.0, beta2_ps2_km: float = -20.39,
                     gamma_w_km: float = 1.22, alpha_db_km: float = 0.2,
                     eta_sp: float = 4.0) -> "FiberLink":
        return cls(
            beta2=beta2_ps2_km * 1e-27,
            gamma_nl=gamma_w_km * 1e-3,
            alpha_att=alpha_db_km * DB_PER_KM_TO_PER_M,
            length=length_km * 1e3,
            eta_sp=eta_sp,
        )

    @property
    def noise_psd(self) -> float:
        """Accumulated ASE PSD of the full link, W/Hz (single polarization)."""
        return self.eta_sp * PLANCK * self.carrier_freq * self.alpha_att * self.length


@dataclass(frozen=True)
class Normalization:
    """Scales relating physical and dimensionless NLSE quantities."""

    t0_s: float
    z0_m: float
    p0_w: float

    @classmethod
    def for_symbol_time(cls, link: FiberLink, t_symbol_s: float, t0_s: float | None = None):
        t0 = t_symbol_s / 2 if t0_s is None else t0_s
        b2 = abs(link.beta2)
        return cls(t0_s=t0, z0_m=2 * t0 * t0 / b2, p0_w=b2 / (link.gamma_nl * t0 * t0))

    def l_norm(self, length_m: float) -> float:
        return length_m / self.z0_m

    def energy_norm(self, energy_j: float) -> float:
        return energy_j / (self.p0_w * self.t0_s)

    def psd_norm(self, psd_w_per_hz: float) -> float:
        return psd_w_per_hz / (self.p0_w * self.t0_s)


@dataclass(frozen=True)
class NoiseModel:
    """Channel noise configuration."""

    kind: str = "none"  # none | distributed | awgn
    n0: float = 0.0  # accumulated PSD for the awgn kind (signal units)
    rng_seed: int | None = None

    def __post_init__(self):
        if self.kind not in ("none", "distributed", "awgn"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.n0 < 0:
            raise ValueError("N0 must be non-negative")


def normalize(sig: ComplexEnvelope, norm: Normalization) -> ComplexEnvelope:
    """Physical -> dimensionless: t/T0, conj(A)/sqrt(P0)."""
    require_mode(sig, PHYSICAL)
    return ComplexEnvelope(
        samples=np.conj(sig.samples) / np.sqrt(norm.p0_w),
        t0=sig.t0 / norm.t0_s,
        dt=sig.dt / norm.t0_s,
        unit_mode=NORMALIZED,
    )


def denormalize(sig: ComplexEnvelope, norm: Normalization) -> ComplexEnvelope:
    """Dimensionless -> physical; exact inverse of :func:`normalize`."""
    require_mode(sig, NORMALIZED)
    return ComplexEnvelope(
        samples=np.conj(sig.samples) * np.sqrt(norm.p0_w),
        t0=sig.t0 * norm.t0_s,
        dt=sig.dt * norm.t0_s,
        unit_mode=PHYSICAL,
    )


def _dispersion_phase(n: int, dt: float, beta2: float, dz: float) -> np.ndarray:
    w = 2 * np.pi * np.fft.fftfreq(n, d=dt)
    return np.exp(0.5j * beta2 * (w * w) * dz)


def ssfm_propagate(
    sig: ComplexEnvelope,
    link: FiberLink,
    dz: float,
    noise: NoiseModel | None = None,
    rng: np.random.Generator | None = None,
) -> ComplexEnvelope:
    """Symmetric split-step integration over the full link length.

    Ideal distributed amplification: no net loss on the deterministic
    part; when ``noise.kind == "distributed"``, circular Gaussian noise
    of PSD eta_sp * h * f_c * alpha * dz is injected after every step
    over the full simulation bandwidth 1/dt.
    """
    require_mode(sig, PHYSICAL)
    if not dz > 0:
        raise ValueError("dz must be positive")
    n_steps = int(round(link.length / dz))
    if n_steps < 1 or abs(n_steps * dz - link.length) > 1e-6 * dz:
        raise ValueError("dz must divide the link length")
    add_noise = noise is not None and noise.kind == "distributed"
    if add_noise and rng is None:
        rng = np.random.default_rng(noise.rng_seed)
    n = len(sig)
    half = _dispersion_phase(n, sig.dt, link.beta2, dz / 2)
    a = sig.samples.copy()
    g = link.gamma_nl * dz
    if add_noise:
        # per-sample variance of one step's ASE over the grid bandwidth
        var = link.eta_sp * PLANCK * link.carrier_freq * link.alpha_att * dz / sig.dt
        scale = np.sqrt(var / 2)
    for _ in range(n_steps):
        a = np.fft.ifft(np.fft.fft(a) * half)
        a *= np.exp(1j * g * (a.real * a.real + a.imag * a.imag))
        a = np.fft.ifft(np.fft.fft(a) * half)
        if add_noise:
            a += scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
        if not np.all(np.isfinite(a)):
            raise SolverError("step too large")
    return sig.with_samples(a)


def awgn_channel(sig: ComplexEnvelope, n0: float, rng: np.random.Generator) -> ComplexEnvelope:
    """Add white circular Gaussian noise of PSD n0 over the grid bandwidth.

    Per-sample variance is n0/dt.  Units follow the signal's unit mode;
    this is the r~ = r + n ansatz channel when applied to a noiseless
    received waveform.
    """
    if n0 < 0:
        raise ValueError("N0 must be non-negative")
    if n0 == 0:
        return sig
    n = len(sig)
    scale = np.sqrt(n0 / sig.dt / 2)
    noise = scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    return sig.with_samples(sig.samples + noise)


def edc(sig: ComplexEnvelope, link: FiberLink) -> ComplexEnvelope:
    """Electronic dispersion compensation: exact inverse of the linear
    propagation filter over the link length."""
    require_mode(sig, PHYSICAL)
    phase = _dispersion_phase(len(sig), sig.dt, -link.beta2, link.length)
    return sig.with_samples(np.fft.ifft(np.fft.fft(sig.samples) * phase))


def dbp(sig: ComplexEnvelope, link: FiberLink, steps_per_span: int = 100) -> ComplexEnvelope:
    """Digital backpropagation: noiseless backward split-step with negated
    beta2 and gamma, ``steps_per_span`` steps per span of fiber."""
    require_mode(sig, PHYSICAL)
    if steps_per_span < 1:
        raise ValueError("steps_per_span must be >= 1")
    n_spans = max(1, int(round(link.length / link.span_length)))
    n_steps = n_spans * steps_per_span
    dz = link.length / n_steps
    back = FiberLink(
        beta2=-link.beta2,
        gamma_nl=-link.gamma_nl,
        alpha_att=link.alpha_att,
        length=link.length,
        eta_sp=link.eta_sp,
        carrier_freq=link.carrier_freq,
        span_length=link.span_length,
    )
    return ssfm_propagate(sig, back, dz)
