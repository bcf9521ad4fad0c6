"""Receiver strategies: ADC front end, decision-feedback detection against
backward-NFT candidate waveforms, the conventional forward-NFT receiver,
phase-offset removal, and the brute-force optimum-sequence oracle.

All detectors work on :class:`ReceivedWindows`: the received signal cut
into per-symbol windows [t_{k-1}, t_k), t_k = (k - 1/2) T_s, after an
ideal rectangular filter of bandwidth nu/(2 T_s) sampled at nu per
symbol.  The right tail beyond t_{N_b} is kept separately and ignored by
the decision rules.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SolverError
from .modem import Burst, ModemConfig, WindowEngine
from .nft import forward_nft, kernel_on_lattice
from .signal import ComplexEnvelope, brickwall_lowpass, next_pow2, pad_to_length, time_reverse


@dataclass(frozen=True)
class ReceivedWindows:
    """Per-symbol sample blocks of the received signal."""

    windows: np.ndarray  # (N_b, nu) complex
    discarded_tail: np.ndarray  # samples at t >= t_{N_b}
    t_symbol: float

    def __post_init__(self):
        w = np.asarray(self.windows, dtype=np.complex128)
        object.__setattr__(self, "windows", w)
        object.__setattr__(self, "discarded_tail", np.asarray(self.discarded_tail, dtype=np.complex128))
        if w.ndim != 2:
            raise ValueError("windows must be a (N_b, nu) array")

    @property
    def n_symbols(self) -> int:
        return self.windows.shape[0]

    @property
    def nu(self) -> int:
        return self.windows.shape[1]

    def rotated(self, phase: float) -> "ReceivedWindows":
        rot = np.exp(-1j * phase)
        return ReceivedWindows(self.windows * rot, self.discarded_tail * rot, self.t_symbol)


@dataclass(frozen=True)
class DecisionTrace:
    """Decisions plus the per-step squared distances that produced them."""

    decided: np.ndarray  # (N_b,) constellation indices
    per_step_distances: np.ndarray  # (N_b, M) squared Euclidean distances
    phase_offset: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "decided", np.asarray(self.decided, dtype=np.int64))
        object.__setattr__(self, "per_step_distances", np.asarray(self.per_step_distances, dtype=float))


def adc_front_end(sig: ComplexEnvelope, nu: int, t_symbol: float, n_symbols: int) -> ReceivedWindows:
    """Rectangular filter at nu/(2 T_s), sampling at nu/T_s, windowing.

    The input grid must be at least as fine as the output rate and
    sample-aligned with the window boundaries.
    """
    dt_out = t_symbol / nu
    ratio = dt_out / sig.dt
    stride = int(round(ratio))
    if stride < 1 or abs(ratio - stride) > 1e-9:
        raise ValueError("signal grid must be an integer multiple of the ADC rate")
    filtered = sig if stride == 1 else brickwall_lowpass(sig, nu / (2 * t_symbol))
    start = -t_symbol / 2
    i0 = int(round((start - sig.t0) / sig.dt))
    if abs(sig.t0 + i0 * sig.dt - start) > 1e-9 * sig.dt:
        raise ValueError("signal grid is not aligned with the symbol windows")
    if i0 < 0 or i0 + stride * (n_symbols * nu - 1) >= len(sig):
        raise ValueError("signal shorter than the detection span")
    sampled = filtered.samples[i0::stride]
    need = n_symbols * nu
    windows = sampled[:need].reshape(n_symbols, nu)
    tail = sampled[need:]
    return ReceivedWindows(windows=windows, discarded_tail=tail, t_symbol=t_symbol)


class CachedWindowProvider:
    """Candidate windows keyed by decided prefix, backed by WindowEngines.

    Keeps one engine per live decision path; a diverging prefix forks the
    engine at the last common step, so repeated queries along any path
    cost one incremental extension each.
    """

    def __init__(self, config: ModemConfig, max_cache: int = 200000):
        self.config = config
        self.cache: dict[tuple, np.ndarray] = {}
        self.engine = WindowEngine(config)
        self.max_cache = max_cache

    def __call__(self, prefix: tuple) -> np.ndarray:
        hit = self.cache.get(prefix)
        if hit is not None:
            return hit
        eng = self.engine
        common = 0
        for a, b in zip(prefix, eng.prefix):
            if a != b:
                break
            common += 1
        if common < len(eng.prefix):
            eng = eng.fork(common)
            self.engine = eng
        for idx in prefix[common:]:
            eng.advance(int(idx))
        win = eng.candidate_windows()
        if len(self.cache) < self.max_cache:
            self.cache[prefix] = win
        return win


def _distance_rows(rx: ReceivedWindows, provider, feedback_indices=None):
    n_b = rx.n_symbols
    m = rx.windows.shape[1]
    decided = np.zeros(n_b, dtype=np.int64)
    dists = None
    for k in range(1, n_b + 1):
        if feedback_indices is None:
            prefix = tuple(decided[: k - 1])
        else:
            prefix = tuple(int(i) for i in feedback_indices[: k - 1])
        wins = provider(prefix)
        if dists is None:
            dists = np.zeros((n_b, wins.shape[0]))
        diff = rx.windows[k - 1][None, :] - wins
        d2 = np.sum(diff.real**2 + diff.imag**2, axis=1)
        dists[k - 1] = d2
        decided[k - 1] = int(np.argmin(d2))
    return decided, dists


def df_bnft_detect(rx: ReceivedWindows, config: ModemConfig, provider=None) -> DecisionTrace:
    """Decision-feedback detection: at step k compare the received window
    against the M trial waveforms generated from (decided prefix, X_i) and
    keep the minimum squared distance (ties -> lowest index)."""
    if provider is None:
        provider = CachedWindowProvider(config)
    decided, dists = _distance_rows(rx, provider, feedback_indices=None)
    return DecisionTrace(decided=decided, per_step_distances=dists)


def genie_df_detect(rx: ReceivedWindows, config: ModemConfig, truth: Burst, provider=None) -> DecisionTrace:
    """Error-propagation-free variant: the feedback prefix is the true one."""
    if provider is None:
        provider = CachedWindowProvider(config)
    decided, dists = _distance_rows(rx, provider, feedback_indices=truth.indices)
    return DecisionTrace(decided=decided, per_step_distances=dists)


def _edge_taper(n: int, ramp: int) -> np.ndarray:
    win = np.ones(n)
    if ramp > 0:
        r = 0.5 * (1 - np.cos(np.pi * np.arange(ramp) / ramp))
        win[:ramp] = r
        win[-ramp:] = r[::-1]
    return win


def fnft_detect(sig: ComplexEnvelope, config: ModemConfig, taper_symbols: int = 2) -> DecisionTrace:
    """Conventional receiver: forward NFT, spectrum unmapping, matched
    filtering, symbol-by-symbol minimum distance.

    The grid edges are cosine-tapered over ``taper_symbols`` symbol times
    so the scattering recursion sees vanishing boundaries even in noise.
    """
    nu = config.nu
    ts = config.t_symbol
    if abs(sig.dt - ts / nu) > 1e-9 * sig.dt:
        raise ValueError("fnft_detect expects the signal on the ADC grid")
    ramp = taper_symbols * nu
    tapered = sig.with_samples(sig.samples * _edge_taper(len(sig), ramp))
    padded = pad_to_length(tapered, next_pow2(len(tapered)))
    qprime = time_reverse(padded)
    n = len(qprime)
    f = np.fft.fftshift(np.fft.fftfreq(n, d=qprime.dt))
    lam = (-np.pi * f)[::-1]
    rho = forward_nft(qprime, lam, sigma=config.sigma)
    # s(t) = -2 F(-2 t): reconstruct the QAM signal from the recovered spectrum
    n_b = config.n_symbols
    t = -ts / 2 + sig.dt * np.arange(n_b * nu)
    y = -2.0 * t
    kern = kernel_on_lattice(rho, float(y[-1]), 2 * sig.dt, y.size)
    s_hat = -2.0 * kern.F[::-1]
    g = config.pulse.amplitude(-ts / 2 + sig.dt * np.arange(nu))
    e_g = np.sum(np.abs(g) ** 2) * sig.dt
    sym = (s_hat.reshape(n_b, nu) @ np.conj(g)) * sig.dt / e_g / config.gain
    pts = config.constellation.points
    d2 = np.abs(sym[:, None] - pts[None, :]) ** 2
    decided = np.argmin(d2, axis=1)
    return DecisionTrace(decided=decided, per_step_distances=d2)


def phase_offset_compensate(rx: ReceivedWindows, reference: np.ndarray,
                            resolution: float = 1e-3) -> tuple[ReceivedWindows, float]:
    """Estimate and remove a constant phase rotation.

    Scans alpha over [-pi, pi] at the given resolution and maximizes
    Re{exp(-j alpha) <rx, reference>}; the reference is a set of known
    (pilot or genie) windows of the same shape.
    """
    if reference is None:
        raise ValueError("phase reference unavailable")
    ref = np.asarray(reference, dtype=np.complex128)
    if ref.shape != rx.windows.shape:
        raise ValueError("reference shape does not match the received windows")
    corr = np.sum(rx.windows * np.conj(ref))
    grid = np.arange(-np.pi, np.pi, resolution)
    alpha = float(grid[np.argmax(np.real(np.exp(-1j * grid) * corr))])
    return rx.rotated(alpha), alpha


def optimum_sequence_detect(rx: ReceivedWindows, config: ModemConfig,
                            max_sequences: int = 100_000) -> Burst:
    """Exhaustive maximization of the factorized log-likelihood over all
    M^{N_b} symbol sequences (oracle scale only)."""
    m = config.constellation.size
    n_b = rx.n_symbols
    if m**n_b > max_sequences:
        raise ValueError("sequence space too large")
    eng = WindowEngine(config)
    best = {"score": -np.inf, "seq": None}
    seq = np.zeros(n_b, dtype=np.int64)

    def recurse(k: int, acc: float):
        wins = eng.candidate_windows()
        diff = rx.windows[k - 1][None, :] - wins
        d2 = np.sum(diff.real**2 + diff.imag**2, axis=1)
        for i in range(m):
            seq[k - 1] = i
            score = acc - d2[i]
            if k == n_b:
                if score > best["score"]:
                    best["score"] = score
                    best["seq"] = seq.copy()
            else:
                eng.advance(i)
                recurse(k + 1, score)
                eng.retreat()

    recurse(1, 0.0)
    return Burst.from_indices(config.constellation, best["seq"])
