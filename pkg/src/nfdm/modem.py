"""Transmitter chain and candidate-waveform machinery.

The encoder maps a QAM burst onto the continuous nonlinear spectrum:

    s(t) = gain * sum_k x_k g[t - (k-1) T_s]          (pulse train)
    rho(lam) = -S(-lam / pi)                          (spectrum mapping)
    rho <- rho * exp(+4j lam^2 L)                     (precompensation)
    q(t) = q'(-t),  q' the backward NFT of rho        (optical input)

Everything here runs in normalized units (T_s = 2 with the default
T0 = T_s/2 choice).  Because the spectrum mapping composed with the
kernel integral collapses to F(y) = -s(-y/2)/2, candidate waveforms for
the detector are generated straight from the pulse train through the
incremental solver of :mod:`nfdm.glme`, without the Fourier detour; the
explicit spectrum route (used whenever precompensation is present) is
cross-checked against it in the tests.

A window k is the nu samples of the received-time interval
[t_{k-1}, t_k), t_k = (k - 1/2) T_s.  By causality those samples depend
only on symbols 1..k, which is what makes the per-prefix incremental
factorization (and its checkpoint/branch reuse) exact rather than an
approximation.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .channel import Normalization
from .errors import SolverError
from .glme import BorderedGlme, LatticeKernel, SignalKernel
from .nft import (
    FOCUSING,
    NonlinearSpectrum,
    backward_nft,
    kernel_on_lattice,
    kernel_support_upper,
    spectral_rotation,
)
from .signal import (
    NORMALIZED,
    ComplexEnvelope,
    FrequencyEnvelope,
    forward_ft,
    next_pow2,
    pad_to_length,
    time_reverse,
)


@dataclass(frozen=True)
class Constellation:
    """M-ary QAM alphabet with unit average energy and Gray bit labels."""

    points: np.ndarray
    labels: np.ndarray  # Gray-coded bit pattern of each point

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.complex128)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.int64))
        if len(np.unique(np.round(pts, 12))) != pts.size:
            raise ValueError("constellation points must be distinct")

    @property
    def size(self) -> int:
        return self.points.size

    @property
    def bits_per_symbol(self) -> int:
        return int(np.log2(self.size))

    @classmethod
    def square_qam(cls, m: int) -> "Constellation":
        if m not in (4, 16, 64):
            raise ValueError(f"supported QAM orders are 4, 16, 64; got {m}")
        side = int(np.sqrt(m))
        bits_axis = int(np.log2(side))
        levels = 2 * np.arange(side) - (side - 1)
        gray = np.arange(side) ^ (np.arange(side) >> 1)
        pts = np.empty(m, dtype=np.complex128)
        labels = np.empty(m, dtype=np.int64)
        idx = 0
        for i in range(side):
            for q in range(side):
                pts[idx] = levels[i] + 1j * levels[q]
                labels[idx] = (int(gray[i]) << bits_axis) | int(gray[q])
                idx += 1
        pts /= np.sqrt(np.mean(np.abs(pts) ** 2))
        return cls(points=pts, labels=labels)

    def nearest(self, values: np.ndarray) -> np.ndarray:
        """Minimum-distance indices for an array of complex samples."""
        v = np.asarray(values, dtype=np.complex128)
        d = np.abs(v[..., None] - self.points)
        return np.argmin(d, axis=-1)

    def index_of(self, symbols: np.ndarray) -> np.ndarray:
        idx = self.nearest(symbols)
        if not np.allclose(self.points[idx], symbols, rtol=0, atol=1e-9):
            raise ValueError("symbol not in constellation")
        return idx


@dataclass(frozen=True)
class PulseShape:
    """Supporting pulse g(t), truncated to a finite duration <= T_s."""

    kind: str = "gaussian"
    width_param: float = 12.5
    t_symbol: float = 2.0
    support: float | None = None  # duration T; defaults to T_s

    def __post_init__(self):
        if self.kind != "gaussian":
            raise ValueError(f"unsupported pulse kind {self.kind!r}")
        if self.support is None:
            object.__setattr__(self, "support", self.t_symbol)
        if self.support > self.t_symbol + 1e-12:
            raise ValueError("pulse support must not exceed the symbol time")

    def amplitude(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = np.exp(-self.width_param * (t / self.t_symbol) ** 2)
        return np.where(np.abs(t) <= self.support / 2, out, 0.0)

    def energy(self) -> float:
        from math import erf, pi, sqrt

        w = self.width_param
        u0 = (self.support / 2) * sqrt(2 * w) / self.t_symbol
        return self.t_symbol / sqrt(2 * w) * sqrt(pi) * erf(u0)

    def energy_fraction_in_symbol(self) -> float:
        """Energy fraction of the untruncated pulse inside one symbol time."""
        from math import erf, sqrt

        u0 = (self.t_symbol / 2) * sqrt(2 * self.width_param) / self.t_symbol
        return erf(u0)


@dataclass(frozen=True)
class Burst:
    """Symbol block followed by zero guard slots."""

    symbols: np.ndarray
    indices: np.ndarray
    n_guard: int = 0

    def __post_init__(self):
        object.__setattr__(self, "symbols", np.asarray(self.symbols, dtype=np.complex128))
        object.__setattr__(self, "indices", np.asarray(self.indices, dtype=np.int64))
        if self.symbols.size < 1:
            raise ValueError("burst must contain at least one symbol")
        if self.n_guard < 0:
            raise ValueError("guard count must be non-negative")

    @property
    def n_symbols(self) -> int:
        return self.symbols.size

    @classmethod
    def random(cls, constellation: Constellation, n_symbols: int, n_guard: int,
               rng: np.random.Generator) -> "Burst":
        idx = rng.integers(0, constellation.size, size=n_symbols)
        return cls(symbols=constellation.points[idx], indices=idx, n_guard=n_guard)

    @classmethod
    def from_indices(cls, constellation: Constellation, indices, n_guard: int = 0) -> "Burst":
        idx = np.asarray(indices, dtype=np.int64)
        return cls(symbols=constellation.points[idx], indices=idx, n_guard=n_guard)


@dataclass(frozen=True)
class ModemConfig:
    """Everything the TX chain and the detector must agree on."""

    constellation: Constellation
    pulse: PulseShape
    n_symbols: int
    n_guard: int
    nu: int  # samples per symbol
    normalization: Normalization
    l_norm: float = 0.0  # precompensation length, normalized units
    gain: float = 1.0  # amplitude scale on s(t)
    sigma: int = FOCUSING
    tail_fraction: float = 0.25

    def __post_init__(self):
        if self.nu < 2 or self.nu % 2:
            raise ValueError("nu must be an even integer >= 2")
        if self.n_symbols < 1:
            raise ValueError("N_b must be >= 1")
        if self.n_guard < 0:
            raise ValueError("N_z must be >= 0")

    @property
    def t_symbol(self) -> float:
        return self.pulse.t_symbol

    @property
    def dt(self) -> float:
        return self.pulse.t_symbol / self.nu

    def t_boundary(self, k: int) -> float:
        """t_k = (k - 1/2) T_s; window k covers [t_{k-1}, t_k)."""
        return (k - 0.5) * self.pulse.t_symbol

    @property
    def tail_symbols(self) -> int:
        return max(2, int(np.ceil(self.tail_fraction * self.n_symbols)))

    def with_gain(self, gain: float) -> "ModemConfig":
        return replace(self, gain=gain)


def build_qam_signal(burst: Burst, config: ModemConfig) -> ComplexEnvelope:
    """Pulse train on [-T_s/2, (N_b + N_z - 1/2) T_s) at nu samples/symbol."""
    config.constellation.index_of(burst.symbols)  # raises if foreign symbols
    n_slots = burst.n_symbols + burst.n_guard
    kernel = SignalKernel(config.pulse, n_slots, gain=config.gain)
    for k, amp in enumerate(burst.symbols):
        kernel.set_slot(k, amp)
    n = n_slots * config.nu
    t0 = -config.pulse.t_symbol / 2
    t = t0 + config.dt * np.arange(n)
    return ComplexEnvelope(samples=kernel.waveform(t), t0=t0, dt=config.dt, unit_mode=NORMALIZED)


def nis_map(spec_f: FrequencyEnvelope, sigma: int = FOCUSING) -> NonlinearSpectrum:
    """rho(lam) = -S(-lam/pi): a pure reindexing of the frequency grid."""
    n = len(spec_f)
    f_end = spec_f.f0 + (n - 1) * spec_f.df
    return NonlinearSpectrum(
        rho=-spec_f.values[::-1],
        lambda0=-np.pi * f_end,
        dlambda=np.pi * spec_f.df,
        sigma=sigma,
    )


def nis_unmap(spec: NonlinearSpectrum, t0: float = 0.0) -> FrequencyEnvelope:
    """Inverse of :func:`nis_map`; ``t0`` re-anchors the time origin."""
    n = len(spec)
    lam_end = spec.lambda0 + (n - 1) * spec.dlambda
    return FrequencyEnvelope(
        values=-spec.rho[::-1],
        f0=-lam_end / np.pi,
        df=spec.dlambda / np.pi,
        t0=t0,
    )


def burst_spectrum(burst: Burst, config: ModemConfig, pad_factor: int = 4) -> NonlinearSpectrum:
    """Nonlinear spectrum of the burst before precompensation.

    The signal is explicitly zero-padded to a power of two at least
    ``pad_factor`` times its length so the kernel of the inverse problem
    is free of periodization over the frames used downstream.
    """
    s = build_qam_signal(burst, config)
    s = pad_to_length(s, next_pow2(pad_factor * len(s)))
    return nis_map(forward_ft(s), sigma=config.sigma)


def transmit(burst: Burst, config: ModemConfig, method: str = "bordered") -> ComplexEnvelope:
    """Full TX chain; returns the optical input q(t) in normalized units.

    ``method`` selects the backward-NFT implementation: "bordered" (the
    incremental solver) or "reference" (trapezoidal Nystrom).
    """
    if np.all(burst.symbols == 0):
        s = build_qam_signal(burst, config)
        return time_reverse(s.with_samples(np.zeros(len(s), dtype=np.complex128)))
    h = config.dt
    pad = 4
    for attempt in range(4):
        rho = burst_spectrum(burst, config, pad_factor=pad)
        if config.l_norm > 0:
            rho = spectral_rotation(rho, config.l_norm, "pre")
        period = 2 * np.pi / rho.dlambda
        # probe the kernel over (nearly) the full period to find its support
        frame_hi = config.pulse.support
        frame_lo = -2 * config.t_boundary(burst.n_symbols + burst.n_guard)
        center = 0.5 * (frame_lo + frame_hi)
        n_probe = int(np.floor((period - 4 * h) / h))
        y0 = center - (n_probe // 2) * h
        probe = kernel_on_lattice(rho, y0, h, n_probe)
        mag = np.abs(probe.F)
        nz = np.nonzero(mag > 1e-6 * mag.max())[0]
        y_lo_sup = probe.y0 + probe.dy * int(nz[0])
        y_hi_sup = probe.y0 + probe.dy * int(nz[-1])
        margin = 8 * h
        if y_lo_sup > probe.y0 + margin and y_hi_sup < probe.y_end - margin:
            break
        pad *= 2
    else:
        raise SolverError("kernel support does not fit one period; burst too dispersed")

    tail = config.tail_symbols * config.t_symbol
    t_anchor = -config.pulse.t_symbol / 2
    snap = lambda v, up: t_anchor + (np.ceil if up else np.floor)((v - t_anchor) / h) * h
    tau_max = snap(y_hi_sup / 2 + h, True)
    tau_min = snap(y_lo_sup / 2, False) - tail
    tau = np.arange(tau_min, tau_max + h / 2, h)
    y_up = y_hi_sup + h

    if method == "reference":
        qprime = backward_nft(rho, tau)
    elif method == "bordered":
        half = h / 2
        base = 2 * tau_min - 2 * h
        count = int(np.ceil((2 * (y_up - tau_min) - base) / half)) + 8
        kern = LatticeKernel.from_spectrum(rho, base, half, count, support_upper=y_up)
        eng = BorderedGlme(kern, h, config.sigma, t_anchor=tau_min, y_up=y_up,
                           cap_nodes=int(np.ceil((y_up - 2 * tau_min) / h)) + 8)
        samples = eng.profile(tau)
        qprime = ComplexEnvelope(samples=samples, t0=float(tau[0]), dt=h, unit_mode=NORMALIZED)
    else:
        raise ValueError(f"unknown method {method!r}")
    return time_reverse(qprime)


class WindowEngine:
    """Per-path candidate-window generator for the decision-feedback chain.

    Holds one growing factorization whose committed prefix mirrors the
    decided symbols; candidate windows at the next position are produced
    by speculative extension and rollback.  ``fork`` snapshots the state
    after any committed step, which is how divergent (erroneous) decision
    paths are continued without recomputing the shared prefix.
    """

    def __init__(self, config: ModemConfig, _fork_src=None, _fork_steps: int | None = None):
        self.config = config
        h = config.dt
        n_slots = config.n_symbols
        if _fork_src is None:
            self.kernel = SignalKernel(config.pulse, n_slots, gain=config.gain)
            y_up = config.pulse.support + h
            x_min = -config.t_boundary(config.n_symbols) + h
            cap = int(np.ceil((y_up - 2 * x_min) / h)) + 8
            self.engine = BorderedGlme(self.kernel, h, config.sigma, t_anchor=0.0,
                                       y_up=y_up, cap_nodes=cap)
            self.prefix: list[int] = []
            self._step_nodes: list[int] = []
            self._marks: list = []
        else:
            src, steps = _fork_src, _fork_steps
            self.kernel = SignalKernel(config.pulse, n_slots, gain=config.gain)
            for k in range(steps):
                self.kernel.set_slot(k, config.constellation.points[src.prefix[k]])
            n_nodes = src._step_nodes[steps - 1] if steps > 0 else 0
            cap = src.engine.node_j.size
            self.engine = src.engine.clone(n_nodes, cap_nodes=cap, kernel=self.kernel)
            self.prefix = list(src.prefix[:steps])
            self._step_nodes = list(src._step_nodes[:steps])
            self._marks = []

    def fork(self, steps: int) -> "WindowEngine":
        """Independent engine continuing from the state after ``steps`` decisions."""
        return WindowEngine(self.config, _fork_src=self, _fork_steps=steps)

    def _window_x(self, k: int) -> np.ndarray:
        """Solver times (descending) for window k's nu samples."""
        cfg = self.config
        t = cfg.t_boundary(k - 1) + cfg.dt * np.arange(cfg.nu)
        return -t

    def _solve_window(self, k: int) -> np.ndarray:
        x = self._window_x(k)
        self.engine.extend_for(float(x.min()))
        vals = np.array([self.engine.diag_value(float(xi)) for xi in x])
        return -2.0 * vals  # ascending received time within the window

    def candidate_windows(self, k: int | None = None) -> np.ndarray:
        """(M, nu) candidate windows at step k (defaults to the next step)."""
        kk = len(self.prefix) + 1 if k is None else k
        if kk != len(self.prefix) + 1:
            raise ValueError("engine prefix does not match the requested step")
        if kk > self.config.n_symbols:
            raise ValueError("step beyond the burst length")
        pts = self.config.constellation.points
        out = np.empty((pts.size, self.config.nu), dtype=np.complex128)
        state = self.engine.mark()
        for i, amp in enumerate(pts):
            self.kernel.set_slot(kk - 1, amp)
            out[i] = self._solve_window(kk)
            self.engine.rollback(state)
        self.kernel.set_slot(kk - 1, 0.0)
        return out

    def advance(self, symbol_index: int) -> None:
        """Commit a decision and extend the factorization through its window."""
        k = len(self.prefix) + 1
        self._marks.append(self.engine.mark())
        self.kernel.set_slot(k - 1, self.config.constellation.points[symbol_index])
        self.engine.extend_for(float(self._window_x(k).min()))
        self.prefix.append(int(symbol_index))
        self._step_nodes.append(self.engine.n)

    def retreat(self) -> None:
        """Undo the last :meth:`advance` (used by exhaustive search)."""
        if not self.prefix:
            raise ValueError("nothing to retreat")
        self.engine.rollback(self._marks.pop())
        self.prefix.pop()
        self._step_nodes.pop()
        self.kernel.set_slot(len(self.prefix), 0.0)

    def window(self, k: int) -> np.ndarray:
        """Window k of the committed path (k <= committed steps)."""
        if k > len(self.prefix):
            raise ValueError("window not committed yet")
        return self._solve_window(k)


def candidate_waveform(prefix_indices, candidate_index: int, k: int,
                       config: ModemConfig) -> np.ndarray:
    """nu samples of the trial waveform for (prefix, X_i) on [t_{k-1}, t_k).

    One-shot convenience wrapper over :class:`WindowEngine`; detector
    loops reuse a shared engine instead.
    """
    prefix_indices = list(prefix_indices)
    if len(prefix_indices) != k - 1:
        raise ValueError("prefix must contain exactly k-1 symbols")
    eng = WindowEngine(config)
    for idx in prefix_indices:
        eng.advance(int(idx))
    return eng.candidate_windows(k)[int(candidate_index)]
