"""Semianalytic error estimation, error counting, and link metrics.

For a transmitted sequence, let d_k(m, i) = || r_k^(m) - r_k^(i) || be
the distance between the candidate windows of symbols X_m and X_i at
position k, both built on the true prefix.  With per-sample noise std
sigma the probability that X_m at position k is lost to some other
symbol is bracketed by

    upper:  sum_{i != m} Q(d_k(m,i) / 2 sigma)
    approx: 1 - prod_{i != m} (1 - Q(d_k(m,i) / 2 sigma))
    lower:  Q(min_{i != m} d_k(m,i) / 2 sigma)

and the sequence error probability averages these over all (k, m).
Averaging over transmitted sequences is Monte Carlo: random sequences
are drawn until the running means stabilize, which takes only a handful
of sequences compared to direct error counting.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc, erfcinv

from .errors import ConvergenceError
from .modem import Burst, Constellation, ModemConfig, WindowEngine


def qfunc(x):
    """Gaussian tail probability Q(x) = erfc(x / sqrt(2)) / 2."""
    return 0.5 * erfc(np.asarray(x, dtype=float) / np.sqrt(2.0))


@dataclass(frozen=True)
class DistanceTable:
    """Pairwise candidate-window distances d[k, m, i] for one sequence."""

    d: np.ndarray  # (N_b, M, M), non-negative, zero diagonal

    def __post_init__(self):
        object.__setattr__(self, "d", np.asarray(self.d, dtype=float))
        if self.d.ndim != 3 or self.d.shape[1] != self.d.shape[2]:
            raise ValueError("distance table must be (N_b, M, M)")


@dataclass
class ErrorReport:
    """Counted and semianalytic error figures for one operating point."""

    n_bursts: int = 0
    n_symbol_errors: int = 0
    n_bit_errors: int = 0
    pe_mc: float | None = None
    pb_mc: float | None = None
    pe_upper: float | None = None
    pe_approx: float | None = None
    pe_lower: float | None = None
    q_db: float | None = None
    sigma: float | None = None
    history: list = field(default_factory=list)


def distance_table(seq: Burst, config: ModemConfig, provider=None) -> DistanceTable:
    """Distances between all candidate pairs along the true prefix of seq."""
    n_b = seq.n_symbols
    m = config.constellation.size
    if provider is None:
        eng = WindowEngine(config)

        def provider(prefix):
            for idx in prefix[len(eng.prefix):]:
                eng.advance(int(idx))
            return eng.candidate_windows()

    d = np.zeros((n_b, m, m))
    for k in range(1, n_b + 1):
        wins = provider(tuple(int(i) for i in seq.indices[: k - 1]))
        diff = wins[:, None, :] - wins[None, :, :]
        d[k - 1] = np.sqrt(np.sum(diff.real**2 + diff.imag**2, axis=2))
    return DistanceTable(d=d)


def pk_bounds(table: DistanceTable, sigma: float, k: int, m: int) -> tuple[float, float, float]:
    """(upper, approx, lower) on the step-k error probability of symbol m.

    ``k`` and ``m`` are zero-based indices into the table.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    d = np.delete(table.d[k, m], m)
    q = qfunc(d / (2 * sigma))
    upper = float(np.sum(q))
    approx = float(1.0 - np.prod(1.0 - q))
    lower = float(qfunc(np.min(d) / (2 * sigma)))
    return upper, approx, lower


def pe_bounds_for_table(table: DistanceTable, sigma: float) -> tuple[float, float, float]:
    """Eq.-style average of the three estimates over all (k, m)."""
    n_b, m, _ = table.d.shape
    iu = ~np.eye(m, dtype=bool)
    d = table.d[:, iu].reshape(n_b, m, m - 1)
    q = qfunc(d / (2 * sigma))
    upper = float(np.mean(np.sum(q, axis=2)))
    approx = float(np.mean(1.0 - np.prod(1.0 - q, axis=2)))
    lower = float(np.mean(qfunc(np.min(d, axis=2) / (2 * sigma))))
    return upper, approx, lower


@dataclass(frozen=True)
class Convergence:
    rel_tol: float = 0.01
    window: int = 5
    max_sequences: int = 64


def pe_semianalytic(config: ModemConfig, sigma: float, sequence_source,
                    convergence: Convergence = Convergence()) -> ErrorReport:
    """Monte Carlo sequence average of the semianalytic triple.

    ``sequence_source`` yields Bursts; averaging stops once all three
    running means move by less than ``rel_tol`` over ``window``
    consecutive sequences.  Raises :class:`ConvergenceError` (carrying
    the partial report) if the budget runs out first.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    sums = np.zeros(3)
    history = []
    count = 0
    for seq in sequence_source:
        table = distance_table(seq, config)
        sums += np.array(pe_bounds_for_table(table, sigma))
        count += 1
        history.append(sums / count)
        if count > convergence.window:
            now = history[-1]
            then = history[-1 - convergence.window]
            rel = np.abs(now - then) / np.maximum(np.abs(now), 1e-300)
            if np.all(rel < convergence.rel_tol):
                break
        if count >= convergence.max_sequences:
            partial = ErrorReport(
                n_bursts=count, sigma=sigma,
                pe_upper=float(history[-1][0]), pe_approx=float(history[-1][1]),
                pe_lower=float(history[-1][2]), history=history,
            )
            raise ConvergenceError("semianalytic average did not stabilize", partial=partial)
    mean = history[-1]
    return ErrorReport(
        n_bursts=count, sigma=sigma,
        pe_upper=float(mean[0]), pe_approx=float(mean[1]), pe_lower=float(mean[2]),
        history=history,
    )


def count_errors(decided, truth: Burst, constellation: Constellation) -> tuple[int, int]:
    """Symbol mismatches and Gray-label bit mismatches."""
    decided_idx = np.asarray(getattr(decided, "decided", decided), dtype=np.int64)
    true_idx = truth.indices
    sym = int(np.sum(decided_idx != true_idx))
    xor = constellation.labels[decided_idx] ^ constellation.labels[true_idx]
    bits = int(sum(int(v).bit_count() for v in xor))
    return sym, bits


def q_factor_from_pb(pb: float) -> float:
    """Q^2 in dB: 20 log10(sqrt(2) erfcinv(2 Pb)); defined for 0 < Pb < 0.5."""
    if not 0.0 < pb < 0.5:
        raise ValueError("Q-factor undefined")
    return float(20.0 * np.log10(np.sqrt(2.0) * erfcinv(2.0 * pb)))


def pb_from_pe(pe: float, m: int, per_symbol_bits: bool = False) -> float:
    """Bit-error probability from symbol-error probability.

    Default is the Pe/M reading (one bit error per symbol error and the
    1/M normalization); ``per_symbol_bits`` switches to Pe/log2(M).
    """
    if per_symbol_bits:
        return pe / np.log2(m)
    return pe / m


def rate_efficiency(n_symbols: int, n_guard: int) -> float:
    """eta = N_b / (N_b + N_z)."""
    return n_symbols / (n_symbols + n_guard)


def mean_power_per_symbol(e_tot: float, n_symbols: int, t_symbol: float) -> float:
    """P_s = E_s / T_s with E_s = E_tot / N_b."""
    return e_tot / n_symbols / t_symbol


def dbm(power_w: float) -> float:
    return 10.0 * np.log10(power_w / 1e-3)


def watt(power_dbm: float) -> float:
    return 1e-3 * 10.0 ** (power_dbm / 10.0)


def evm_q_estimate(rx_symbols, tx_symbols, m: int) -> float:
    """Q-factor from the error vector magnitude (for error rates too low
    to count): EVM^2 = E|rx-tx|^2 / E|tx|^2, SNR = 1/EVM^2, then the
    square-QAM bit-error closed form and the Q conversion."""
    rx = np.asarray(rx_symbols, dtype=np.complex128)
    tx = np.asarray(tx_symbols, dtype=np.complex128)
    ref = np.mean(np.abs(tx) ** 2)
    if ref == 0:
        raise ValueError("zero reference power")
    evm2 = np.mean(np.abs(rx - tx) ** 2) / ref
    if evm2 == 0:
        return float("inf")
    gamma_s = 1.0 / evm2
    pb = (4.0 * (1.0 - 1.0 / np.sqrt(m)) / np.log2(m)) * float(qfunc(np.sqrt(3.0 * gamma_s / (m - 1))))
    if pb <= 0.0:
        return float("inf")
    if pb >= 0.5:
        raise ValueError("Q-factor undefined")
    return q_factor_from_pb(pb)


def wilson_interval(k: int, n: int, z: float = 1.96) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n == 0:
        return 0.0, 1.0
    p = k / n
    denom = 1 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)
