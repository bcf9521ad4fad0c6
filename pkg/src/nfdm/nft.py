"""Forward and backward nonlinear Fourier transforms (continuous spectrum).

Forward direction: layer peeling over the Zakharov-Shabat system

    d/dt [v1, v2] = [[-j lam, q], [-sigma q*, j lam]] [v1, v2]

with exact piecewise-constant transfer matrices per sample (cells centered
on the samples), boundary v -> [exp(-j lam t), 0] on the left, and
reflection coefficient rho(lam) = b(lam) / a(lam).

Backward direction: solve the integral equation

    K(x, y) - sigma F*(x+y)
        + sigma int_x^inf int_x^inf K(x, r) F(r+s) F*(s+y) dr ds = 0

where F(y) = (1/2pi) int rho(lam) exp(j lam y) dlam, and read off the
signal as r(t) = -2 K(t, t).  The reference discretization is a
trapezoidal Nystrom rule on [t, T_dom] with one dense solve per output
time; T_dom is taken from the decay of F, since K(x, y) vanishes
identically once x + y exceeds the upper edge of the support of F.  A
faster incremental solver with the same O(h^2) accuracy lives in
:mod:`nfdm.glme` and is cross-checked against this one in the tests.

On the real-lam grids used here the focusing (sigma=+1) system satisfies
|a|^2 + |b|^2 = 1 and the integral operator is I + (positive
semidefinite), so the dense solves are well conditioned.  The defocusing
case can become singular as |rho| -> 1; that surfaces as a residual
failure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SolverError
from .signal import ComplexEnvelope, FrequencyEnvelope, NORMALIZED

FOCUSING = 1
DEFOCUSING = -1


@dataclass(frozen=True)
class NonlinearSpectrum:
    """Continuous nonlinear spectrum rho(lam) on a uniform lam grid."""

    rho: np.ndarray
    lambda0: float
    dlambda: float
    sigma: int = FOCUSING

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=np.complex128)
        object.__setattr__(self, "rho", rho)
        if rho.ndim != 1 or rho.size < 1:
            raise ValueError("empty spectrum")
        if not self.dlambda > 0:
            raise ValueError("dlambda must be positive")
        if self.sigma not in (FOCUSING, DEFOCUSING):
            raise ValueError(f"sigma must be +1 or -1, got {self.sigma}")
        if not np.all(np.isfinite(rho)):
            raise ValueError("rho contains non-finite values")

    def __len__(self):
        return self.rho.size

    @property
    def lam(self) -> np.ndarray:
        return self.lambda0 + self.dlambda * np.arange(self.rho.size)

    def scaled(self, factor: complex) -> "NonlinearSpectrum":
        return NonlinearSpectrum(self.rho * factor, self.lambda0, self.dlambda, self.sigma)


@dataclass(frozen=True)
class GlmeKernel:
    """Samples of the kernel F(y) on a uniform y grid."""

    F: np.ndarray
    y0: float
    dy: float

    def __post_init__(self):
        F = np.asarray(self.F, dtype=np.complex128)
        object.__setattr__(self, "F", F)
        if F.ndim != 1 or F.size < 1:
            raise ValueError("empty kernel grid")
        if not self.dy > 0:
            raise ValueError("dy must be positive")

    def __len__(self):
        return self.F.size

    @property
    def y(self) -> np.ndarray:
        return self.y0 + self.dy * np.arange(self.F.size)

    @property
    def y_end(self) -> float:
        return self.y0 + self.dy * (self.F.size - 1)


@dataclass(frozen=True)
class GlmeSolve:
    """Diagnostics of a backward-NFT solve: K(t,t) samples and the max
    linear-system residual (relative to the right-hand side)."""

    K_diag: np.ndarray
    residual: float


def kernel_from_spectrum(spec: NonlinearSpectrum, y_grid: np.ndarray, edge_tol: float = 1e-3) -> GlmeKernel:
    """Evaluate F(y) = (1/2pi) sum rho(lam) exp(j lam y) dlam on y_grid.

    The sum over a finite lam comb is periodic in y with period
    2 pi / dlambda; the requested window must fit inside one period,
    otherwise the values would alias (raises).  A spectrum that has not
    decayed at the lam-grid edges triggers a warning via numpy's warnings
    machinery (stacklevel detail aside, it means the grid is too narrow).
    """
    y_grid = np.asarray(y_grid, dtype=float)
    if y_grid.size == 0:
        raise ValueError("empty y grid")
    span = float(y_grid.max() - y_grid.min())
    period = 2 * np.pi / spec.dlambda
    if span >= period:
        raise SolverError(
            f"kernel window span {span:.3g} exceeds the unaliased period "
            f"{period:.3g}; refine the lambda grid (zero-pad the signal)"
        )
    peak = np.max(np.abs(spec.rho))
    if peak > 0:
        edge = max(abs(spec.rho[0]), abs(spec.rho[-1]))
        if edge > edge_tol * peak:
            import warnings

            warnings.warn(
                f"spectrum magnitude at the lambda-grid edges is {edge / peak:.2e} "
                "of its peak; kernel values may be inaccurate",
                stacklevel=2,
            )
    lam = spec.lam
    shape = y_grid.shape
    yf = y_grid.ravel()
    out = np.empty(yf.size, dtype=np.complex128)
    # chunked direct evaluation; modest sizes, exactness over speed
    step = max(1, int(4e6 // max(1, lam.size)))
    for i in range(0, yf.size, step):
        block = np.exp(1j * np.outer(yf[i : i + step], lam))
        out[i : i + step] = block @ spec.rho
    out *= spec.dlambda / (2 * np.pi)
    dy = float(y_grid[1] - y_grid[0]) if y_grid.size > 1 else 1.0
    return GlmeKernel(F=out.reshape(shape), y0=float(yf[0]), dy=dy)


def kernel_on_lattice(spec: NonlinearSpectrum, y0: float, dy: float, n: int) -> GlmeKernel:
    """F(y) on the uniform lattice y0 + k*dy via a single zero-padded FFT.

    Exact (to roundoff) equivalent of :func:`kernel_from_spectrum` when
    2 pi / (dlambda * dy) is an integer >= max(n, len(spec)); the caller
    guarantees that by construction of the grids.
    """
    ratio = 2 * np.pi / (spec.dlambda * dy)
    nfft = int(round(ratio))
    if abs(ratio - nfft) > 1e-6 or nfft < max(n, len(spec)):
        # fall back to the direct sum
        return kernel_from_spectrum(spec, y0 + dy * np.arange(n))
    if n * dy >= 2 * np.pi / spec.dlambda:
        raise SolverError("kernel window exceeds the unaliased period")
    work = np.zeros(nfft, dtype=np.complex128)
    work[: len(spec)] = spec.rho * np.exp(1j * spec.lam * y0)
    # F(y0 + m dy) = (dlam/2pi) e^{j lambda0 m dy} * sum_l work_l e^{+j 2pi l m / nfft}
    vals = np.fft.ifft(work) * nfft
    # work already carries exp(j lam y0); only the m-dependent lambda0 phase remains
    out = vals[:n] * np.exp(1j * spec.lambda0 * dy * np.arange(n))
    out *= spec.dlambda / (2 * np.pi)
    return GlmeKernel(F=out, y0=y0, dy=dy)


def kernel_support_upper(kernel: GlmeKernel, rel_tol: float = 1e-6) -> float:
    """Largest y at which |F| still exceeds rel_tol * max|F|."""
    mag = np.abs(kernel.F)
    peak = mag.max()
    if peak == 0.0:
        return kernel.y0
    idx = np.nonzero(mag > rel_tol * peak)[0]
    return kernel.y0 + kernel.dy * int(idx[-1])


def backward_nft(
    spec: NonlinearSpectrum,
    t_grid: np.ndarray,
    t_dom_max: float | None = None,
    residual_tol: float = 1e-6,
    return_info: bool = False,
):
    """Recover r(t) = -2 K(t,t) from the continuous spectrum.

    Trapezoidal Nystrom reference solver: for each output time t the
    integral equation is discretized on [t, T_dom] with the grid spacing
    of ``t_grid`` and solved densely.  T_dom defaults to the measured
    upper edge of the support of F (beyond which K vanishes identically);
    pass ``t_dom_max`` to override.

    Returns the envelope in normalized units; with ``return_info=True``
    also returns a :class:`GlmeSolve` with the kernel diagonal and the
    worst relative residual.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.size < 1:
        raise ValueError("empty time grid")
    if t_grid.size > 1:
        h = float(t_grid[1] - t_grid[0])
        if not np.allclose(np.diff(t_grid), h, rtol=0, atol=1e-9 * abs(h)):
            raise ValueError("time grid must be uniform")
    else:
        h = 1.0
    sigma = float(spec.sigma)
    t_min = float(t_grid[0])

    # probe F over one addressable window to locate its support
    probe_hi = 2 * abs(t_min) + 2 * abs(float(t_grid[-1])) + 4 * h
    probe_hi = min(probe_hi, 2 * t_min + 2 * np.pi / spec.dlambda - 4 * h)
    n_probe = max(2, int(np.floor((probe_hi - 2 * t_min) / h)) + 1)
    probe = kernel_on_lattice(spec, 2 * t_min, h, n_probe)
    if t_dom_max is None:
        y_up = kernel_support_upper(probe) + h
        dom_end = None  # per-time domain [x, y_up - x]
    else:
        dom_end = float(t_dom_max)  # flat domain [x, t_dom_max]
        y_up = dom_end + float(t_grid[-1])

    # F lookup table on the h-lattice starting at 2*t_min
    need_hi = 2 * (y_up - t_min)
    n_f = max(2, int(np.ceil((need_hi - 2 * t_min) / h)) + 2)
    if n_f > len(probe):
        kern = kernel_on_lattice(spec, 2 * t_min, h, n_f)
    else:
        kern = probe
    Fg = kern.F
    base_y = kern.y0

    def f_at(idx):
        if np.any(idx < 0) or np.any(idx >= Fg.size):
            raise SolverError("insufficient kernel support for the requested times")
        return Fg[idx]

    r = np.zeros(t_grid.size, dtype=np.complex128)
    kdiag = np.zeros(t_grid.size, dtype=np.complex128)
    worst_resid = 0.0
    for i, x in enumerate(t_grid):
        upper = (y_up - x) if dom_end is None else dom_end
        n = int(np.floor((upper - x) / h)) + 1
        base = int(round((2 * x - base_y) / h))
        if n < 2:
            kdiag[i] = sigma * np.conj(f_at(np.array([base]))[0])
            r[i] = -2 * kdiag[i]
            continue
        j = np.arange(n)
        idx = base + j[:, None] + j[None, :]
        FM = f_at(idx)  # F(y_p + y_q) on the domain nodes
        w = np.full(n, h)
        w[0] = w[-1] = h / 2
        # G[p, q] = w_q * sum_s w_s F(y_q + s) F*(s + y_p)
        crossed = (FM * w[None, :]) @ np.conj(FM)  # [q, p], summed over s
        M = np.eye(n) + sigma * (crossed.T * w[None, :])
        rhs = sigma * np.conj(f_at(base + j))
        try:
            u = np.linalg.solve(M, rhs)
        except np.linalg.LinAlgError as exc:
            raise SolverError("GLME system ill-conditioned") from exc
        scale = np.linalg.norm(rhs)
        if scale > 0:
            resid = np.linalg.norm(M @ u - rhs) / scale
            worst_resid = max(worst_resid, float(resid))
        kdiag[i] = u[0]
        r[i] = -2 * u[0]
    if worst_resid > residual_tol:
        raise SolverError(
            f"GLME system ill-conditioned (residual {worst_resid:.2e} > {residual_tol:.0e})"
        )
    env = ComplexEnvelope(samples=r, t0=t_min, dt=h, unit_mode=NORMALIZED)
    if return_info:
        return env, GlmeSolve(K_diag=kdiag, residual=worst_resid)
    return env


def forward_nft(
    sig: ComplexEnvelope,
    lambda_grid: np.ndarray,
    sigma: int = FOCUSING,
    boundary_tol: float = 1e-6,
    band_limit_correction: bool = True,
) -> NonlinearSpectrum:
    """Layer-peeling forward transform: rho(lam) = b(lam) / a(lam).

    The potential is treated as piecewise constant on cells centered on
    the samples (second-order accurate).  ``band_limit_correction``
    divides b by the first-order sinc factor of that staircase so the
    low-amplitude limit reproduces the continuous transform exactly on
    the conjugate grid.

    Requires |q| at the grid edges below ``boundary_tol`` of its peak
    (vanishing boundary conditions).
    """
    q = sig.samples
    peak = np.max(np.abs(q))
    if peak > 0:
        edge = max(abs(q[0]), abs(q[-1]))
        if edge > boundary_tol * peak:
            raise SolverError(
                f"signal does not vanish at the grid boundaries "
                f"(edge/peak = {edge / peak:.2e})"
            )
    lam = np.asarray(lambda_grid, dtype=float)
    if lam.size == 0:
        raise ValueError("empty lambda grid")
    dt = sig.dt
    t_start = sig.t0 - dt / 2
    t_end = sig.t_end + dt / 2
    a, b = _layer_peel(q, lam, dt, t_start, t_end, float(sigma))
    if band_limit_correction:
        b = b / np.sinc(lam * dt / np.pi)
    bad = np.abs(a) < 1e-12
    if np.any(bad):
        raise SolverError(f"a(lambda) vanishes at lambda = {lam[bad][0]:.6g}")
    rho = b / a
    dlam = float(lam[1] - lam[0]) if lam.size > 1 else 1.0
    return NonlinearSpectrum(rho=rho, lambda0=float(lam[0]), dlambda=dlam, sigma=int(sigma))


def _layer_peel(q, lam, dt, t_start, t_end, sigma):
    v1 = np.exp(-1j * lam * t_start).astype(np.complex128)
    v2 = np.zeros_like(v1)
    lam2 = lam * lam
    for qn in q:
        k2 = lam2 + sigma * (qn.real * qn.real + qn.imag * qn.imag)
        k = np.sqrt(k2.astype(np.complex128))
        kd = k * dt
        c = np.cos(kd)
        small = np.abs(k) < 1e-12
        safe = np.where(small, 1.0, k)
        s = np.where(small, dt, np.sin(kd) / safe)
        t11 = c - 1j * lam * s
        t22 = c + 1j * lam * s
        t12 = qn * s
        t21 = -sigma * np.conj(qn) * s
        v1, v2 = t11 * v1 + t12 * v2, t21 * v1 + t22 * v2
    a = v1 * np.exp(1j * lam * t_end)
    b = v2 * np.exp(-1j * lam * t_end)
    return a, b


def scattering_coefficients(sig: ComplexEnvelope, lambda_grid, sigma: int = FOCUSING):
    """Raw (a, b) without the rho division; used by diagnostics/tests."""
    lam = np.asarray(lambda_grid, dtype=float)
    dt = sig.dt
    return _layer_peel(sig.samples, lam, dt, sig.t0 - dt / 2, sig.t_end + dt / 2, float(sigma))


def spectral_rotation(spec: NonlinearSpectrum, l_norm: float, direction: str) -> NonlinearSpectrum:
    """Dispersion/nonlinearity phase in the nonlinear frequency domain.

    direction "pre": rho *= exp(+4j lam^2 L); "channel": exp(-4j lam^2 L).
    |rho| is preserved pointwise and the two directions cancel exactly.
    """
    if l_norm < 0:
        raise ValueError("propagation length must be non-negative")
    if direction == "pre":
        sign = +1.0
    elif direction == "channel":
        sign = -1.0
    else:
        raise ValueError(f"direction must be 'pre' or 'channel', got {direction!r}")
    lam = spec.lam
    phase = np.exp(sign * 4j * lam * lam * l_norm)
    return NonlinearSpectrum(spec.rho * phase, spec.lambda0, spec.dlambda, spec.sigma)


def spectral_energy(spec: NonlinearSpectrum) -> float:
    """Time-domain energy of the signal with this continuous spectrum.

    For sigma=+1:  E = (1/pi) int ln(1 + |rho|^2) dlam
    For sigma=-1:  E = -(1/pi) int ln(1 - |rho|^2) dlam
    """
    mag2 = np.abs(spec.rho) ** 2
    if spec.sigma == FOCUSING:
        integrand = np.log1p(mag2)
    else:
        if np.any(mag2 >= 1.0):
            raise SolverError("defocusing spectrum with |rho| >= 1 has no finite energy")
        integrand = -np.log1p(-mag2)
    return float(np.sum(integrand) * spec.dlambda / np.pi)
