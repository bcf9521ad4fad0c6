"""Incremental solver for the backward-NFT integral equation.

The equation

    K(x, y) = sigma F*(x+y) - sigma int_x^D int_x^D K(x, r) F(r+s) F*(s+y) dr ds

is rewritten with the auxiliary unknown P(x, s) = int K(x, r) F(r+s) dr as
the coupled pair

    u(y) + sigma h sum_q F*(y + z_q) P(z_q) = sigma F*(x + z_p)
    P(s) -       h sum_q F(s + z_q)  u(z_q) = 0

discretized by the midpoint rule on nodes z = x + (i + 1/2) h.  The key
structural facts this module exploits:

* K(x, y) vanishes identically for x + y above the upper edge of the
  support of F, so the domain for output time x is [x, y_up - x].
* Domains for decreasing x are nested; each h-step of x adds exactly one
  node at each end of the domain and leaves every existing matrix entry
  unchanged (entries depend only on node-pair sums, never on x).
* Therefore an unpivoted block-LU factorization can be grown by
  bordering, and the factors of every smaller domain are literally the
  leading blocks of the current factors.  One full sweep costs O(n^3)
  total instead of O(n^3) per output point, and intermediate states can
  be checkpointed by remembering a row count.

Output samples are read off as r(x) = -2 K(x, x) with

    K(x, x) = sigma F*(2x) - sigma h sum_q P(z_q) F*(z_q + x).

Unknowns are stored interleaved per node, (u_p, P_p), so a node append
adds two adjacent rows/columns.  For the focusing sign the continuous
operator is I + (positive semidefinite), which keeps the unpivoted
factorization well behaved; a small-pivot guard raises on the genuinely
singular defocusing cases.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular

from .errors import SolverError
from .nft import GlmeKernel, NonlinearSpectrum, kernel_on_lattice

_PIVOT_TOL = 1e-12


class SignalKernel:
    """F(y) = -s(-y/2) / 2 for a pulse train s(t) = gain * sum a_k g(t - k T_s).

    Evaluates anywhere by direct summation of the (compactly supported)
    pulses, so mutating one symbol amplitude is O(1).  Slot k (0-based)
    is the pulse centered at k * t_symbol.
    """

    def __init__(self, pulse, n_slots: int, gain: float = 1.0):
        self.pulse = pulse
        self.amps = np.zeros(n_slots, dtype=np.complex128)
        self.gain = gain
        # s(t) support: [-T/2, (n_slots - 1) T_s + T/2]
        self.support_upper = pulse.support  # F support: y <= 2 * (T/2)

    def set_slot(self, k: int, amp: complex) -> None:
        self.amps[k] = amp

    def clear_from(self, k: int) -> None:
        self.amps[k:] = 0.0

    def waveform(self, t: np.ndarray) -> np.ndarray:
        """s(t), vectorized; each t is covered by at most a few pulses."""
        t = np.asarray(t, dtype=float)
        ts = self.pulse.t_symbol
        out = np.zeros(t.shape, dtype=np.complex128)
        k0 = np.rint(t / ts).astype(np.int64)
        for off in (-1, 0, 1):
            k = k0 + off
            valid = (k >= 0) & (k < self.amps.size)
            if not np.any(valid):
                continue
            kv = np.where(valid, k, 0)
            contrib = self.amps[kv] * self.pulse.amplitude(t - k * ts)
            out += np.where(valid, contrib, 0.0)
        return self.gain * out

    def __call__(self, y: np.ndarray) -> np.ndarray:
        return -0.5 * self.waveform(-0.5 * np.asarray(y, dtype=float))


class LatticeKernel:
    """F looked up on a precomputed half-step lattice (exact index hits).

    Built from a :class:`NonlinearSpectrum` for spectrum-driven solves
    (e.g. precompensated transmit); every argument the bordered solver
    ever requests lies on the lattice base + j * step with step = h/2.
    """

    def __init__(self, kernel: GlmeKernel, support_upper: float):
        self.grid = kernel
        self.support_upper = support_upper

    @classmethod
    def from_spectrum(
        cls, spec: NonlinearSpectrum, base: float, step: float, count: int, support_upper: float
    ) -> "LatticeKernel":
        return cls(kernel_on_lattice(spec, base, step, count), support_upper)

    def __call__(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        idx = np.rint((y - self.grid.y0) / self.grid.dy).astype(np.int64)
        if np.any(np.abs(self.grid.y0 + idx * self.grid.dy - y) > 1e-6 * self.grid.dy):
            raise SolverError("kernel lookup off the precomputed lattice")
        if np.any(idx < 0) or np.any(idx >= len(self.grid)):
            raise SolverError("insufficient kernel support for the requested times")
        return self.grid.F[idx]


class BorderedGlme:
    """Growing block-LU factorization over nested GLME domains.

    Node bookkeeping is integer: node j sits at t_anchor + (j + 1/2) h.
    ``mark()``/``rollback()`` give O(1) speculative extension (candidate
    trials); ``clone(n_nodes)`` snapshots a committed prefix for branch
    paths.
    """

    def __init__(self, kernel, h: float, sigma: int, t_anchor: float, y_up: float, cap_nodes: int):
        self.kernel = kernel
        self.h = float(h)
        self.sigma = float(sigma)
        self.t_anchor = float(t_anchor)
        # y_up snapped so node counts are exact integers
        j_up = int(round((y_up - 2 * t_anchor) / h))
        self.y_up = 2 * t_anchor + j_up * h
        self._j_up = j_up
        cap = 2 * cap_nodes
        self.L = np.zeros((cap, cap), dtype=np.complex128)
        self.U = np.zeros((cap, cap), dtype=np.complex128)
        self.node_j = np.zeros(cap_nodes, dtype=np.int64)
        self.n = 0  # committed node count
        self.j_lo = None
        self.j_hi = None

    # ---- geometry -------------------------------------------------------

    def x_index(self, x: float) -> int:
        m = int(round((x - self.t_anchor) / self.h))
        if abs(self.t_anchor + m * self.h - x) > 1e-6 * self.h:
            raise SolverError("output time off the solver lattice")
        return m

    def nodes_needed(self, x: float) -> int:
        """Domain node count for output x: (y_up - 2x) / h, floored at 0."""
        return max(0, self._j_up - 2 * self.x_index(x))

    def node_pos(self, j) -> np.ndarray:
        return self.t_anchor + (np.asarray(j) + 0.5) * self.h

    # ---- factorization growth -------------------------------------------

    def extend_for(self, x: float) -> None:
        """Append nodes so the domain of output x is covered.

        Nodes always grow along the canonical inside-out chain (domain
        [m, j_up-1-m] for decreasing m) so that every committed prefix
        count is the exact domain of some larger output time.
        """
        need = self.nodes_needed(x)
        if need <= self.n:
            return
        new = []
        lo, hi = self.j_lo, self.j_hi
        count = self.n
        if count == 0:
            if self._j_up % 2 == 1:
                lo = hi = (self._j_up - 1) // 2
                new.append(lo)
                count = 1
            else:
                lo = self._j_up // 2 - 1
                hi = lo + 1
                new.extend((lo, hi))
                count = 2
        while count < need:
            lo -= 1
            hi += 1
            new.extend((lo, hi))
            count += 2
        self._append(np.asarray(new, dtype=np.int64))
        self.j_lo, self.j_hi = lo, hi

    def mark(self):
        return (self.n, self.j_lo, self.j_hi)

    def rollback(self, state) -> None:
        self.n, self.j_lo, self.j_hi = state

    def _append(self, jnew: np.ndarray) -> None:
        d = jnew.size
        if d == 0:
            return
        n0 = self.n
        if 2 * (n0 + d) > self.L.shape[0]:
            raise SolverError("GLME solver capacity exceeded")
        self.node_j[n0 : n0 + d] = jnew
        znew = self.node_pos(jnew)
        zall = self.node_pos(self.node_j[: n0 + d])
        Fcols = self.kernel(np.add.outer(zall, znew))  # F(z_p + z_new_q)
        m = 2 * n0
        dd = 2 * d
        A12 = np.zeros((m, dd), dtype=np.complex128)
        A22 = np.zeros((dd, dd), dtype=np.complex128)
        top = Fcols[:n0]
        bot = Fcols[n0:]
        A12[0::2, 1::2] = self.sigma * self.h * np.conj(top)
        A12[1::2, 0::2] = -self.h * top
        A22[0::2, 1::2] = self.sigma * self.h * np.conj(bot)
        A22[1::2, 0::2] = -self.h * bot
        A22[0::2, 0::2] += np.eye(d)
        A22[1::2, 1::2] += np.eye(d)
        if m > 0:
            zold = zall[:n0]
            Frows = self.kernel(np.add.outer(znew, zold))
            A21 = np.zeros((dd, m), dtype=np.complex128)
            A21[0::2, 1::2] = self.sigma * self.h * np.conj(Frows)
            A21[1::2, 0::2] = -self.h * Frows
            U12 = solve_triangular(self.L[:m, :m], A12, lower=True, unit_diagonal=True)
            L21 = solve_triangular(self.U[:m, :m].T, A21.T, lower=True).T
            S = A22 - L21 @ U12
            self.U[:m, m : m + dd] = U12
            self.L[m : m + dd, :m] = L21
        else:
            S = A22
        self._factor_block(S, m)
        self.n = n0 + d

    def _factor_block(self, S: np.ndarray, offset: int) -> None:
        dd = S.shape[0]
        S = S.copy()
        for k in range(dd):
            piv = S[k, k]
            if abs(piv) < _PIVOT_TOL:
                raise SolverError("GLME system ill-conditioned")
            S[k + 1 :, k] /= piv
            S[k + 1 :, k + 1 :] -= np.outer(S[k + 1 :, k], S[k, k + 1 :])
        self.L[offset : offset + dd, offset : offset + dd] = np.tril(S, -1) + np.eye(dd)
        self.U[offset : offset + dd, offset : offset + dd] = np.triu(S)

    def clone(self, n_nodes: int, cap_nodes: int | None = None, kernel=None) -> "BorderedGlme":
        """Snapshot of the first n_nodes committed nodes (a nested domain)."""
        cap = cap_nodes if cap_nodes is not None else self.node_j.size
        out = BorderedGlme.__new__(BorderedGlme)
        out.kernel = kernel if kernel is not None else self.kernel
        out.h = self.h
        out.sigma = self.sigma
        out.t_anchor = self.t_anchor
        out.y_up = self.y_up
        out._j_up = self._j_up
        out.L = np.zeros((2 * cap, 2 * cap), dtype=np.complex128)
        out.U = np.zeros((2 * cap, 2 * cap), dtype=np.complex128)
        out.node_j = np.zeros(cap, dtype=np.int64)
        m = 2 * n_nodes
        out.L[:m, :m] = self.L[:m, :m]
        out.U[:m, :m] = self.U[:m, :m]
        out.node_j[:n_nodes] = self.node_j[:n_nodes]
        out.n = n_nodes
        if n_nodes > 0:
            js = out.node_j[:n_nodes]
            out.j_lo = int(js.min())
            out.j_hi = int(js.max())
        else:
            out.j_lo = out.j_hi = None
        return out

    # ---- evaluation ------------------------------------------------------

    def diag_value(self, x: float) -> complex:
        """K(x, x) using the leading domain for x (extend first)."""
        need = self.nodes_needed(x)
        f2x = self.kernel(np.array([2.0 * x]))[0]
        if need == 0:
            return self.sigma * np.conj(f2x)
        if need > self.n:
            raise SolverError("domain not extended for this output time")
        m = 2 * need
        z = self.node_pos(self.node_j[:need])
        fxz = self.kernel(x + z)
        rhs = np.zeros(m, dtype=np.complex128)
        rhs[0::2] = self.sigma * np.conj(fxz)
        y = solve_triangular(self.L[:m, :m], rhs, lower=True, unit_diagonal=True)
        sol = solve_triangular(self.U[:m, :m], y, lower=False)
        P = sol[1::2]
        return self.sigma * np.conj(f2x) - self.sigma * self.h * np.sum(P * np.conj(fxz))

    def residual_at(self, x: float) -> float:
        """Relative residual of the assembled system at output x."""
        need = self.nodes_needed(x)
        if need == 0:
            return 0.0
        m = 2 * need
        z = self.node_pos(self.node_j[:need])
        fxz = self.kernel(x + z)
        rhs = np.zeros(m, dtype=np.complex128)
        rhs[0::2] = self.sigma * np.conj(fxz)
        y = solve_triangular(self.L[:m, :m], rhs, lower=True, unit_diagonal=True)
        sol = solve_triangular(self.U[:m, :m], y, lower=False)
        u, P = sol[0::2], sol[1::2]
        Fm = self.kernel(np.add.outer(z, z))
        eq1 = u + self.sigma * self.h * (np.conj(Fm) @ P) - rhs[0::2]
        eq2 = P - self.h * (Fm @ u)
        scale = np.linalg.norm(rhs)
        if scale == 0.0:
            return float(np.sqrt(np.linalg.norm(eq1) ** 2 + np.linalg.norm(eq2) ** 2))
        return float(np.sqrt(np.linalg.norm(eq1) ** 2 + np.linalg.norm(eq2) ** 2) / scale)

    def profile(self, x_values: np.ndarray) -> np.ndarray:
        """r(x) = -2 K(x, x) for outputs sorted descending internally."""
        x_values = np.asarray(x_values, dtype=float)
        order = np.argsort(x_values)[::-1]
        out = np.zeros(x_values.size, dtype=np.complex128)
        for i in order:
            self.extend_for(x_values[i])
            out[i] = -2.0 * self.diag_value(x_values[i])
        return out
