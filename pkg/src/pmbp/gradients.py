"""Derivatives of the grid response tables with respect to kernel parameters.

The response series h = sum_n phi_E^(n) depends on the kernel entries whose
column lies in the censored block; its derivative follows the same truncated
recursion as the tables themselves (product rule through each convolution),
stopping after exactly the number of terms the base tables kept.  That makes
the analytic gradient the exact derivative of the computed tables, so finite
differences of any downstream objective match it to discretization-free
accuracy.

Keys are (kind, row, col) with kind "alpha" or "theta" and col < e; the
remaining parameters (observed-column kernels, nu, gamma) act on the
objective directly and are differentiated where they enter.
"""

from __future__ import annotations

import dataclasses

import numpy as np
import scipy.fft

from . import engine
from .engine import HTables, _grid_diffs, _masked_kernel_samples
from .params import ModelParams


@dataclasses.dataclass(frozen=True)
class GradTables:
    """dh/dH stacks (K, P+1, d, d) aligned with `keys`, sharing the grid of
    the base tables."""

    grid: engine.ConvGrid
    keys: tuple
    dh: np.ndarray
    dH: np.ndarray


def kernel_keys(d: int, e: int):
    """Censored-column kernel parameter keys, alpha block then theta block."""
    out = [("alpha", a, b) for a in range(d) for b in range(e)]
    out += [("theta", a, b) for a in range(d) for b in range(e)]
    return tuple(out)


def _seed_samples(params: ModelParams, kind: str, a: int, b: int, t: np.ndarray):
    """Grid samples of d phi, d Phi, d int-Phi for one kernel entry."""
    al, th = params.alpha[a, b], params.theta[a, b]
    dec = np.exp(-th * t)
    if kind == "alpha":
        dphi = th * dec
        dPhi = 1.0 - dec
        dIPhi = t - (1.0 - dec) / th
    else:
        dphi = al * dec * (1.0 - th * t)
        dPhi = al * t * dec
        dIPhi = al * (1.0 - dec - th * t * dec) / th**2
    return dphi, dPhi, dIPhi


def grad_h(params: ModelParams, tables: HTables) -> GradTables:
    """Differentiate the response tables entry by entry.

    Replays the series recursion with the product rule: with T_1 = phi_E and
    T_{n+1} = D_Phi * T_n,

        dT_{n+1} = dD_Phi * T_n + D_Phi * dT_n,

    where dD_Phi has a single nonzero entry, so its convolution reduces to a
    scalar sequence against one row of T_n.  The loop runs to the k_star of
    the base tables.  dH adds the direct Phi_E term, the dD_IPhi piece, and
    D_IPhi * dh.
    """
    d, e = params.d, params.e
    keys = kernel_keys(d, e)
    K = len(keys)
    t = tables.grid.points
    P1 = t.size
    if K == 0:
        empty = np.zeros((0, P1, d, d))
        return GradTables(grid=tables.grid, keys=keys, dh=empty, dH=empty.copy())

    phi, Phi, IPhi = _masked_kernel_samples(params, t)
    D_Phi = _grid_diffs(Phi)
    D_IPhi = _grid_diffs(IPhi)

    seeds_phi = np.zeros((K, P1))
    seeds_DPhi = np.zeros((K, P1))
    seeds_DIPhi = np.zeros((K, P1))
    a_idx = np.array([a for _, a, _ in keys])
    b_idx = np.array([b for _, _, b in keys])
    for k, (kind, a, b) in enumerate(keys):
        dphi, dPhi, dIPhi = _seed_samples(params, kind, a, b, t)
        seeds_phi[k] = dphi
        seeds_DPhi[k] = _grid_diffs(dPhi[:, None])[:, 0]
        seeds_DIPhi[k] = _grid_diffs(dIPhi[:, None])[:, 0]

    nfft = scipy.fft.next_fast_len(2 * P1 - 1, real=True)
    workers = engine._FFT_WORKERS
    FD = scipy.fft.rfft(D_Phi, nfft, axis=0, workers=workers)
    FS = scipy.fft.rfft(seeds_DPhi, nfft, axis=1, workers=workers)

    def stack_conv(G):
        """D_Phi * G for a stack G (K, P+1, d, d)."""
        FG = scipy.fft.rfft(G, nfft, axis=1, workers=workers)
        spec = np.einsum("fij,kfjl->kfil", FD, FG)
        return scipy.fft.irfft(spec, nfft, axis=1, workers=workers)[:, :P1]

    def seed_conv(Fseeds, rows):
        """Per-key scalar conv of Fseeds (K, f) with rows[b_k] of a stacked
        row table rows (e, P+1, d); returns (K, P+1, d)."""
        Frows = scipy.fft.rfft(rows, nfft, axis=1, workers=workers)
        spec = Fseeds[:, :, None] * Frows[b_idx]
        return scipy.fft.irfft(spec, nfft, axis=1, workers=workers)[:, :P1]

    dterm = np.zeros((K, P1, d, d))
    dterm[np.arange(K), :, a_idx, b_idx] = seeds_phi
    dh = dterm.copy()
    term = phi.copy()
    kk = np.arange(K)
    for _ in range(tables.k_star - 1):
        rows = np.ascontiguousarray(term[:, :e, :].transpose(1, 0, 2))
        new = stack_conv(dterm)
        new[kk, :, a_idx, :] += seed_conv(FS, rows)
        dterm = new
        dh += dterm
        term = engine._fft_conv(D_Phi, term)

    FSI = scipy.fft.rfft(seeds_DIPhi, nfft, axis=1, workers=workers)
    FDI = scipy.fft.rfft(D_IPhi, nfft, axis=0, workers=workers)
    FG = scipy.fft.rfft(dh, nfft, axis=1, workers=workers)
    spec = np.einsum("fij,kfjl->kfil", FDI, FG)
    dH = scipy.fft.irfft(spec, nfft, axis=1, workers=workers)[:, :P1]
    h_rows = np.ascontiguousarray(tables.h[:, :e, :].transpose(1, 0, 2))
    dH[kk, :, a_idx, :] += seed_conv(FSI, h_rows)
    for k, (kind, a, b) in enumerate(keys):
        _, dPhi, _ = _seed_samples(params, kind, a, b, t)
        dH[k, :, a, b] += dPhi
    return GradTables(grid=tables.grid, keys=keys, dh=dh, dH=dH)


def fd_gradient(f, x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of a scalar function of a vector."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        hi = x.copy()
        lo = x.copy()
        hi[i] += step
        lo[i] -= step
        g[i] = (f(hi) - f(lo)) / (2 * step)
    return g
