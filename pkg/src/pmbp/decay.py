"""Stable prefix accumulators for exponentially decayed event sums.

Every intensity/compensator evaluation in this package reduces to sums of the
form sum_{t_k < u} f(u - t_k) over the events of one source dimension, with f
an exponential, a linearly weighted exponential, or a polynomial.  Computing
these naively per query costs O(n) per point; the classic prefix trick with
exp(+r t_k) overflows for r*t beyond ~700.  The recursions below reference
each prefix to its own last event, so every stored term lies in [0, n] and
queries cost O(log n).
"""

from __future__ import annotations

import numpy as np


class SourceDecay:
    """Decayed prefix sums over one source dimension's sorted event times.

    Parameters
    ----------
    times : (n,) array
        Strictly increasing event times of the source dimension.
    rates : (d,) array
        One positive decay rate per target dimension.

    For each query time u and rate r the accessors return
        count(u)  = #{k : t_k < u}
        esum(u)   = sum_{t_k < u} exp(-r (u - t_k))
        wsum(u)   = sum_{t_k < u} (u - t_k) exp(-r (u - t_k))
        tsum(u)   = sum_{t_k < u} (u - t_k)
    Events exactly at u are excluded, so an event never contributes to the
    intensity at its own timestamp.
    """

    def __init__(self, times: np.ndarray, rates: np.ndarray):
        times = np.asarray(times, dtype=float)
        rates = np.asarray(rates, dtype=float)
        if times.ndim != 1 or rates.ndim != 1:
            raise ValueError("times and rates must be one-dimensional")
        self.times = times
        self.rates = rates
        n, d = times.size, rates.size
        # B[i, k] = sum_{m <= k} exp(-r_i (t_k - t_m));  C is its (t_k - t_m)-
        # weighted counterpart.  Both stay bounded by n and n*max(dt) resp.
        self._B = np.empty((d, n))
        self._C = np.empty((d, n))
        if n:
            self._B[:, 0] = 1.0
            self._C[:, 0] = 0.0
            dts = np.diff(times)
            for k in range(1, n):
                q = np.exp(-rates * dts[k - 1])
                self._B[:, k] = 1.0 + q * self._B[:, k - 1]
                self._C[:, k] = q * (self._C[:, k - 1] + dts[k - 1] * self._B[:, k - 1])
            self._pref_t = np.cumsum(times)
        else:
            self._pref_t = np.zeros(0)

    def query(self, u: np.ndarray, weighted: bool = False):
        """Return (count, esum[, wsum], tsum) at query times u (any order).

        count : (m,) int, esum/wsum : (m, d), tsum : (m,).
        """
        u = np.atleast_1d(np.asarray(u, dtype=float))
        m, d = u.size, self.rates.size
        count = np.searchsorted(self.times, u, side="left")
        esum = np.zeros((m, d))
        wsum = np.zeros((m, d)) if weighted else None
        tsum = np.zeros(m)
        mask = count > 0
        if np.any(mask):
            idx = count[mask] - 1
            gap = u[mask] - self.times[idx]
            fade = np.exp(-gap[:, None] * self.rates[None, :])
            B = self._B[:, idx].T
            esum[mask] = fade * B
            if weighted:
                wsum[mask] = fade * (self._C[:, idx].T + gap[:, None] * B)
            tsum[mask] = count[mask] * u[mask] - self._pref_t[idx]
        if weighted:
            return count, esum, wsum, tsum
        return count, esum, tsum


def build_source_decays(events, theta: np.ndarray, sources=None):
    """One SourceDecay per source dimension j, with rates theta[:, j].

    events : sequence of per-dimension time arrays; sources : iterable of
    source indices to build (default: all with at least one event).
    """
    d = theta.shape[0]
    if sources is None:
        sources = range(len(events))
    out = {}
    for j in sources:
        ts = np.asarray(events[j], dtype=float)
        if ts.size:
            out[j] = SourceDecay(ts, theta[:, j])
    return out
