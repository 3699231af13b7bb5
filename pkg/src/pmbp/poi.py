"""Evaluation of the expected intensity and compensator at arbitrary times.

The grid tables give h and H at uniform points; likelihoods and samplers need
xi and Xi at event timestamps and censor boundaries that fall between grid
points.  The quadrature mirrors the grid convolution over the locally
augmented partition (grid points below t plus t itself):

    (h * s)(t)  = sum_i h(t_i) [ S(u_i) -  S(u_{i+1})],   u_i = (t - t_i)+,
    (h * S)(t)  = sum_i h(t_i) [IS(u_i) - IS(u_{i+1})],

with S(u) = nu u + A(u) and IS(u) = nu u^2/2 + IA(u) evaluated exactly via
the decay accumulators, so the partial cell at t needs no special casing.
When the impulse weight gamma is active, h and H themselves are evaluated
off-grid through the renewal identities h = phi_E + phi_E * h and
H = Phi_E + Phi_E * h with the exact kernel antiderivatives.

The same shifted-argument difference arrays drive the exact derivatives of
these discretized expressions with respect to every free parameter, which
keeps analytic gradients consistent with finite differences of the computed
objective (not just of its continuum limit).
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .decay import build_source_decays
from .errors import DomainError, ParameterError
from .params import ModelParams, validate_events_for
from .paramvec import n_free

_CELL_BUDGET = 400_000  # max chunk_size * (P+1) entries per temp array


@dataclasses.dataclass
class PoiValues:
    """xi/Xi rows at the query times, with optional gradient tensors
    (m, n_free, d) in the canonical parameter layout."""

    t: np.ndarray
    xi: np.ndarray
    Xi: np.ndarray
    dxi: np.ndarray | None = None
    dXi: np.ndarray | None = None


class PoiEvaluator:
    """Evaluates xi(t), Xi(t) and optional parameter derivatives, given the
    observed E^c events and precomputed grid tables.

    events : per-dimension arrays (censored-dimension entries are ignored);
    tables : HTables from compute_h, required when e > 0.  For derivatives of
    a model with a censored block, pass grad_tables (the dh/dH stacks for the
    censored-column kernel parameters).
    """

    def __init__(self, params: ModelParams, events, tables=None):
        self.params = params
        self.events = validate_events_for(params, events)
        if params.e > 0 and tables is None:
            raise ParameterError("grid tables are required when e > 0")
        self.tables = tables
        self.decays = build_source_decays(
            self.events, params.theta, sources=range(params.e, params.d)
        )
        self.use_conv = params.e > 0
        self.has_gamma = bool(np.any(params.gamma))

    # -- direct (unconvolved) event sums -----------------------------------

    def _direct(self, t: np.ndarray, weighted: bool):
        p = self.params
        m, d = t.size, p.d
        a = np.zeros((m, d))
        A = np.zeros((m, d))
        raw = {}
        for src, sd in self.decays.items():
            al = p.alpha[:, src][None, :]
            th = p.theta[:, src][None, :]
            if weighted:
                cnt, esum, wsum, tsum = sd.query(t, weighted=True)
            else:
                cnt, esum, tsum = sd.query(t)
                wsum = None
            a += al * th * esum
            A += al * (cnt[:, None] - esum)
            raw[src] = (cnt.astype(float), esum, wsum, tsum)
        return a, A, raw

    # -- public evaluation --------------------------------------------------

    def values(
        self,
        times,
        need_grads: bool = False,
        grad_tables=None,
        include_gamma: bool = False,
    ) -> PoiValues:
        t = np.atleast_1d(np.asarray(times, dtype=float))
        if np.any(~np.isfinite(t)) or np.any(t < 0):
            raise DomainError("query times must be finite and >= 0")
        if self.use_conv and np.any(t > self.tables.grid.T * (1 + 1e-12) + 1e-12):
            raise DomainError("query times must lie within the grid span")
        if need_grads and self.use_conv and grad_tables is None:
            raise ParameterError(
                "derivatives with a censored block require grad_tables"
            )
        p = self.params
        m, d = t.size, p.d
        K = n_free(d, include_gamma)
        out = PoiValues(
            t=t,
            xi=np.zeros((m, d)),
            Xi=np.zeros((m, d)),
            dxi=np.zeros((m, K, d)) if need_grads else None,
            dXi=np.zeros((m, K, d)) if need_grads else None,
        )
        if not self.use_conv:
            self._fill_direct_only(out, need_grads, include_gamma)
            return out
        P1 = self.tables.grid.n + 1
        chunk = max(8, _CELL_BUDGET // P1)
        for lo in range(0, m, chunk):
            self._fill_chunk(
                out, slice(lo, min(m, lo + chunk)), need_grads, grad_tables,
                include_gamma,
            )
        return out

    # -- e = 0 fast path ----------------------------------------------------

    def _fill_direct_only(self, out, need_grads, include_gamma):
        p = self.params
        t = out.t
        d = p.d
        a, A, raw = self._direct(t, weighted=need_grads)
        out.xi[:] = p.nu[None, :] + a
        out.Xi[:] = p.gamma[None, :] * (t > 0)[:, None] + p.nu[None, :] * t[:, None] + A
        if not need_grads:
            return
        for src, (cnt, esum, wsum, tsum) in raw.items():
            for i in range(d):
                al, th = p.alpha[i, src], p.theta[i, src]
                ka = i * d + src
                kt = d * d + i * d + src
                out.dxi[:, ka, i] = th * esum[:, i]
                out.dxi[:, kt, i] = al * (esum[:, i] - th * wsum[:, i])
                out.dXi[:, ka, i] = cnt - esum[:, i]
                out.dXi[:, kt, i] = al * wsum[:, i]
        for i in range(d):
            kn = 2 * d * d + i
            out.dxi[:, kn, i] = 1.0
            out.dXi[:, kn, i] = t
        if include_gamma:
            for i in range(d):
                out.dXi[:, 2 * d * d + d + i, i] = (t > 0).astype(float)

    # -- e > 0 convolution path ---------------------------------------------

    def _fill_chunk(self, out, sl, need_grads, grad_tables, include_gamma):
        p = self.params
        d, e = p.d, p.e
        t = out.t[sl]
        m = t.size
        tab = self.tables
        dt = tab.grid.dt
        # cells past max(t) have empty shifted arguments; truncate the grid
        q = min(tab.grid.n, max(1, int(np.ceil(float(t.max()) / dt - 1e-9))))
        tg = tab.grid.points[: q + 1]
        h = tab.h[: q + 1]
        # h reindexed to [(cell, col), row] so quadratures become matmuls
        hT = np.ascontiguousarray(h[:q].transpose(0, 2, 1)).reshape(q * d, d)

        a, A, raw = self._direct(t, weighted=need_grads)

        # shifted arguments u_i = (t - t_i)+ over the live grid points
        U = np.clip(t[:, None] - tg[None, :], 0.0, None)  # (m, q+1)
        live = U > 0

        # S(u) = nu u + A(u), IS(u) = nu u^2/2 + IA(u) at the shifted args
        SU = p.nu[None, None, :] * U[:, :, None]
        ISU = 0.5 * p.nu[None, None, :] * (U * U)[:, :, None]
        rawU = {}
        for src, sd in self.decays.items():
            al = p.alpha[:, src][None, None, :]
            th = p.theta[:, src][None, None, :]
            if need_grads:
                cntU, esumU, wsumU, tsumU = sd.query(U.ravel(), weighted=True)
                wsumU = wsumU.reshape(m, -1, d)
            else:
                cntU, esumU, tsumU = sd.query(U.ravel())
                wsumU = None
            cntU = cntU.reshape(m, -1).astype(float)
            esumU = esumU.reshape(m, -1, d)
            tsumU = tsumU.reshape(m, -1)
            SU += al * (cntU[:, :, None] - esumU)
            ISU += al * (tsumU[:, :, None] - (cntU[:, :, None] - esumU) / th)
            rawU[src] = (cntU, esumU, wsumU, tsumU)

        WS = (SU[:, :-1, :] - SU[:, 1:, :]).reshape(m, q * d)
        WIS = (ISU[:, :-1, :] - ISU[:, 1:, :]).reshape(m, q * d)

        xi = p.nu[None, :] + a + WS @ hT
        Xi = (
            p.gamma[None, :] * (t > 0)[:, None]
            + p.nu[None, :] * t[:, None]
            + A
            + WIS @ hT
        )

        # off-grid h/H via the renewal identities (impulse-response terms)
        want_impulse = self.has_gamma or (need_grads and include_gamma)
        WPhiT = WIPhiT = h_at = H_at = None
        if want_impulse:
            WPhi, WIPhi, phiEt, PhiEt = self._kernel_diffs(t, U, live)
            WPhiT = np.ascontiguousarray(
                WPhi.transpose(0, 2, 1, 3)
            ).reshape(m * d, q * e)
            WIPhiT = np.ascontiguousarray(
                WIPhi.transpose(0, 2, 1, 3)
            ).reshape(m * d, q * e)
            hE = np.ascontiguousarray(h[:q, :e, :e]).reshape(q * e, e)
            h_at = phiEt + (WPhiT @ hE).reshape(m, d, e)
            H_at = PhiEt + (WIPhiT @ hE).reshape(m, d, e)
            if self.has_gamma:
                xi = xi + h_at @ p.gamma[:e]
                Xi = Xi + H_at @ p.gamma[:e]
        out.xi[sl] = xi
        out.Xi[sl] = Xi
        if not need_grads:
            return

        dxi = out.dxi[sl]
        dXi = out.dXi[sl]

        # nu block: the S component k gains u, IS gains u^2/2
        h_flat = h[:q].reshape(q, d * d)
        Qu = ((U[:, :-1] - U[:, 1:]) @ h_flat).reshape(m, d, d)
        QIu = (0.5 * (U[:, :-1] ** 2 - U[:, 1:] ** 2) @ h_flat).reshape(m, d, d)
        for k in range(d):
            kn = 2 * d * d + k
            dxi[:, kn, :] = Qu[:, :, k]
            dxi[:, kn, k] += 1.0
            dXi[:, kn, :] = QIu[:, :, k]
            dXi[:, kn, k] += t

        # observed-column kernel parameters: direct sums plus the S side of
        # the quadrature (only component a_i of S depends on them)
        for src, (cntU, esumU, wsumU, tsumU) in rawU.items():
            cnt_t, esum_t, wsum_t, tsum_t = raw[src]
            for a_i in range(d):
                al, th = p.alpha[a_i, src], p.theta[a_i, src]
                ka = a_i * d + src
                kt = d * d + a_i * d + src
                h_col = h[:q, :, a_i]
                dA_a = cntU - esumU[:, :, a_i]
                dIA_a = tsumU - dA_a / th
                dxi[:, ka, :] += (dA_a[:, :-1] - dA_a[:, 1:]) @ h_col
                dXi[:, ka, :] += (dIA_a[:, :-1] - dIA_a[:, 1:]) @ h_col
                dxi[:, ka, a_i] += th * esum_t[:, a_i]
                dXi[:, ka, a_i] += cnt_t - esum_t[:, a_i]
                dA_t = al * wsumU[:, :, a_i]
                dIA_t = al * (cntU - esumU[:, :, a_i] - th * wsumU[:, :, a_i]) / th**2
                dxi[:, kt, :] += (dA_t[:, :-1] - dA_t[:, 1:]) @ h_col
                dXi[:, kt, :] += (dIA_t[:, :-1] - dIA_t[:, 1:]) @ h_col
                dxi[:, kt, a_i] += al * (esum_t[:, a_i] - th * wsum_t[:, a_i])
                dXi[:, kt, a_i] += al * wsum_t[:, a_i]

        # censored-column kernel parameters: flow through dh (and dH when the
        # impulse terms are active)
        if grad_tables is not None:
            for kk, (kind, a_i, b) in enumerate(grad_tables.keys):
                kidx = (d * d if kind == "theta" else 0) + a_i * d + b
                dh_k = grad_tables.dh[kk][: q + 1]
                dhT = np.ascontiguousarray(
                    dh_k[:q].transpose(0, 2, 1)
                ).reshape(q * d, d)
                dxi[:, kidx, :] += WS @ dhT
                dXi[:, kidx, :] += WIS @ dhT
                if self.has_gamma:
                    sphi, sPhi, WdPhi, WdIPhi = _seed_terms(p, kind, a_i, b, t, U, live)
                    dhE = np.ascontiguousarray(dh_k[:q, :e, :e]).reshape(q * e, e)
                    dh_at = (WPhiT @ dhE).reshape(m, d, e)
                    dH_at = (WIPhiT @ dhE).reshape(m, d, e)
                    dh_at[:, a_i, :] += WdPhi @ h[:q, b, :e]
                    dH_at[:, a_i, :] += WdIPhi @ h[:q, b, :e]
                    dxi[:, kidx, a_i] += sphi * p.gamma[b]
                    dXi[:, kidx, a_i] += sPhi * p.gamma[b]
                    dxi[:, kidx, :] += dh_at @ p.gamma[:e]
                    dXi[:, kidx, :] += dH_at @ p.gamma[:e]

        # gamma block
        if include_gamma:
            for k in range(d):
                kg = 2 * d * d + d + k
                dXi[:, kg, k] += (t > 0).astype(float)
                if k < e:
                    dxi[:, kg, :] += h_at[:, :, k]
                    dXi[:, kg, :] += H_at[:, :, k]

    def _kernel_diffs(self, t, U, live):
        """Cell differences of Phi_E and int Phi_E at the shifted arguments,
        plus phi_E(t), Phi_E(t) themselves (censored columns only)."""
        p = self.params
        e = p.e
        th = p.theta[None, None, :, :e]
        al = p.alpha[None, None, :, :e]
        decay = np.exp(-th * U[:, :, None, None])
        alive = live[:, :, None, None]
        PhiU = al * np.where(alive, 1.0 - decay, 0.0)
        IPhiU = al * np.where(alive, U[:, :, None, None] - (1.0 - decay) / th, 0.0)
        WPhi = PhiU[:, :-1] - PhiU[:, 1:]
        WIPhi = IPhiU[:, :-1] - IPhiU[:, 1:]
        u = t[:, None, None]
        th_t = p.theta[None, :, :e]
        al_t = p.alpha[None, :, :e]
        dec_t = np.exp(-th_t * np.maximum(u, 0.0))
        phiEt = al_t * th_t * dec_t
        PhiEt = al_t * (1.0 - dec_t)
        return WPhi, WIPhi, phiEt, PhiEt


def _seed_terms(p: ModelParams, kind: str, a_i: int, b: int, t, U, live):
    """Scalar seed pieces for one censored-column kernel parameter: the
    point values d phi(t), d Phi(t) at entry (a_i, b) and the cell-difference
    arrays of d Phi and d int-Phi at the shifted arguments."""
    al, th = p.alpha[a_i, b], p.theta[a_i, b]
    u_pos = np.maximum(t, 0.0)
    dec_t = np.exp(-th * u_pos)
    dec_U = np.exp(-th * U)
    if kind == "alpha":
        sphi = th * dec_t
        sPhi = 1.0 - dec_t
        dPhi_U = np.where(live, 1.0 - dec_U, 0.0)
        dIPhi_U = np.where(live, U - (1.0 - dec_U) / th, 0.0)
    else:
        sphi = al * dec_t * (1.0 - th * u_pos)
        sPhi = al * u_pos * dec_t
        dPhi_U = np.where(live, al * U * dec_U, 0.0)
        dIPhi_U = np.where(
            live, al * (1.0 - dec_U - th * U * dec_U) / th**2, 0.0
        )
    return (
        sphi,
        sPhi,
        dPhi_U[:, :-1] - dPhi_U[:, 1:],
        dIPhi_U[:, :-1] - dIPhi_U[:, 1:],
    )
