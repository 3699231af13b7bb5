"""Negative log-likelihood of partially interval-censored observations.

Censored dimensions contribute Poisson window terms on the compensator
increments, sum_k [DXi_k - C_k log DXi_k] (the count factorial is a constant
and is dropped); observed dimensions contribute point-process terms
-sum log xi(t_k) + Xi(T).  Dimension weights and an L1 penalty on the
baseline rates are configurable.  Gradients differentiate exactly the
computed objective, reusing the evaluator's shifted-argument machinery and
the response-table derivative stacks.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .engine import HTables, compute_h, default_grid
from .errors import (
    DimensionError,
    NumericalConsistencyError,
    ParameterError,
)
from .gradients import GradTables, grad_h
from .params import Dataset, ModelParams
from .paramvec import n_free
from .poi import PoiEvaluator

_INCREMENT_SLACK = -1e-9  # tolerated negative compensator increment


@dataclasses.dataclass(frozen=True)
class LikelihoodConfig:
    """Objective weights: one multiplier per dimension (default 1), an L1
    penalty weight on the baseline rates, and the floor used inside logs."""

    weights: np.ndarray | None = None
    w_nu: float = 0.0
    eps: float = 1e-10

    def dim_weights(self, d: int) -> np.ndarray:
        if self.weights is None:
            return np.ones(d)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if w.shape != (d,):
            raise DimensionError(f"weights must have shape ({d},), got {w.shape}")
        if np.any(~np.isfinite(w)) or np.any(w < 0):
            raise ParameterError("weights must be finite and >= 0")
        return w


def icll(Xi_bounds: np.ndarray, counts: np.ndarray, eps: float = 1e-10) -> float:
    """Poisson window negative log-likelihood from compensator values at the
    observation boundaries (constant count factorials dropped).

    Raises NumericalConsistencyError if an increment is below -1e-9; smaller
    negatives are clipped to zero before the eps floor inside the log.
    """
    Xi_bounds = np.asarray(Xi_bounds, dtype=float)
    counts = np.asarray(counts, dtype=float)
    if Xi_bounds.size != counts.size + 1:
        raise DimensionError(
            f"need {counts.size + 1} boundary values for {counts.size} windows"
        )
    inc = np.diff(Xi_bounds)
    if inc.size and inc.min() < _INCREMENT_SLACK:
        k = int(np.argmin(inc))
        raise NumericalConsistencyError(
            f"compensator increment {inc[k]:.3g} < {_INCREMENT_SLACK} on "
            f"window {k}; refine the evaluation grid"
        )
    inc = np.clip(inc, 0.0, None)
    return float(np.sum(inc - counts * np.log(np.maximum(inc, eps))))


def ppll_nll(xi_events: np.ndarray, Xi_T: float, eps: float = 1e-10) -> float:
    """Point-process negative log-likelihood -sum log xi(t_k) + Xi(T)."""
    xi_events = np.asarray(xi_events, dtype=float)
    return float(Xi_T - np.sum(np.log(np.maximum(xi_events, eps))))


def _as_datasets(data) -> list:
    if isinstance(data, Dataset):
        return [data]
    datasets = list(data)
    if not datasets:
        raise ParameterError("need at least one dataset")
    for ds in datasets:
        if not isinstance(ds, Dataset):
            raise ParameterError("expected Dataset instances")
    return datasets


def _check_compat(params: ModelParams, datasets) -> None:
    for ds in datasets:
        if ds.d != params.d or ds.e != params.e:
            raise DimensionError(
                f"dataset with (d={ds.d}, e={ds.e}) does not match the model "
                f"(d={params.d}, e={params.e})"
            )


def _shared_tables(params: ModelParams, datasets, grid, tables):
    if params.e == 0:
        return None
    if tables is not None:
        return tables
    if grid is None:
        grid = default_grid(params, max(ds.T for ds in datasets))
    return compute_h(params, grid)


def _accumulate(
    params: ModelParams,
    datasets,
    tables: HTables | None,
    grad_tables: GradTables | None,
    config: LikelihoodConfig,
    need_grad: bool,
    include_gamma: bool,
):
    d, e = params.d, params.e
    eps = config.eps
    w = config.dim_weights(d)
    total = config.w_nu * float(np.sum(np.abs(params.nu)))
    grad = np.zeros(n_free(d, include_gamma)) if need_grad else None
    if need_grad and config.w_nu:
        grad[2 * d * d : 2 * d * d + d] += config.w_nu
    for ds in datasets:
        pieces = [np.array([ds.T])]
        for series in ds.censored:
            pieces.append(series.boundaries)
        for ts in ds.events:
            pieces.append(np.asarray(ts, dtype=float))
        times = np.unique(np.concatenate(pieces))
        ev = PoiEvaluator(params, ds.event_list(), tables)
        out = ev.values(
            times,
            need_grads=need_grad,
            grad_tables=grad_tables,
            include_gamma=include_gamma,
        )
        for j, series in enumerate(ds.censored):
            pos = np.searchsorted(times, series.boundaries)
            inc = np.diff(out.Xi[pos, j])
            if inc.size and inc.min() < _INCREMENT_SLACK:
                k = int(np.argmin(inc))
                raise NumericalConsistencyError(
                    f"dimension {j + 1}: compensator increment {inc[k]:.3g} < "
                    f"{_INCREMENT_SLACK} on window {k}; refine the grid"
                )
            clipped = inc < 0
            inc = np.clip(inc, 0.0, None)
            total += w[j] * float(
                np.sum(inc - series.counts * np.log(np.maximum(inc, eps)))
            )
            if need_grad:
                wk = np.where(
                    inc > eps, 1.0 - series.counts / np.maximum(inc, eps), 1.0
                )
                wk[clipped] = 0.0
                dinc = np.diff(out.dXi[pos, :, j], axis=0)
                grad += w[j] * (wk[:, None] * dinc).sum(axis=0)
        for jj, ts in enumerate(ds.events):
            j = e + jj
            pos_T = np.searchsorted(times, ds.T)
            if ts.size:
                pos = np.searchsorted(times, np.asarray(ts, dtype=float))
                xi_ev = out.xi[pos, j]
                total += w[j] * ppll_nll(xi_ev, float(out.Xi[pos_T, j]), eps)
                if need_grad:
                    safe = xi_ev > eps
                    coef = np.where(safe, -1.0 / np.maximum(xi_ev, eps), 0.0)
                    grad += w[j] * (
                        (coef[:, None] * out.dxi[pos, :, j]).sum(axis=0)
                        + out.dXi[pos_T, :, j]
                    )
            else:
                total += w[j] * float(out.Xi[pos_T, j])
                if need_grad:
                    grad += w[j] * out.dXi[pos_T, :, j]
    return total, grad


def total_nll(
    params: ModelParams,
    dataset: Dataset,
    grid=None,
    tables: HTables | None = None,
    config: LikelihoodConfig | None = None,
) -> float:
    """Weighted negative log-likelihood of one dataset."""
    return joint_nll(params, [dataset], grid=grid, tables=tables, config=config)


def joint_nll(
    params: ModelParams,
    datasets,
    grid=None,
    tables: HTables | None = None,
    config: LikelihoodConfig | None = None,
) -> float:
    """Weighted negative log-likelihood summed over datasets, sharing one set
    of response tables (the L1 baseline penalty is applied once)."""
    datasets = _as_datasets(datasets)
    _check_compat(params, datasets)
    config = config or LikelihoodConfig()
    tables = _shared_tables(params, datasets, grid, tables)
    value, _ = _accumulate(params, datasets, tables, None, config, False, False)
    return value


def nll_and_grad(
    params: ModelParams,
    data,
    grid=None,
    tables: HTables | None = None,
    grad_tables: GradTables | None = None,
    config: LikelihoodConfig | None = None,
    include_gamma: bool = False,
):
    """Objective value and its gradient in the canonical parameter layout.

    `data` is a Dataset or a sequence of them.  Tables and their derivative
    stacks are computed once if not supplied.
    """
    datasets = _as_datasets(data)
    _check_compat(params, datasets)
    config = config or LikelihoodConfig()
    tables = _shared_tables(params, datasets, grid, tables)
    if params.e > 0 and grad_tables is None:
        grad_tables = grad_h(params, tables)
    return _accumulate(
        params, datasets, tables, grad_tables, config, True, include_gamma
    )


def grad_nll(params: ModelParams, data, **kwargs) -> np.ndarray:
    """Gradient of the weighted negative log-likelihood."""
    return nll_and_grad(params, data, **kwargs)[1]
