"""Functional evaluation of simulated counting processes.

The unified loss ``rho(z) = (eta*z**p + (1-eta)*|z|**p) * |tau - 1(z<0)|``
turns pointwise sample statistics (mean, median, tau-quantile) and
evaluation integrals into special cases of one formula.  Estimates and
observations are compared on a minute grid over the forecast horizon
``[T1, T2)``: criteria integrate the pointwise loss with left-endpoint
weights ``dt = 1/60`` hour and apply an outer ``1/p`` root per day, then
average across days.  The pinball criterion averaged over an equidistant
probability grid approximates the functional CRPS, which also feeds the
multivariate Diebold-Mariano comparison across products.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import DegenerateSeriesError, ParameterError

__all__ = [
    "LossSpec",
    "rho",
    "minute_grid",
    "GridPath",
    "argmin_process",
    "eval_functional",
    "CellScores",
    "score_cell",
    "ProductCriteria",
    "product_criteria",
    "default_tau_grid",
    "DMResult",
    "dm_test",
    "ScoreReport",
]

MINUTES_PER_HOUR = 60
DT = 1.0 / MINUTES_PER_HOUR

LOSS_MEAN = (0, 0.5, 2)
LOSS_MEDIAN = (0, 0.5, 1)


@dataclass(frozen=True)
class LossSpec:
    """Parameters (eta, tau, p) of the unified loss."""

    eta: int
    tau: float
    p: float

    def __post_init__(self):
        if self.eta not in (0, 1):
            raise ParameterError(f"eta must be 0 or 1, got {self.eta!r}")
        if not 0.0 < self.tau < 1.0:
            raise ParameterError(f"tau must lie in (0, 1), got {self.tau!r}")
        if not self.p >= 1.0:
            raise ParameterError(f"p must be >= 1, got {self.p!r}")
        if self.eta == 1 and self.p != int(self.p):
            raise ParameterError("eta=1 requires an integer exponent p")

    def as_tuple(self) -> tuple[int, float, float]:
        return (self.eta, self.tau, self.p)


def _as_loss(loss) -> LossSpec:
    if isinstance(loss, LossSpec):
        return loss
    return LossSpec(*loss)


def rho(loss, z):
    """The unified loss evaluated elementwise."""
    spec = _as_loss(loss)
    zz = np.asarray(z, dtype=float)
    weight = np.abs(spec.tau - (zz < 0.0))
    power = zz ** spec.p if spec.eta == 1 else np.abs(zz) ** spec.p
    out = power * weight
    return float(out) if np.ndim(z) == 0 else out


def minute_grid(t1: float, t2: float) -> np.ndarray:
    """Left-endpoint minute grid of [t1, t2): includes t1, excludes t2."""
    if not t1 < t2:
        raise ParameterError(f"need t1 < t2, got {t1}, {t2}")
    n = int(round((t2 - t1) * MINUTES_PER_HOUR))
    if n < 1 or abs(n - (t2 - t1) * MINUTES_PER_HOUR) > 1e-9:
        raise ParameterError(f"[{t1}, {t2}) is not a whole number of minutes")
    return t1 + np.arange(n) / MINUTES_PER_HOUR


@dataclass(frozen=True)
class GridPath:
    """A (possibly estimated, hence real-valued) counting path on a grid."""

    grid: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        counts = np.asarray(self.counts, dtype=float)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "counts", counts)
        if grid.shape != counts.shape or grid.ndim != 1:
            raise ParameterError("grid and counts must be 1-d arrays of equal length")
        if counts.size and np.any(np.diff(counts) < 0.0):
            raise ParameterError("counting paths are nondecreasing")


def _counts_of(path) -> np.ndarray:
    if isinstance(path, GridPath):
        return path.counts
    return np.asarray(path, dtype=float)


def lower_quantile_index(tau: float, m: int) -> int:
    """0-based order-statistic index of the smallest pinball minimizer.

    The minimizer set of ``sum_m rho_(0,tau,1)(z_m - z)`` is the order
    statistic of rank ceil(tau*m) when tau*m is fractional and the whole
    interval [z_(tau*m), z_(tau*m+1)] when it is an integer; the smallest
    minimizer is returned in both cases.
    """
    k = math.ceil(tau * m - 1e-9)
    return min(max(k, 1), m) - 1


def argmin_process(sims: np.ndarray, loss) -> np.ndarray:
    """Pointwise rho-estimate of a simulation sample.

    ``sims`` is the (M, J) matrix of simulated counting paths on a shared
    grid.  Supported losses: (eta, 0.5, 2) for the mean process, (0, 0.5, 1)
    for the (midpoint) median process and (0, tau, 1) for the lower sample
    tau-quantile process; anything else is rejected.
    """
    spec = _as_loss(loss)
    sims = np.asarray(sims, dtype=float)
    if sims.ndim != 2 or sims.shape[0] < 1:
        raise ParameterError("sims must be an (M, J) matrix with M >= 1")
    if spec.tau == 0.5 and spec.p == 2:
        return sims.mean(axis=0)
    if spec.eta != 0 or spec.p != 1:
        raise ParameterError(f"unsupported argmin loss {spec.as_tuple()}")
    if spec.tau == 0.5:
        return np.median(sims, axis=0)
    idx = lower_quantile_index(spec.tau, sims.shape[0])
    return np.sort(sims, axis=0)[idx]


def eval_functional(observed, estimate, loss, dt: float = DT) -> float:
    """Left-endpoint loss integral between two paths, to the power 1/p."""
    spec = _as_loss(loss)
    obs = _counts_of(observed)
    est = _counts_of(estimate)
    if (
        isinstance(observed, GridPath)
        and isinstance(estimate, GridPath)
        and not np.array_equal(observed.grid, estimate.grid)
    ):
        raise ParameterError("paths live on different grids")
    if obs.shape != est.shape:
        raise ParameterError(f"grid length mismatch: {obs.shape} vs {est.shape}")
    total = float(np.sum(rho(spec, obs - est)) * dt)
    if spec.p == 1:
        return total
    return total ** (1.0 / spec.p)


def default_tau_grid(size: int = 99) -> np.ndarray:
    """Equidistant probabilities 1/(size+1) .. size/(size+1)."""
    return np.arange(1, size + 1) / (size + 1)


@dataclass(frozen=True)
class CellScores:
    """Per-day, per-product evaluation pieces (pre day-averaging)."""

    bias: float
    mae: float
    rmse: float
    pb: np.ndarray  # one pinball integral per tau in the grid

    @property
    def crps(self) -> float:
        return float(np.mean(self.pb))


def score_cell(obs: np.ndarray, sims: np.ndarray, taus: np.ndarray) -> CellScores:
    """Evaluate one forecast cell: observed path vs a simulation sample.

    ``obs`` is the (J,) observed counting path, ``sims`` the (M, J) matrix
    of simulated paths, both counted from the horizon start on the shared
    minute grid.
    """
    obs = np.asarray(obs, dtype=float)
    sims = np.asarray(sims, dtype=float)
    taus = np.asarray(taus, dtype=float)
    if sims.ndim != 2 or obs.shape != sims.shape[1:]:
        raise ParameterError("obs (J,) and sims (M, J) must share the grid length")
    m = sims.shape[0]
    mean_path = sims.mean(axis=0)
    median_path = np.median(sims, axis=0)
    sims_sorted = np.sort(sims, axis=0)

    bias = 2.0 * eval_functional(obs, mean_path, (1, 0.5, 1))
    mae = 2.0 * eval_functional(obs, median_path, (0, 0.5, 1))
    rmse = 2.0 * eval_functional(obs, mean_path, (0, 0.5, 2))

    pb = np.empty(taus.size)
    for i, tau in enumerate(taus):
        if tau == 0.5:
            path = median_path
        else:
            path = sims_sorted[lower_quantile_index(float(tau), m)]
        pb[i] = eval_functional(obs, path, (0, float(tau), 1))
    return CellScores(bias=bias, mae=mae, rmse=rmse, pb=pb)


@dataclass(frozen=True)
class ProductCriteria:
    """Day-averaged criteria of one model on one product."""

    bias: float
    mae: float
    rmse: float
    pb: np.ndarray
    crps: float
    daily_crps: np.ndarray  # nan where the day's cell is missing
    n_days: int
    n_missing: int


def product_criteria(cells: list[CellScores | None], n_taus: int) -> ProductCriteria:
    """Average per-day scores, excluding missing cells (reported by count)."""
    present = [c for c in cells if c is not None]
    daily = np.array([c.crps if c is not None else math.nan for c in cells])
    if not present:
        nan = math.nan
        return ProductCriteria(nan, nan, nan, np.full(n_taus, np.nan), nan, daily, 0, len(cells))
    pb = np.mean([c.pb for c in present], axis=0)
    return ProductCriteria(
        bias=float(np.mean([c.bias for c in present])),
        mae=float(np.mean([c.mae for c in present])),
        rmse=float(np.mean([c.rmse for c in present])),
        pb=pb,
        crps=float(np.mean(pb)),
        daily_crps=daily,
        n_days=len(present),
        n_missing=len(cells) - len(present),
    )


@dataclass(frozen=True)
class DMResult:
    """Multivariate Diebold-Mariano comparison of two loss series."""

    statistic: float
    p_h0_le: float  # null: E(delta) <= 0, i.e. "A no worse"; small => B better
    p_h0_ge: float  # null: E(delta) >= 0, i.e. "B no worse"; small => A better
    n_days: int


def dm_test(loss_a: np.ndarray, loss_b: np.ndarray, q: int = 1) -> DMResult:
    """DM test on the daily norm differential of two loss matrices.

    ``loss_a`` and ``loss_b`` hold per-day loss vectors across products,
    shape (N,) or (N, S).  The differential is
    ``delta_d = ||loss_a[d]||_q - ||loss_b[d]||_q`` and the statistic
    ``sqrt(N) * mean(delta) / sd(delta)`` is compared against a standard
    normal; the two one-sided p-values are complementary.  The normal
    approximation is asymptotic, so small N (< 30 or so) is unreliable.
    """
    if q not in (1, 2):
        raise ParameterError(f"q must be 1 or 2, got {q!r}")
    a = np.atleast_2d(np.asarray(loss_a, dtype=float).T).T
    b = np.atleast_2d(np.asarray(loss_b, dtype=float).T).T
    if a.shape != b.shape:
        raise ParameterError(f"loss series shapes differ: {a.shape} vs {b.shape}")
    n = a.shape[0]
    if n < 2:
        raise ParameterError("need at least two days of losses")
    if q == 1:
        norm_a = np.abs(a).sum(axis=1)
        norm_b = np.abs(b).sum(axis=1)
    else:
        norm_a = np.sqrt((a * a).sum(axis=1))
        norm_b = np.sqrt((b * b).sum(axis=1))
    delta = norm_a - norm_b
    sd = float(np.std(delta, ddof=1))
    if sd == 0.0:
        raise DegenerateSeriesError(
            "loss differential has zero variance; forecasts indistinguishable"
        )
    statistic = math.sqrt(n) * float(np.mean(delta)) / sd
    return DMResult(
        statistic=statistic,
        p_h0_le=float(special.ndtr(-statistic)),
        p_h0_ge=float(special.ndtr(statistic)),
        n_days=n,
    )


@dataclass(frozen=True)
class ScoreReport:
    """Study-level scores: per model and product, plus daily loss entries."""

    models: list[str]
    products: list[int]
    taus: np.ndarray
    day_labels: list[str]
    bias: np.ndarray  # (K, S)
    mae: np.ndarray
    rmse: np.ndarray
    crps: np.ndarray
    pb: np.ndarray  # (K, S, R)
    daily_crps: np.ndarray  # (K, N, S), nan for missing cells
    missing: np.ndarray  # (K, S) int

    def aggregate(self, criterion: str) -> np.ndarray:
        """Product-averaged criterion values, one per model."""
        return getattr(self, criterion).mean(axis=1)

    def model_daily_losses(self, model: str) -> np.ndarray:
        return self.daily_crps[self.models.index(model)]

    def dm_matrix(self, q: int = 1) -> np.ndarray:
        """Pairwise p-values: entry (i, j) small means model i beats model j.

        Days with a missing cell in either model are dropped pairwise;
        undefined comparisons (diagonal, degenerate series, < 2 shared
        days) are nan.
        """
        k = len(self.models)
        out = np.full((k, k), np.nan)
        for i in range(k):
            for j in range(k):
                if i == j:
                    continue
                la = self.daily_crps[i]
                lb = self.daily_crps[j]
                keep = ~(np.isnan(la).any(axis=1) | np.isnan(lb).any(axis=1))
                if keep.sum() < 2:
                    continue
                try:
                    out[i, j] = dm_test(la[keep], lb[keep], q=q).p_h0_ge
                except DegenerateSeriesError:
                    continue
        return out
