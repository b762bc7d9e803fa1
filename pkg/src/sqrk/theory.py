"""Convergence constants for sub-sampled quantile RK and checks of their hypotheses.

Notation used throughout: ``m`` equations, sampling rate ``alpha``, quantile ``q``,
corruption rate ``beta``, ``d = alpha (1 - q) - beta``, ``p = beta / (alpha q)``.

* uncorrupted-branch rate   ``r_G = 1 - sigma_aqb^2 / (alpha q m)``
* corrupted-branch rate     ``r_C(s) = 1 + 2/sqrt(s) * smax^2/sqrt(m d) + smax^2/(m d)``
  with ``r~_C = r_C(beta m)`` the worst case
* overall rate              ``r = (1 - p) r_G + p r~_C``

The guarantee needs ``alpha q > beta``, ``alpha (1 - q) > beta`` and
``r_G < (1 - p r~_C) / (1 - p)``, which rearranges to
``p + beta smax^2 / sigma_aqb^2 * (2 / (sqrt(beta) sqrt(d)) + 1/d) < 1``.
Both forms are evaluated independently and reported side by side.

When ``floor(beta m) = 0`` there are no corrupted equations: ``r`` is ``r_G``,
``r~_C`` is taken as 1 and the corruption term of the rearranged form as 0.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import QuantileConditionViolated, SamplingConditionViolated
from .linalg import derive_seed, make_rng, sample_without_replacement, sigma_max as _sigma_max, sigma_min_rows

DEFAULT_NUM_SAMPLES = 100


@dataclass(frozen=True)
class RateParams:
    m: int
    alpha: float
    q: float
    beta: float
    sigma_max: float
    sigma_aqb_min: float

    def __post_init__(self):
        if not 0.0 < self.q < 1.0:
            raise ValueError(f"q must lie in (0, 1), got {self.q}")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not 0.0 <= self.beta < 1.0:
            raise ValueError(f"beta must lie in [0, 1), got {self.beta}")
        if self.sigma_max < 0 or self.sigma_aqb_min < 0:
            raise ValueError("singular values must be non-negative")

    @property
    def vacuous(self):
        """True when ``floor(beta m) = 0``: nothing is actually corrupted."""
        return math.floor(self.beta * self.m) == 0

    @property
    def d(self):
        return self.alpha * (1.0 - self.q) - self.beta


@dataclass(frozen=True)
class RateReport:
    r_G: float
    r_C_tilde: float
    r: float
    cond_sampling: bool
    cond_quantile: bool
    cond_rate: bool
    cond_rate_equiv: bool
    is_convergent: bool

    def as_dict(self):
        return asdict(self)


def rate_rG(p: RateParams) -> float:
    denom = p.alpha * p.q * p.m
    if denom <= 0:
        raise ValueError("alpha * q * m must be positive")
    return 1.0 - p.sigma_aqb_min ** 2 / denom


def rate_rC(p: RateParams, s_k_size) -> float:
    """Corrupted-branch rate for an accepted corrupted set of size ``s_k_size``."""
    if p.d <= 0:
        raise QuantileConditionViolated(f"alpha(1-q) = {p.alpha * (1 - p.q)} <= beta = {p.beta}")
    if s_k_size <= 0:
        raise ValueError("s_k_size must be positive")
    md = p.m * p.d
    s2 = p.sigma_max ** 2
    return 1.0 + 2.0 / math.sqrt(s_k_size) * s2 / math.sqrt(md) + s2 / md


def rate_rC_tilde(p: RateParams) -> float:
    """Worst-case corrupted-branch rate, ``rate_rC`` at ``|S_k| = beta m``."""
    if p.d <= 0:
        raise QuantileConditionViolated(f"alpha(1-q) = {p.alpha * (1 - p.q)} <= beta = {p.beta}")
    if p.vacuous:
        return 1.0
    return rate_rC(p, p.beta * p.m)


def condition_rate(r_G, r_C_tilde, p_ratio) -> bool:
    """``r_G < (1 - p r~_C) / (1 - p)``; false when ``p >= 1``."""
    if not p_ratio < 1.0 or not math.isfinite(r_C_tilde):
        return False
    return r_G < (1.0 - p_ratio * r_C_tilde) / (1.0 - p_ratio)


def condition_rate_equiv(p: RateParams) -> bool:
    """The rearranged sufficient condition, evaluated from its own formula."""
    p_ratio = p.beta / (p.alpha * p.q)
    d = p.d
    if p_ratio >= 1.0 or d <= 0 or p.sigma_aqb_min == 0.0:
        return False
    if p.vacuous:
        corruption = 0.0
    else:
        corruption = (p.beta * p.sigma_max ** 2 / p.sigma_aqb_min ** 2
                      * (2.0 / (math.sqrt(p.beta) * math.sqrt(d)) + 1.0 / d))
    return p_ratio + corruption < 1.0


def rate_r(p: RateParams) -> RateReport:
    """Overall rate plus every hypothesis flag; infeasibility shows up as ``False``/``inf``."""
    r_G = rate_rG(p)
    cond_sampling = p.alpha * p.q > p.beta
    cond_quantile = p.d > 0
    r_C_tilde = rate_rC_tilde(p) if cond_quantile else math.inf
    p_ratio = p.beta / (p.alpha * p.q)
    if p_ratio == 0.0 or (p.vacuous and cond_quantile):
        r = r_G
    else:
        r = (1.0 - p_ratio) * r_G + p_ratio * r_C_tilde
    cond_rate = cond_sampling and cond_quantile and condition_rate(r_G, r_C_tilde, p_ratio)
    cond_equiv = cond_sampling and cond_quantile and condition_rate_equiv(p)
    return RateReport(
        r_G=r_G, r_C_tilde=r_C_tilde, r=r,
        cond_sampling=cond_sampling, cond_quantile=cond_quantile,
        cond_rate=cond_rate, cond_rate_equiv=cond_equiv,
        is_convergent=cond_sampling and cond_quantile and cond_rate and r < 1.0,
    )


def subset_size(m, alpha, q, beta) -> int:
    """``ceil((alpha q - beta) m)``, the smallest admissible subset size."""
    frac = alpha * q - beta
    if frac <= 0:
        raise SamplingConditionViolated(f"alpha q = {alpha * q} <= beta = {beta}")
    return max(1, math.ceil(frac * m - 1e-9))


def estimate_sigma_aqb_min(A, alpha, q, beta, num_samples=DEFAULT_NUM_SAMPLES, rng=0,
                           return_samples=False):
    """Upper estimate of the subset-restricted smallest singular value.

    Draws ``num_samples`` uniform row subsets of size ``ceil((alpha q - beta) m)``
    and returns the smallest ``sigma_min`` seen.  The true quantity minimises over
    *all* such subsets, so this can only over-estimate it.

    ``rng`` may be a Generator or an integer seed.  With an integer seed, sample
    ``s`` uses its own stream ``(seed, s)``; because the sampler returns nested
    prefixes, a smaller subset size then always yields subsets of the larger
    ones, and the estimate is monotone in ``beta``.
    """
    m, n = A.shape
    size = subset_size(m, alpha, q, beta)
    if num_samples < 1:
        raise ValueError("num_samples must be >= 1")
    if size < n:
        values = np.zeros(num_samples)
    else:
        values = np.empty(num_samples)
        for s in range(num_samples):
            gen = rng if isinstance(rng, np.random.Generator) else make_rng(rng, s)
            values[s] = sigma_min_rows(A, sample_without_replacement(m, size, gen))
    est = float(values.min())
    return (est, values) if return_samples else est


def estimate_sigma_from_trace(A, traces, C=None) -> float:
    """Smallest ``sigma_min(A[B_k minus C])`` over every iteration of every trace.

    Traces recorded with ``record_sigma_trace`` already carry the values; traces
    recorded with ``record_accepted`` carry the accepted sets, which are reduced
    here using the corrupted index set ``C``.
    """
    best = math.inf
    seen = False
    mask = None
    if C is not None:
        mask = np.zeros(A.shape[0], dtype=bool)
        mask[np.asarray(C, dtype=np.int64)] = True
    for tr in traces:
        sig = tr.sigma_min[~np.isnan(tr.sigma_min)]
        if sig.size:
            best = min(best, float(sig.min()))
            seen = True
        elif tr.accepted_sets:
            for acc in tr.accepted_sets:
                clean = acc if mask is None else acc[~mask[acc]]
                best = min(best, sigma_min_rows(A, clean) if clean.size else 0.0)
                seen = True
    if not seen:
        raise ValueError("traces carry neither sigma values nor accepted sets")
    return best


@dataclass
class Heatmap:
    beta: float
    q_grid: np.ndarray
    alpha_grid: np.ndarray
    cond_sampling: np.ndarray
    cond_quantile: np.ndarray
    cond_rate: np.ndarray
    satisfied: np.ndarray
    sigma_est: np.ndarray
    rate: np.ndarray

    def count(self) -> int:
        return int(self.satisfied.sum())

    def rows(self):
        """Flat records ``(q, alpha, cond_sampling, cond_quantile, cond_rate, satisfied)``."""
        for i, q in enumerate(self.q_grid):
            for j, a in enumerate(self.alpha_grid):
                yield (float(q), float(a), bool(self.cond_sampling[i, j]), bool(self.cond_quantile[i, j]),
                       bool(self.cond_rate[i, j]), bool(self.satisfied[i, j]))


def hypothesis_heatmap(A, beta, q_grid, alpha_grid, num_samples=DEFAULT_NUM_SAMPLES, seed=0,
                       sig_max=None) -> Heatmap:
    """Which ``(q, alpha)`` pairs satisfy all three hypotheses for this ``A`` and ``beta``.

    Cell ``(i, j)`` (``q_grid[i]``, ``alpha_grid[j]``) estimates its subset
    singular value from streams keyed by ``(seed, i, j, sample)``, so a cell's
    value does not depend on the rest of the grid or on ``beta``'s effect on other
    cells.
    """
    q_grid = np.asarray(q_grid, dtype=float)
    alpha_grid = np.asarray(alpha_grid, dtype=float)
    if q_grid.size == 0 or alpha_grid.size == 0:
        raise ValueError("grids must be non-empty")
    m = A.shape[0]
    if sig_max is None:
        sig_max = _sigma_max(A)
    shape = (q_grid.size, alpha_grid.size)
    out = {k: np.zeros(shape, dtype=bool) for k in ("cs", "cq", "cr", "ok")}
    sig = np.full(shape, np.nan)
    rate = np.full(shape, np.nan)
    for i, q in enumerate(q_grid):
        for j, a in enumerate(alpha_grid):
            cs = a * q > beta
            cq = a * (1 - q) > beta
            out["cs"][i, j], out["cq"][i, j] = cs, cq
            if not (cs and cq and 0 < q < 1 and 0 < a <= 1):
                continue
            cell_seed = derive_seed(seed, i, j)
            sig[i, j] = estimate_sigma_aqb_min(A, a, q, beta, num_samples, rng=cell_seed)
            rep = rate_r(RateParams(m, a, q, beta, sig_max, sig[i, j]))
            rate[i, j] = rep.r
            out["cr"][i, j] = rep.cond_rate
            out["ok"][i, j] = rep.is_convergent
    return Heatmap(beta, q_grid, alpha_grid, out["cs"], out["cq"], out["cr"], out["ok"], sig, rate)


def bound_curve(r, initial_sq_error, n_iters):
    """``r^k * initial`` for ``k = 0..n_iters``; ``None`` unless ``r < 1``."""
    if not r < 1.0:
        return None
    k = np.arange(n_iters + 1)
    return initial_sq_error * np.power(r, k)
