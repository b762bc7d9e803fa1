"""Randomized Kaczmarz and its quantile-screened variants.

Variants
--------
``RK``
    project onto a uniformly random equation.
``QRK``
    threshold all ``m`` residuals at their q-quantile, project onto a random
    accepted equation (``SQRK`` with ``alpha = 1``).
``SQRK``
    as ``QRK`` but the quantile is taken over a uniform sample of
    ``ceil(alpha * m)`` equations, and only sampled equations can be accepted.
``SSQRK``
    draw ``lam`` equations and project onto the one whose residual *is* the
    sample q-quantile.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import EmptyAcceptedSetError
from .linalg import make_rng, sample_without_replacement, sigma_max, sigma_min_rows
from .problems import CorruptedSystem
from .quantile import INCLUSIVE, THRESHOLD_MODES, q_quantile, quantile_rank, threshold_mask

VARIANTS = ("RK", "QRK", "SQRK", "SSQRK")
X0_POLICIES = ("zero", "gaussian-unit")

EVENT_NONE, EVENT_E1, EVENT_E2, EVENT_E3 = 0, 1, 2, 3
EVENT_NAMES = {EVENT_NONE: "", EVENT_E1: "E1", EVENT_E2: "E2", EVENT_E3: "E3"}

UNIT_ROW_TOL = 1e-10
GAMMA_BOUND_SLACK = 1e-9


def sample_count(alpha, m) -> int:
    """``ceil(alpha * m)``, ignoring floating-point fuzz of a few ulps."""
    return max(1, math.ceil(alpha * m - 1e-9))


@dataclass(frozen=True)
class SolverConfig:
    variant: str = "SQRK"
    q: float = 0.9
    alpha: float = 1.0
    lam: int = 11
    max_iters: int = 1000
    seed: int = 0
    x0_policy: str = "zero"
    threshold_mode: str = INCLUSIVE
    record_sigma_trace: bool = False
    record_accepted: bool = False
    classify_events: bool = False
    q_prime: float | None = None
    check_gamma_bound: bool = False
    max_retries: int = 100

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if self.variant != "RK" and not 0.0 < self.q < 1.0:
            raise ValueError(f"q must lie in (0, 1), got {self.q}")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.variant == "QRK" and self.alpha != 1.0:
            raise ValueError("QRK always uses the full residual (alpha = 1)")
        if self.lam < 1:
            raise ValueError("lam must be >= 1")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if self.x0_policy not in X0_POLICIES:
            raise ValueError(f"unknown x0 policy {self.x0_policy!r}")
        if self.threshold_mode not in THRESHOLD_MODES:
            raise ValueError(f"unknown threshold mode {self.threshold_mode!r}")
        if self.q_prime is not None and not 0.0 < self.q_prime < 1.0:
            raise ValueError("q_prime must lie in (0, 1)")

    @property
    def screened(self):
        return self.variant in ("QRK", "SQRK")

    def sample_size(self, m) -> int:
        if self.variant == "SSQRK":
            return min(self.lam, m)
        if self.variant == "RK":
            return 1
        return sample_count(self.alpha, m)

    def validate_for(self, m) -> None:
        if self.variant in ("QRK", "SQRK", "SSQRK"):
            size = self.sample_size(m)
            if quantile_rank(size, self.q) < 1:
                raise ValueError(
                    f"floor(q * sample size) = floor({self.q} * {size}) = 0; no quantile defined")

    def label(self) -> str:
        if self.variant == "RK":
            return "rk"
        if self.variant == "SSQRK":
            return f"ssqrk_lam{self.lam}_q{self.q:.4g}"
        return f"{self.variant.lower()}_a{self.alpha:g}_q{self.q:g}"


class StepInfo(NamedTuple):
    row: int
    residual: float
    gamma: float
    accepted_count: int
    accepted_corrupt: int
    accepted: np.ndarray | None
    retries: int


def project(x, a, b_hat_i, strict=False) -> np.ndarray:
    """Orthogonal projection of ``x`` onto the hyperplane ``<a, y> = b_hat_i``.

    General rows are handled by dividing the step by ``||a||^2``; with ``strict``
    a row whose norm differs from 1 by more than 1e-10 is rejected instead.
    """
    nrm2 = float(a @ a)
    if strict and abs(math.sqrt(nrm2) - 1.0) > UNIT_ROW_TOL:
        raise ValueError(f"row is not unit norm (||a|| = {math.sqrt(nrm2)})")
    if nrm2 == 0.0:
        raise ValueError("cannot project onto a zero row")
    return x + ((b_hat_i - float(a @ x)) / nrm2) * a


def rk_step(system: CorruptedSystem, x, rng):
    i = int(rng.integers(system.m))
    r = float(system.A[i] @ x - system.b_hat[i])
    x_next = project(x, system.A[i], system.b_hat[i])
    info = StepInfo(i, r, math.nan, system.m, system.n_corrupt, None, 0)
    return x_next, info


def sqrk_step(system: CorruptedSystem, x, config: SolverConfig, rng, record_accepted=False):
    """One sub-sampled quantile step (QRK when ``alpha = 1``).

    In strict mode an empty accepted set triggers a fresh sample, at most
    ``config.max_retries`` times.
    """
    A, b_hat, m = system.A, system.b_hat, system.m
    k = sample_count(config.alpha, m)
    for retries in range(config.max_retries + 1):
        if k == m:
            tau = None
            r = A @ x - b_hat
        else:
            tau = sample_without_replacement(m, k, rng)
            r = A[tau] @ x - b_hat[tau]
        mag = np.abs(r)
        gamma = q_quantile(mag, config.q)
        mask = threshold_mask(mag, gamma, config.threshold_mode)
        pos = np.flatnonzero(mask)
        if pos.size:
            break
    else:
        raise EmptyAcceptedSetError(
            f"strict threshold rejected every sample {config.max_retries + 1} times")
    j = int(pos[rng.integers(pos.size)])
    accepted = pos if tau is None else tau[pos]
    i = j if tau is None else int(tau[j])
    n_bad = int(np.count_nonzero(system.corrupt_mask[accepted])) if system.n_corrupt else 0
    x_next = project(x, A[i], b_hat[i])
    info = StepInfo(i, float(r[j]), gamma, int(pos.size), n_bad,
                    accepted if record_accepted else None, retries)
    return x_next, info


def ssqrk_step(system: CorruptedSystem, x, config: SolverConfig, rng, record_accepted=False):
    """One small-sample step: project onto the equation attaining the sample quantile.

    Ties at the quantile value are broken uniformly at random.
    """
    A, b_hat, m = system.A, system.b_hat, system.m
    lam = min(config.lam, m)
    tau = sample_without_replacement(m, lam, rng)
    r = A[tau] @ x - b_hat[tau]
    mag = np.abs(r)
    gamma = q_quantile(mag, config.q)
    pos = np.flatnonzero(mag == gamma)
    j = int(pos[0]) if pos.size == 1 else int(pos[rng.integers(pos.size)])
    i = int(tau[j])
    attaining = tau[pos]
    n_bad = int(np.count_nonzero(system.corrupt_mask[attaining])) if system.n_corrupt else 0
    x_next = project(x, A[i], b_hat[i])
    info = StepInfo(i, float(r[j]), gamma, int(pos.size), n_bad,
                    attaining if record_accepted else None, 0)
    return x_next, info


def classify_event(selected_row, full_residuals, q_prime, C) -> int:
    """Classify a selected equation against the ``q_prime``-quantile of all residuals.

    ``C`` is either a boolean corruption mask or an array of corrupted indices.
    Returns ``EVENT_E3`` for an uncorrupted row, ``EVENT_E1`` for a corrupted row
    whose residual magnitude exceeds the quantile and ``EVENT_E2`` otherwise.
    """
    C = np.asarray(C)
    corrupted = bool(C[selected_row]) if C.dtype == bool else bool(np.any(C == selected_row))
    if not corrupted:
        return EVENT_E3
    gamma = q_quantile(np.abs(full_residuals), q_prime)
    return EVENT_E1 if abs(full_residuals[selected_row]) > gamma else EVENT_E2


@dataclass
class IterateTrace:
    """Per-iteration record of one solve; entry ``k`` describes iteration ``k + 1``."""

    initial_sq_error: float
    sq_error: np.ndarray
    elapsed: np.ndarray
    selected_row: np.ndarray
    selected_corrupted: np.ndarray
    accepted_count: np.ndarray
    accepted_corrupted_count: np.ndarray
    gamma: np.ndarray
    step_residual: np.ndarray
    retries: np.ndarray
    event: np.ndarray
    sigma_min: np.ndarray
    accepted_sets: list | None = None
    config: SolverConfig | None = field(default=None, repr=False)

    def __len__(self):
        return self.sq_error.size

    @classmethod
    def empty(cls, n_iters, initial_sq_error, config=None):
        return cls(
            initial_sq_error=initial_sq_error,
            sq_error=np.empty(n_iters),
            elapsed=np.empty(n_iters),
            selected_row=np.empty(n_iters, dtype=np.int64),
            selected_corrupted=np.empty(n_iters, dtype=bool),
            accepted_count=np.empty(n_iters, dtype=np.int64),
            accepted_corrupted_count=np.empty(n_iters, dtype=np.int64),
            gamma=np.empty(n_iters),
            step_residual=np.empty(n_iters),
            retries=np.zeros(n_iters, dtype=np.int64),
            event=np.zeros(n_iters, dtype=np.int8),
            sigma_min=np.full(n_iters, np.nan),
            accepted_sets=[] if config is not None and config.record_accepted else None,
            config=config,
        )

    @property
    def prev_sq_error(self):
        """Squared error of the iterate each step started from."""
        return np.concatenate(([self.initial_sq_error], self.sq_error[:-1]))

    @property
    def sigma_running_min(self):
        s = np.where(np.isnan(self.sigma_min), np.inf, self.sigma_min)
        return np.minimum.accumulate(s) if s.size else s

    def event_counts(self):
        return {EVENT_NAMES[e]: int(np.count_nonzero(self.event == e))
                for e in (EVENT_E1, EVENT_E2, EVENT_E3)}


def initial_iterate(n, config: SolverConfig, rng) -> np.ndarray:
    if config.x0_policy == "zero":
        return np.zeros(n)
    x0 = rng.standard_normal(n)
    return x0 / np.linalg.norm(x0)


def gamma_bound_factor(sig_max, m, alpha, q, beta) -> float:
    """``sigma_max / sqrt(m (alpha (1 - q) - beta))``; the quantile is at most this times the error."""
    d = alpha * (1.0 - q) - beta
    if d <= 0:
        raise ValueError("alpha * (1 - q) must exceed beta")
    return sig_max / math.sqrt(m * d)


def solve(system: CorruptedSystem, config: SolverConfig, x0=None):
    """Run ``config.max_iters`` iterations and return ``(x_final, trace)``.

    Elapsed time covers the step itself only; error bookkeeping, event
    classification and the accepted-set singular value are computed outside the
    timed region.
    """
    config.validate_for(system.m)
    rng = make_rng(config.seed)
    x = initial_iterate(system.n, config, rng) if x0 is None else np.array(x0, dtype=np.float64)
    N = config.max_iters
    trace = IterateTrace.empty(N, system.sq_error(x), config)

    q_prime = config.q if config.q_prime is None else config.q_prime
    events = config.classify_events and config.variant != "RK"
    gamma_bound = None
    if config.check_gamma_bound and config.screened and config.alpha * (1 - config.q) > system.beta:
        gamma_bound = gamma_bound_factor(sigma_max(system.A), system.m, config.alpha, config.q, system.beta)
    need_sets = config.record_sigma_trace or config.record_accepted

    if config.variant == "RK":
        def step(x):
            return rk_step(system, x, rng)
    elif config.variant == "SSQRK":
        def step(x):
            return ssqrk_step(system, x, config, rng, record_accepted=need_sets)
    else:
        def step(x):
            return sqrk_step(system, x, config, rng, record_accepted=need_sets)

    elapsed = 0.0
    for k in range(N):
        full_r = system.A @ x - system.b_hat if events else None
        err_prev = trace.sq_error[k - 1] if k else trace.initial_sq_error
        t0 = time.perf_counter()
        x_next, info = step(x)
        elapsed += time.perf_counter() - t0

        trace.elapsed[k] = elapsed
        trace.sq_error[k] = system.sq_error(x_next)
        trace.selected_row[k] = info.row
        trace.selected_corrupted[k] = system.corrupt_mask[info.row]
        trace.accepted_count[k] = info.accepted_count
        trace.accepted_corrupted_count[k] = info.accepted_corrupt
        trace.gamma[k] = info.gamma
        trace.step_residual[k] = info.residual
        trace.retries[k] = info.retries
        if events:
            trace.event[k] = classify_event(info.row, full_r, q_prime, system.corrupt_mask)
        if gamma_bound is not None and info.gamma > gamma_bound * math.sqrt(err_prev) + GAMMA_BOUND_SLACK:
            raise AssertionError(
                f"iteration {k + 1}: quantile {info.gamma} exceeds bound {gamma_bound * math.sqrt(err_prev)}")
        if need_sets and info.accepted is not None:
            if config.record_sigma_trace:
                clean = info.accepted[~system.corrupt_mask[info.accepted]]
                trace.sigma_min[k] = sigma_min_rows(system.A, clean) if clean.size else 0.0
            if config.record_accepted:
                trace.accepted_sets.append(info.accepted)
        x = x_next
    return x, trace
