"""Dense linear-algebra primitives, seeded sampling and singular-value estimates.

Matrices are plain ``float64`` numpy arrays stored row-major.  A "row-normalized"
matrix is one whose rows all have unit Euclidean norm; an index set is a sorted
``int64`` array of distinct row indices.

Random streams come from numpy's PCG64 bit generator (128-bit state, 64-bit
outputs).  Independent streams are derived with :class:`numpy.random.SeedSequence`
keyed by integer tuples, so a trial or heatmap cell always sees the same stream no
matter how work is scheduled.
"""

from __future__ import annotations

import numpy as np

from .errors import NonConvergenceError, ZeroRowError

ZERO_ROW_THRESHOLD = 1e-300
JACOBI_TOL = 1e-12


def make_rng(seed, *key) -> np.random.Generator:
    """Return a PCG64 generator for ``seed``, optionally split by an integer ``key``.

    ``make_rng(s, 3)`` and ``make_rng(s, 4)`` are statistically independent streams;
    the same arguments always reproduce the same stream.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    entropy = [int(seed)] + [int(k) for k in key]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def derive_seed(seed, *key) -> int:
    """A 64-bit integer seed derived from ``(seed, *key)``."""
    ss = np.random.SeedSequence([int(seed)] + [int(k) for k in key])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def as_matrix(M) -> np.ndarray:
    A = np.asarray(M, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2-D matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    return A


def row_normalize(M) -> np.ndarray:
    """Scale every row of ``M`` to unit Euclidean norm.

    Raises :class:`ZeroRowError` naming the first row whose norm is below 1e-300.
    """
    A = as_matrix(M)
    norms = np.linalg.norm(A, axis=1)
    bad = np.flatnonzero(norms <= ZERO_ROW_THRESHOLD)
    if bad.size:
        raise ZeroRowError(int(bad[0]))
    return np.ascontiguousarray(A / norms[:, None])


def is_row_normalized(A, tol=1e-12) -> bool:
    return bool(np.all(np.abs(np.linalg.norm(A, axis=1) - 1.0) <= tol))


def residual(A, x, b_hat, i) -> float:
    """Signed residual ``<a_i, x> - b_hat_i`` of equation ``i``."""
    m = A.shape[0]
    if not 0 <= i < m:
        raise IndexError(f"row index {i} out of range for {m} rows")
    return float(A[i] @ x - b_hat[i])


def sigma_max(A, rel_tol=1e-8, max_iter=10_000, seed=0) -> float:
    """Largest singular value of ``A`` by power iteration on the Gram matrix.

    Iteration stops once the eigen-residual ``||G v - theta v||`` drops below
    ``rel_tol * theta``; for a symmetric ``G`` this bounds the distance from
    ``theta`` to the spectrum, so the returned value is accurate to ``rel_tol``.
    """
    A = as_matrix(A)
    G = A.T @ A
    v = make_rng(seed).standard_normal(G.shape[0])
    v /= np.linalg.norm(v)
    theta = 0.0
    for _ in range(max_iter):
        w = G @ v
        theta = float(v @ w)
        if theta <= 0.0:
            # A v = 0 for the start vector; only possible if G is (numerically) zero.
            if not np.any(G):
                return 0.0
            v = np.ones_like(v) / np.sqrt(v.size)
            continue
        if np.linalg.norm(w - theta * v) <= rel_tol * theta:
            return float(np.sqrt(theta))
        v = w / np.linalg.norm(w)
    raise NonConvergenceError(
        f"power iteration did not reach rel_tol={rel_tol} in {max_iter} iterations"
    )


def jacobi_eigvalsh(G, tol=JACOBI_TOL, max_sweeps=100) -> np.ndarray:
    """Eigenvalues of a symmetric matrix by the cyclic Jacobi method, ascending.

    Sweeps continue until the off-diagonal Frobenius norm is below
    ``tol * ||G||_F``.
    """
    S = np.array(G, dtype=np.float64, copy=True)
    n = S.shape[0]
    if S.shape != (n, n):
        raise ValueError("expected a square matrix")
    scale = np.linalg.norm(S)
    if scale == 0.0 or n == 1:
        return np.sort(np.diag(S))
    for _ in range(max_sweeps):
        off = np.sqrt(max(np.sum(S * S) - np.sum(np.diag(S) ** 2), 0.0))
        if off <= tol * scale:
            return np.sort(np.diag(S))
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = S[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (S[q, q] - S[p, p]) / (2.0 * apq)
                t = np.copysign(1.0, theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                Sp, Sq = S[:, p].copy(), S[:, q].copy()
                S[:, p] = c * Sp - s * Sq
                S[:, q] = s * Sp + c * Sq
                Sp, Sq = S[p, :].copy(), S[q, :].copy()
                S[p, :] = c * Sp - s * Sq
                S[q, :] = s * Sp + c * Sq
    raise NonConvergenceError(f"Jacobi did not converge in {max_sweeps} sweeps")


def sigma_min_gram(G, method="lapack") -> float:
    """Square root of the smallest eigenvalue of a Gram matrix, clamped at 0."""
    if method == "lapack":
        lam = np.linalg.eigvalsh(G)[0]
    elif method == "jacobi":
        lam = jacobi_eigvalsh(G)[0]
    else:
        raise ValueError(f"unknown eigen method {method!r}")
    return float(np.sqrt(max(lam, 0.0)))


def sigma_min_rows(A, S, method="lapack") -> float:
    """Smallest singular value of the row-submatrix ``A[S]``.

    Returns 0 when ``len(S) < n`` since such a submatrix is rank deficient.
    """
    S = np.asarray(S, dtype=np.int64)
    if S.size < 1:
        raise ValueError("row set must be non-empty")
    m, n = A.shape
    if S.min() < 0 or S.max() >= m:
        raise IndexError("row index out of range")
    if S.size < n:
        return 0.0
    AS = A[S]
    return sigma_min_gram(AS.T @ AS, method=method)


def sample_without_replacement(m, k, rng) -> np.ndarray:
    """Uniform random ``k``-subset of ``range(m)`` as a sorted index array.

    Partial Fisher-Yates over a lazily materialised pool: step ``i`` swaps position
    ``i`` with a uniform position in ``[i, m)`` and the first ``k`` positions form
    the sample.  All swap targets are drawn up front in a single call, so for a
    fixed generator state the sample for ``k`` is contained in the sample for any
    larger ``k``.
    """
    if not 1 <= k <= m:
        raise ValueError(f"cannot draw {k} distinct indices from {m}")
    if k == m:
        return np.arange(m, dtype=np.int64)
    targets = rng.integers(np.arange(k), m).tolist()
    pool = {}
    for i, j in enumerate(targets):
        vi = pool.get(i, i)
        pool[i] = pool.get(j, j)
        pool[j] = vi
    out = np.fromiter((pool.get(i, i) for i in range(k)), dtype=np.int64, count=k)
    out.sort()
    return out
