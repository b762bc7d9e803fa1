"""Synthetic corrupted linear systems and their on-disk formats.

Binary container (little endian)::

    magic     8 bytes   b"SQRKSYS1"
    m, n      uint64 x 2
    beta      float64
    seed      uint64
    magnitude float64
    n_corrupt uint64
    A         m*n float64, row-major
    x_star    n float64
    b         m float64
    c         m float64
    support   n_corrupt uint64, ascending

``b_hat`` is not stored; it is recomputed as ``b + c`` on load.
"""

from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .linalg import make_rng, row_normalize, sample_without_replacement

MAGIC = b"SQRKSYS1"
_HEADER = struct.Struct("<8sQQdQdQ")

X_STAR_POLICIES = ("zero", "gaussian", "given")


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class GenSpec:
    m: int
    n: int
    beta: float = 0.0
    corruption_magnitude: float = 10.0
    x_star_policy: str = "zero"
    seed: int = 0
    x_star: np.ndarray | None = field(default=None, compare=False)
    signed: bool = False

    def __post_init__(self):
        if not (self.m > self.n >= 1):
            raise ValueError(f"need m > n >= 1, got m={self.m}, n={self.n}")
        if not 0.0 <= self.beta < 1.0:
            raise ValueError(f"beta must lie in [0, 1), got {self.beta}")
        if self.x_star_policy not in X_STAR_POLICIES:
            raise ValueError(f"unknown x_star policy {self.x_star_policy!r}")
        if self.x_star_policy == "given":
            if self.x_star is None or np.asarray(self.x_star).shape != (self.n,):
                raise ValueError("policy 'given' needs an x_star of length n")

    @property
    def n_corrupt(self):
        return n_corrupted(self.beta, self.m)


def n_corrupted(beta, m) -> int:
    return math.floor(beta * m)


@dataclass(frozen=True, eq=False)
class CorruptedSystem:
    """A planted consistent system ``A x_star = b`` observed through ``b_hat = b + c``."""

    A: np.ndarray
    x_star: np.ndarray
    b: np.ndarray
    c: np.ndarray
    corrupt_support: np.ndarray
    beta: float
    seed: int = 0
    magnitude: float = 0.0
    b_hat: np.ndarray = field(init=False)
    corrupt_mask: np.ndarray = field(init=False)

    def __post_init__(self):
        for name in ("A", "x_star", "b", "c"):
            object.__setattr__(self, name, _frozen(np.asarray(getattr(self, name), dtype=np.float64)))
        support = _frozen(np.asarray(self.corrupt_support, dtype=np.int64))
        object.__setattr__(self, "corrupt_support", support)
        object.__setattr__(self, "b_hat", _frozen(self.b + self.c))
        mask = np.zeros(self.m, dtype=bool)
        mask[support] = True
        object.__setattr__(self, "corrupt_mask", _frozen(mask))

    @property
    def m(self):
        return self.A.shape[0]

    @property
    def n(self):
        return self.A.shape[1]

    @property
    def n_corrupt(self):
        return int(self.corrupt_support.size)

    def sq_error(self, x) -> float:
        d = x - self.x_star
        return float(d @ d)


def corrupt(b, beta, magnitude, rng, signed=False):
    """Corrupt ``floor(beta * m)`` uniformly chosen entries of ``b``.

    Returns ``(c, support)``.  Every corrupted entry equals ``magnitude``; with
    ``signed`` each gets an independent random sign instead.
    """
    if not 0.0 <= beta < 1.0:
        raise ValueError(f"beta must lie in [0, 1), got {beta}")
    m = len(b)
    k = n_corrupted(beta, m)
    c = np.zeros(m)
    if k == 0:
        return c, np.zeros(0, dtype=np.int64)
    support = sample_without_replacement(m, k, rng)
    values = np.full(k, float(magnitude))
    if signed:
        values *= rng.choice([-1.0, 1.0], size=k)
    c[support] = values
    return c, support


def gen_gaussian_system(spec: GenSpec) -> CorruptedSystem:
    """Row-normalized i.i.d. Gaussian ``A`` with a planted solution and sparse corruption.

    Draw order from the seeded stream: ``A``, then ``x_star`` (gaussian policy
    only), then the corruption support.
    """
    rng = make_rng(spec.seed)
    A = row_normalize(rng.standard_normal((spec.m, spec.n)))
    if spec.x_star_policy == "zero":
        x_star = np.zeros(spec.n)
    elif spec.x_star_policy == "gaussian":
        x_star = rng.standard_normal(spec.n)
        x_star /= np.linalg.norm(x_star)
    else:
        x_star = np.array(spec.x_star, dtype=np.float64)
    b = A @ x_star
    c, support = corrupt(b, spec.beta, spec.corruption_magnitude, rng, signed=spec.signed)
    return CorruptedSystem(
        A=A, x_star=x_star, b=b, c=c, corrupt_support=support, beta=spec.beta,
        seed=spec.seed, magnitude=spec.corruption_magnitude,
    )


def system_from_arrays(A, x_star, c=None, beta=None, seed=0, normalize=True):
    """Wrap user data: ``b = A x_star`` and an arbitrary corruption vector ``c``."""
    A = row_normalize(A) if normalize else np.asarray(A, dtype=np.float64)
    x_star = np.asarray(x_star, dtype=np.float64)
    b = A @ x_star
    c = np.zeros(A.shape[0]) if c is None else np.asarray(c, dtype=np.float64)
    support = np.flatnonzero(c)
    if beta is None:
        beta = support.size / A.shape[0]
    mag = float(np.max(np.abs(c))) if support.size else 0.0
    return CorruptedSystem(A=A, x_star=x_star, b=b, c=c, corrupt_support=support,
                           beta=beta, seed=seed, magnitude=mag)


def save_system(system: CorruptedSystem, path) -> None:
    buf = io.BytesIO()
    buf.write(_HEADER.pack(MAGIC, system.m, system.n, float(system.beta), int(system.seed) & (2**64 - 1),
                           float(system.magnitude), system.n_corrupt))
    for arr in (system.A, system.x_star, system.b, system.c):
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    buf.write(np.ascontiguousarray(system.corrupt_support, dtype="<u8").tobytes())
    Path(path).write_bytes(buf.getvalue())


def load_system(path) -> CorruptedSystem:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, m, n, beta, seed, magnitude, k = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise ValueError(f"{path}: not a system file (bad magic)")
    expected = _HEADER.size + 8 * (m * n + n + 2 * m + k)
    if len(data) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(data)}")
    off = _HEADER.size

    def take(count, dtype="<f8"):
        nonlocal off
        arr = np.frombuffer(data, dtype=dtype, count=count, offset=off)
        off += 8 * count
        return arr

    A = take(m * n).reshape(m, n)
    x_star, b, c = take(n), take(m), take(m)
    support = take(k, "<u8").astype(np.int64)
    return CorruptedSystem(A=A.copy(), x_star=x_star.copy(), b=b.copy(), c=c.copy(),
                           corrupt_support=support, beta=beta, seed=seed, magnitude=magnitude)


def write_system_csv(system: CorruptedSystem, path) -> None:
    """Matrix dump: header comments, then one line per equation.

    Columns are ``a_0 .. a_{n-1}, b, c, b_hat, corrupted``.  Floats use ``repr``
    precision so the dump round-trips exactly.
    """
    with open(path, "w", newline="") as fh:
        fh.write(f"# m={system.m},n={system.n},beta={system.beta!r},seed={system.seed},"
                 f"magnitude={system.magnitude!r}\n")
        fh.write("# x_star=" + " ".join(repr(float(v)) for v in system.x_star) + "\n")
        cols = [f"a_{j}" for j in range(system.n)] + ["b", "c", "b_hat", "corrupted"]
        fh.write(",".join(cols) + "\n")
        for i in range(system.m):
            row = [repr(float(v)) for v in system.A[i]]
            row += [repr(float(system.b[i])), repr(float(system.c[i])), repr(float(system.b_hat[i])),
                    str(int(system.corrupt_mask[i]))]
            fh.write(",".join(row) + "\n")


def read_system_csv(path) -> CorruptedSystem:
    with open(path) as fh:
        meta_line = fh.readline()
        xs_line = fh.readline()
        fh.readline()
        body = np.loadtxt(fh, delimiter=",", ndmin=2)
    meta = dict(kv.split("=") for kv in meta_line[1:].strip().split(","))
    n = int(meta["n"])
    x_star = np.array([float(v) for v in xs_line.split("=", 1)[1].split()])
    A, b, c = body[:, :n], body[:, n], body[:, n + 1]
    return CorruptedSystem(A=A, x_star=x_star, b=b, c=c, corrupt_support=np.flatnonzero(body[:, -1]),
                           beta=float(meta["beta"]), seed=int(meta["seed"]),
                           magnitude=float(meta["magnitude"]))
