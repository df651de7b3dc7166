"""Factor model container, training logs, and factor snapshots."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from rgrank.errors import DimensionMismatchError


@dataclass
class FactorModel:
    """Two latent factor matrices; scores are rows of P @ Q.T."""

    p: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        self.p = np.ascontiguousarray(self.p, dtype=np.float64)
        self.q = np.ascontiguousarray(self.q, dtype=np.float64)
        if self.p.ndim != 2 or self.q.ndim != 2 or self.p.shape[1] != self.q.shape[1]:
            raise DimensionMismatchError(
                f"factor shapes {self.p.shape} / {self.q.shape} are incompatible")
        if not (np.isfinite(self.p).all() and np.isfinite(self.q).all()):
            raise ValueError("factors must be finite")

    @property
    def n_contexts(self):
        return self.p.shape[0]

    @property
    def n_objects(self):
        return self.q.shape[0]

    @property
    def dim(self):
        return self.p.shape[1]

    def scores(self, contexts=None):
        if contexts is None:
            return self.p @ self.q.T
        return self.p[contexts] @ self.q.T

    def copy(self):
        return FactorModel(self.p.copy(), self.q.copy())

    @classmethod
    def init(cls, n_contexts, n_objects, dim, scheme="uniform", scale=0.01, seed=0):
        """Small seeded init; 'uniform' draws from [-scale, scale],
        'gaussian' from N(0, scale^2)."""
        rng = np.random.default_rng(seed)
        if scheme == "uniform":
            p = rng.uniform(-scale, scale, size=(n_contexts, dim))
            q = rng.uniform(-scale, scale, size=(n_objects, dim))
        elif scheme == "gaussian":
            p = rng.normal(0.0, scale, size=(n_contexts, dim))
            q = rng.normal(0.0, scale, size=(n_objects, dim))
        else:
            raise ValueError(f"unknown init scheme {scheme!r}")
        return cls(p, q)


@dataclass
class EpochLog:
    """One training-progress record.

    ``wall_clock_s`` is cumulative *training* time; evaluation time is
    tracked separately in ``eval_s``.
    """

    epoch: int
    wall_clock_s: float
    train_loss: float
    ndcg: float | None = None
    mrr: float | None = None
    map: float | None = None
    eval_s: float = 0.0

    def as_record(self):
        def fmt(v):
            return "nan" if v is None else f"{v:.10g}"

        return (f"epoch={self.epoch} wall_clock_s={self.wall_clock_s:.6f} "
                f"train_loss={fmt(self.train_loss)} ndcg={fmt(self.ndcg)} "
                f"mrr={fmt(self.mrr)} map={fmt(self.map)} eval_s={self.eval_s:.6f}")


_FACTOR_MAGIC = b"RGF1"


def save_factors(path, model, binary=False):
    """Snapshot: header 'M N K', then P rows, then Q rows.

    Text rows are full-precision decimal; the binary layout is magic +
    little-endian int64 header + float64 P and Q.
    """
    if binary:
        with open(path, "wb") as fh:
            fh.write(_FACTOR_MAGIC)
            np.asarray([model.n_contexts, model.n_objects, model.dim],
                       dtype="<i8").tofile(fh)
            model.p.astype("<f8").tofile(fh)
            model.q.astype("<f8").tofile(fh)
        return
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{model.n_contexts} {model.n_objects} {model.dim}\n")
        for row in model.p:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")
        for row in model.q:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_factors(path):
    with open(path, "rb") as fh:
        if fh.read(4) == _FACTOR_MAGIC:
            m, n, k = np.fromfile(fh, dtype="<i8", count=3)
            p = np.fromfile(fh, dtype="<f8", count=m * k).reshape(m, k)
            q = np.fromfile(fh, dtype="<f8", count=n * k).reshape(n, k)
            return FactorModel(p, q)
    with open(path, encoding="utf-8") as fh:
        m, n, k = map(int, fh.readline().split())
        rows = [np.array(fh.readline().split(), dtype=np.float64) for _ in range(m + n)]
    mat = np.vstack(rows)
    if mat.shape != (m + n, k):
        raise DimensionMismatchError(f"snapshot body {mat.shape} != header ({m + n}, {k})")
    return FactorModel(mat[:m], mat[m:])
