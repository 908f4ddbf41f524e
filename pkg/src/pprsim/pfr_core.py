"""Exponential functional representation on finite alphabets.

Symbols are the integers ``0..n-1``.  Ratios ``Z_u / p(u)`` use ``+inf``
for zero-mass symbols; ties are broken toward the smaller index.
"""
from dataclasses import dataclass, field

import numpy as np

from .rng import SeededStream, draw_exp


class ParameterError(ValueError):
    pass


@dataclass(frozen=True)
class Pmf:
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ParameterError("pmf must be a non-empty vector")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12 * max(1, p.size):
            raise ParameterError("pmf must be non-negative and sum to 1")
        object.__setattr__(self, "probs", p)

    @classmethod
    def normalized(cls, weights):
        w = np.asarray(weights, dtype=float)
        if w.sum() <= 0:
            raise ParameterError("weights have no mass")
        return cls(w / w.sum())

    @classmethod
    def uniform(cls, n):
        return cls(np.full(n, 1.0 / n))

    def __len__(self):
        return self.probs.size

    def log(self):
        with np.errstate(divide="ignore"):
            return np.log(self.probs)


@dataclass
class ExpProcess:
    marks: np.ndarray
    seed: int = None
    substream_id: int = None
    counter: int = None

    def __post_init__(self):
        self.marks = np.asarray(self.marks, dtype=float)
        if np.any(self.marks <= 0):
            raise ParameterError("marks must be positive")

    @classmethod
    def generate(cls, stream, size):
        start = stream.counter
        marks = draw_exp(stream, size)
        return cls(marks, stream.seed, stream.substream_id, start)

    def regenerate(self):
        return ExpProcess.generate(SeededStream(self.seed, self.substream_id, self.counter), self.marks.size)

    def __len__(self):
        return self.marks.size


def _probs(p):
    return p.probs if isinstance(p, Pmf) else np.asarray(p, dtype=float)


def _ratios(marks, probs):
    with np.errstate(divide="ignore"):
        return np.where(probs > 0, marks / np.where(probs > 0, probs, 1.0), np.inf)


def efr_argmin(proc, p):
    marks = proc.marks if isinstance(proc, ExpProcess) else np.asarray(proc)
    probs = _probs(p)
    if probs.shape[-1] != marks.shape[-1]:
        raise ParameterError("alphabet mismatch")
    if not np.all(probs.sum(axis=-1) > 0):
        raise ParameterError("pmf has no mass")
    return np.argmin(_ratios(marks, probs), axis=-1)


def efr_ranks(proc, p):
    """1-based rank of every symbol when sorted by Z_u / p(u)."""
    marks = proc.marks if isinstance(proc, ExpProcess) else np.asarray(proc)
    r = _ratios(marks, _probs(p))
    order = np.argsort(r, axis=-1, kind="stable")
    ranks = np.empty_like(order)
    np.put_along_axis(ranks, order, np.arange(1, r.shape[-1] + 1), axis=-1)
    return ranks


def efr_rank(proc, p, u):
    ranks = efr_ranks(proc, p)
    return int(ranks[u]) if np.ndim(ranks) == 1 else ranks[..., u]


@dataclass
class RefinedJoint:
    table: np.ndarray
    harmonic: float = field(default=None)

    @property
    def shape(self):
        return self.table.shape


def harmonic(n):
    return float(np.sum(1.0 / np.arange(1, n + 1)))


def refine(q_joint, proc):
    """Refine a joint pmf over V x U by an exponential process on U.

    ``q_joint`` has shape (|V|, |U|) or (|U|,) for an empty V.  Rows with
    zero V-mass stay zero.
    """
    q = np.asarray(q_joint, dtype=float)
    flat = q.ndim == 1
    if flat:
        q = q[None, :]
    n_u = q.shape[1]
    if n_u == 0:
        raise ParameterError("empty U alphabet")
    marks = proc.marks if isinstance(proc, ExpProcess) else np.asarray(proc)
    qv = q.sum(axis=1)
    safe = np.where(qv > 0, qv, 1.0)
    cond = q / safe[:, None]
    h = harmonic(n_u)
    ranks = efr_ranks(np.broadcast_to(marks, q.shape), cond)
    table = qv[:, None] / (ranks * h)
    table[qv <= 0] = 0.0
    return RefinedJoint(table[0] if flat else table, h)


def pml_bound(ratio):
    if np.any(np.asarray(ratio) < 0):
        raise ParameterError("ratio must be non-negative")
    return 1.0 - 1.0 / (1.0 + np.asarray(ratio, dtype=float))


def mismatch_rhs(p1, p2):
    """Exact E_{U~p1}[1 - (1 + p1/p2(U))^-1]."""
    a, b = _probs(p1), _probs(p2)
    m = a > 0
    with np.errstate(divide="ignore"):
        r = np.where(b[m] > 0, a[m] / np.where(b[m] > 0, b[m], 1), np.inf)
    return float(np.sum(a[m] * pml_bound(r)))


def estimate_mismatch(p1, p2, trials, seed, substream_id=0):
    if trials <= 0:
        raise ParameterError("trials must be positive")
    a, b = _probs(p1), _probs(p2)
    if a.shape != b.shape:
        raise ParameterError("alphabet mismatch")
    marks = draw_exp(SeededStream(seed, substream_id), (trials, a.size))
    hits = efr_argmin(marks, a) != efr_argmin(marks, b)
    est = hits.mean()
    return float(est), float(np.sqrt(est * (1 - est) / trials))
