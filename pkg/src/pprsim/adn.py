"""One-shot coding over acyclic discrete networks (ADNs).

Nodes are numbered from 0 and act in index order.  Node ``i`` observes
``Y_i`` drawn from a channel that may depend on every earlier input and
output, decodes some earlier auxiliaries, draws its own auxiliary ``U_i``
with the Poisson functional representation and emits ``X_i``.

Every node owns one exponential process over its auxiliary alphabet (the
shared "codebook").  A decoding list ``decode=(a_1, ..., a_d)`` with
``unique=d'`` means: recover ``U_{a_1..a_d'}`` exactly and use
``U_{a_d'+1..a_d}`` only softly, through the refinement chain.

All laws are dense and small.  The ideal joint law of ``(Y_i, U_i, X_i)``
over all nodes is enumerated exactly and every conditional the decoders
need is read from it.
"""
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .pfr_core import refine
from .rng import SeededStream, draw_exp

DENSE_CAP = 1 << 20


def _pmf(p, n, what):
    p = np.asarray(p, dtype=float).ravel()
    if p.size != n:
        raise ValueError(f"{what}: expected {n} entries, got {p.size}")
    if np.any(p < 0) or abs(p.sum() - 1) > 1e-9:
        raise ValueError(f"{what}: not a pmf")
    return p


def _inv_cdf(c, u):
    """Sample from the pmf whose cumulative sums are ``c``."""
    return min(int(np.searchsorted(c, u * c[-1], side="left")), c.size - 1)


def _argmin(marks, p):
    # same rule as efr_argmin: zero-mass symbols score +inf, ties go low
    return int(np.argmin(marks / p))


@dataclass
class Network:
    """Channels ``channels[i](xs, ys) -> pmf over Y_i`` with alphabet sizes."""
    y_sizes: Sequence[int]
    x_sizes: Sequence[int]
    channels: Sequence[Callable]

    def __post_init__(self):
        if not len(self.y_sizes) == len(self.x_sizes) == len(self.channels):
            raise ValueError("inconsistent node count")

    @property
    def n(self):
        return len(self.channels)


@dataclass
class NodeCode:
    u_size: int
    p_u: Callable  # (y, ubar) -> pmf over U_i
    p_x: Callable  # (y, u, ubar) -> pmf over X_i
    decode: tuple = ()
    unique: int = 0

    def __post_init__(self):
        self.decode = tuple(self.decode)
        if not 0 <= self.unique <= len(self.decode):
            raise ValueError("unique count exceeds the decoding list")
        if len(set(self.decode)) != len(self.decode):
            raise ValueError("decoding list repeats a node")


@dataclass
class CodingSpec:
    nodes: Sequence[NodeCode]

    def validate(self, net):
        if len(self.nodes) != net.n:
            raise ValueError("one NodeCode per node is required")
        for i, nc in enumerate(self.nodes):
            if any(not 0 <= a < i for a in nc.decode):
                raise ValueError(f"node {i} decodes a node that does not precede it")


@dataclass
class ErrorSet:
    predicate: Callable  # (xs, ys) -> bool

    def __call__(self, xs, ys):
        return bool(self.predicate(tuple(xs), tuple(ys)))


def _ycol(i):
    return 3 * i


def _ucol(i):
    return 3 * i + 1


def _xcol(i):
    return 3 * i + 2


class IdealJoint:
    """Exact law of (Y_i, U_i, X_i)_{i} when every node decodes correctly."""

    def __init__(self, net, spec, cap=DENSE_CAP):
        spec.validate(net)
        self.net, self.spec, self.cap = net, spec, cap
        self.sizes = []
        for i in range(net.n):
            self.sizes += [net.y_sizes[i], spec.nodes[i].u_size, net.x_sizes[i]]
        rows, probs = [()], np.ones(1)
        for i, nc in enumerate(spec.nodes):
            new_rows, new_p = [], []
            for r, pr in zip(rows, probs):
                xs = r[2::3]
                ys = r[0::3]
                py = _pmf(net.channels[i](xs, ys), net.y_sizes[i], f"channel {i}")
                for y in np.flatnonzero(py):
                    ubar = tuple(r[_ucol(a)] for a in nc.decode[:nc.unique])
                    pu = _pmf(nc.p_u(int(y), ubar), nc.u_size, f"P(U_{i}|.)")
                    for u in np.flatnonzero(pu):
                        px = _pmf(nc.p_x(int(y), int(u), ubar), net.x_sizes[i], f"P(X_{i}|.)")
                        for x in np.flatnonzero(px):
                            new_rows.append(r + (int(y), int(u), int(x)))
                            new_p.append(pr * py[y] * pu[u] * px[x])
            if len(new_rows) > cap:
                raise ValueError("ideal support exceeds the dense-table cap")
            rows, probs = new_rows, np.array(new_p)
        self.rows = np.array(rows, dtype=np.int64)
        self.probs = probs
        self._marg = {}

    def marginal(self, cols):
        """Dense table of the marginal law of ``cols``."""
        cols = tuple(cols)
        if cols not in self._marg:
            shape = tuple(self.sizes[c] for c in cols)
            if math.prod(shape) > self.cap:
                raise ValueError("marginal table exceeds the dense-table cap")
            flat = np.zeros(max(math.prod(shape), 1))
            idx = np.ravel_multi_index(tuple(self.rows[:, c] for c in cols), shape) if cols else 0
            np.add.at(flat, idx, self.probs)
            self._marg[cols] = flat.reshape(shape)
        return self._marg[cols]

    def _key(self, cols, rows):
        k = np.zeros(len(rows), dtype=np.int64)
        for c in cols:
            k = k * self.sizes[c] + rows[:, c]
        return k

    def prob_at(self, cols, rows=None):
        """P(cols = value of each given outcome row); sparse, no cap."""
        rows = self.rows if rows is None else rows
        cols = tuple(cols)
        if not cols:
            return np.ones(len(rows))
        if math.prod(self.sizes[c] for c in cols) >= 2 ** 62:
            raise ValueError("too many variables for a joint key")
        if ("s",) + cols not in self._marg:
            keys, inv = np.unique(self._key(cols, self.rows), return_inverse=True)
            self._marg[("s",) + cols] = (keys, np.bincount(inv.ravel(), weights=self.probs))
        keys, mass = self._marg[("s",) + cols]
        k = self._key(cols, rows)
        pos = np.minimum(np.searchsorted(keys, k), len(keys) - 1)
        return np.where(keys[pos] == k, mass[pos], 0.0)

    def cond_at(self, target, given, rows=None):
        return self.prob_at(tuple(target) + tuple(given), rows) / self.prob_at(tuple(given), rows)

    # decoder-side tables ------------------------------------------------
    def chain_table(self, i, j, k, hats, y):
        """P(Ubar_k, Ubar_{k+1..d} | Ubar_{<j} = hats, Y_i = y) normalised over Ubar_k.

        j and k are 0-based positions in node i's decoding list (k >= j).
        Unreachable conditioning values give a uniform column.
        """
        a = self.spec.nodes[i].decode
        free = [_ucol(a[m]) for m in range(k, len(a))]
        fixed = [_ucol(a[m]) for m in range(j)] + [_ycol(i)]
        shape = tuple(self.sizes[c] for c in free)
        if math.prod(shape) > self.cap:
            raise ValueError("decoder table exceeds the dense-table cap")
        sel = np.all(self.rows[:, fixed] == np.array(tuple(hats) + (y,)), axis=1)
        t = np.zeros(math.prod(shape))
        np.add.at(t, np.ravel_multi_index(tuple(self.rows[sel][:, c] for c in free), shape), self.probs[sel])
        t = t.reshape(shape)
        s = t.sum(axis=0, keepdims=True)
        return np.where(s > 0, t / np.where(s > 0, s, 1), 1.0 / t.shape[0])

    # bound --------------------------------------------------------------
    def bound_B(self, i, j, rows=None):
        """B_{i,j} at each outcome row (j is the 0-based unique-decoding step)."""
        rows = self.rows if rows is None else rows
        nodes = self.spec.nodes
        a = nodes[i].decode
        d = len(a)
        gamma = math.prod(math.log(nodes[a[k]].u_size) + 1 for k in range(j + 1, d))
        out = np.full(len(rows), float(gamma))
        for k in range(j, d):
            src = nodes[a[k]]
            num_given = tuple(_ucol(b) for b in src.decode[:src.unique]) + (_ycol(a[k]),)
            num = self.cond_at((_ucol(a[k]),), num_given, rows)
            den_given = tuple(_ucol(a[m]) for m in range(d) if not j <= m <= k) + (_ycol(i),)
            den = self.cond_at((_ucol(a[k]),), den_given, rows)
            with np.errstate(divide="ignore"):
                out *= num / den + (1.0 if k > j else 0.0)
        return out

    def bound_sum(self, rows=None):
        rows = self.rows if rows is None else rows
        tot = np.zeros(len(rows))
        for i, nc in enumerate(self.spec.nodes):
            for j in range(nc.unique):
                tot += self.bound_B(i, j, rows)
        return tot

    def in_error(self, error_set, rows=None):
        rows = self.rows if rows is None else rows
        return np.array([error_set(r[2::3], r[0::3]) for r in rows], dtype=float)


def bound_B(joint, i, j, sample):
    """B_{i,j} for one ideal outcome (a full row of (y, u, x) per node)."""
    return float(joint.bound_B(i, j, np.asarray(sample, dtype=np.int64)[None, :])[0])


def bound_total(net, spec, error_set, mc_samples=None, seed=0, joint=None):
    """E[min{1_E + sum_ij B_ij, 1}] under the ideal law.

    Exact by enumeration when ``mc_samples`` is None, otherwise a Monte
    Carlo average over ideal outcomes drawn from the enumerated law.
    """
    joint = joint or IdealJoint(net, spec)
    if mc_samples is None:
        rows, w = joint.rows, joint.probs
    else:
        u = SeededStream(seed, 0).uniform(mc_samples)
        pick = np.minimum(np.searchsorted(np.cumsum(joint.probs), u * joint.probs.sum()), len(joint.probs) - 1)
        rows, w = joint.rows[pick], np.full(mc_samples, 1.0 / mc_samples)
    val = np.minimum(joint.in_error(error_set, rows) + joint.bound_sum(rows), 1.0)
    return float(np.dot(w, val))


# ------------------------------------------------------------- the scheme

@dataclass
class SchemeResult:
    error_rate: float          # actual outputs land in the error set
    error_stderr: float
    failure_rate: float        # ideal in error set, or some unique decode differs from the ideal
    failure_stderr: float
    trials: int
    ideal_samples: np.ndarray = field(default=None, repr=False)


class _Runner:
    def __init__(self, joint):
        self.joint, self.net, self.nodes = joint, joint.net, joint.spec.nodes
        self._tables, self._pu, self._px, self._py = {}, {}, {}, {}

    def table(self, i, j, k, hats, y):
        key = (i, j, k, hats, y)
        if key not in self._tables:
            self._tables[key] = self.joint.chain_table(i, j, k, hats, y)
        return self._tables[key]

    def pu(self, i, y, ubar):
        key = (i, y, ubar)
        if key not in self._pu:
            self._pu[key] = _pmf(self.nodes[i].p_u(y, ubar), self.nodes[i].u_size, f"P(U_{i}|.)")
        return self._pu[key]

    def cdf_x(self, i, y, u, ubar):
        key = (i, y, u, ubar)
        if key not in self._px:
            self._px[key] = np.cumsum(_pmf(self.nodes[i].p_x(y, u, ubar), self.net.x_sizes[i], f"P(X_{i}|.)"))
        return self._px[key]

    def cdf_y(self, i, xs, ys):
        key = (i, xs, ys)
        if key not in self._py:
            self._py[key] = np.cumsum(_pmf(self.net.channels[i](xs, ys), self.net.y_sizes[i], f"channel {i}"))
        return self._py[key]

    def decode(self, i, y, marks):
        a = self.nodes[i].decode
        d = len(a)
        hats = ()
        for j in range(self.nodes[i].unique):
            q = np.ones(())
            for k in range(d - 1, j, -1):
                joint = self.table(i, j, k, hats, y) * q[None, ...]
                n_u = joint.shape[0]
                flat = joint.reshape(n_u, -1).T
                q = refine(flat, marks[a[k]]).table.T.reshape(joint.shape)
            t = self.table(i, j, j, hats, y) * q[None, ...]
            tilde = t.reshape(t.shape[0], -1).sum(axis=1)
            if not tilde.sum() > 0:
                tilde = np.ones_like(tilde)
            hats = hats + (_argmin(marks[a[j]], tilde),)
        return hats

    def simulate(self, marks, unif, genie=False):
        xs, ys, us, hats_all = (), (), [], []
        for i, nc in enumerate(self.nodes):
            y = _inv_cdf(self.cdf_y(i, xs, ys), unif[2 * i])
            if genie:
                ubar = tuple(us[a] for a in nc.decode[:nc.unique])
            else:
                ubar = self.decode(i, y, marks)
            u = _argmin(marks[i], self.pu(i, y, ubar))
            x = _inv_cdf(self.cdf_x(i, y, u, ubar), unif[2 * i + 1])
            xs, ys = xs + (x,), ys + (y,)
            us.append(u)
            hats_all.append(ubar)
        return xs, ys, us, hats_all


def run_scheme(net, spec, error_set, master_seed, trials, keep_ideal=False, joint=None):
    """Run the coded network ``trials`` times next to its genie-aided ideal twin.

    Both copies share the codebooks and all channel and output noise, so
    they agree until a node mis-decodes.  Returns rates with standard errors.
    """
    joint = joint or IdealJoint(net, spec)
    runner = _Runner(joint)
    sizes = [nc.u_size for nc in spec.nodes]
    offs = np.concatenate([[0], np.cumsum(sizes)])
    all_marks = draw_exp(SeededStream(master_seed, 0), (trials, int(offs[-1])))
    all_unif = SeededStream(master_seed, 1).uniform((trials, 2 * net.n))
    err = np.zeros(trials, dtype=bool)
    fail = np.zeros(trials, dtype=bool)
    ideal = np.zeros((trials, 3 * net.n), dtype=np.int64) if keep_ideal else None
    with np.errstate(divide="ignore"):
        for t in range(trials):
            marks = [all_marks[t, offs[i]:offs[i + 1]] for i in range(net.n)]
            ix, iy, iu, _ = runner.simulate(marks, all_unif[t], genie=True)
            ax, ay, _, hats = runner.simulate(marks, all_unif[t])
            truth = [tuple(iu[a] for a in nc.decode[:nc.unique]) for nc in spec.nodes]
            err[t] = error_set(ax, ay)
            fail[t] = error_set(ix, iy) or any(h != g for h, g in zip(hats, truth))
            if keep_ideal:
                ideal[t, 0::3], ideal[t, 1::3], ideal[t, 2::3] = iy, iu, ix

    def rate(v):
        p = float(v.mean())
        return p, math.sqrt(p * (1 - p) / trials)
    return SchemeResult(*rate(err), *rate(fail), trials, ideal)


# --------------------------------------------------------------- presets
# Messages ride inside auxiliaries as product symbols: (payload, m) is
# stored as payload * L + m.  Each preset also carries the closed form of
# its own corollary, evaluated with a separate grouping helper so that it
# can be cross-checked against the generic bound.

def _delta(n, k):
    p = np.zeros(n)
    p[k] = 1.0
    return p


def _uniform(n):
    return np.full(n, 1.0 / n)


def _group_prob(probs, arrays):
    if not arrays:
        return np.ones(len(probs))
    _, inv = np.unique(np.stack(arrays, axis=1), axis=0, return_inverse=True)
    inv = inv.ravel()
    return np.bincount(inv, weights=probs)[inv]


def _cp(probs, target, given=()):
    return _group_prob(probs, list(target) + list(given)) / _group_prob(probs, list(given))


def _expect_min(joint, terms):
    return float(np.dot(joint.probs, np.minimum(terms, 1.0)))


@dataclass
class Preset:
    name: str
    net: Network
    spec: CodingSpec
    error: ErrorSet
    corollary: Callable = None  # IdealJoint -> closed-form bound

    def joint(self):
        return IdealJoint(self.net, self.spec)


def build_p2p(channel, L, p_x=None):
    """Point-to-point: node 0 encodes M ~ Unif[L], node 1 decodes it."""
    ch = np.asarray(channel, dtype=float)
    nx, ny = ch.shape
    px = _uniform(nx) if p_x is None else np.asarray(p_x, dtype=float)
    net = Network([L, ny], [nx, L], [lambda xs, ys: _uniform(L), lambda xs, ys: ch[xs[0]]])
    spec = CodingSpec([
        NodeCode(nx * L, lambda y, ub: np.outer(px, _delta(L, y)).ravel(), lambda y, u, ub: _delta(nx, u // L)),
        NodeCode(1, lambda y, ub: [1.0], lambda y, u, ub: _delta(L, ub[0] % L), decode=(0,), unique=1),
    ])

    def corollary(j):
        x, y = j.rows[:, _xcol(0)], j.rows[:, _ycol(1)]
        return _expect_min(j, L * _cp(j.probs, [x]) / _cp(j.probs, [x], [y]))
    return Preset("p2p", net, spec, ErrorSet(lambda xs, ys: xs[1] != ys[0]), corollary)


def build_gelfand_pinsker(p_s, p_u_s, x_of, channel, L):
    """State S known at the encoder; ``channel[x, s]`` is the law of Y."""
    ps, pus, ch = (np.asarray(a, dtype=float) for a in (p_s, p_u_s, channel))
    ns, nu = pus.shape
    nx, _, ny = ch.shape
    net = Network([L * ns, ny], [nx, L], [
        lambda xs, ys: np.outer(_uniform(L), ps).ravel(),
        lambda xs, ys: ch[xs[0], ys[0] % ns]])
    spec = CodingSpec([
        NodeCode(nu * L, lambda y, ub: np.outer(pus[y % ns], _delta(L, y // ns)).ravel(),
                 lambda y, u, ub: _delta(nx, x_of(u // L, y % ns))),
        NodeCode(1, lambda y, ub: [1.0], lambda y, u, ub: _delta(L, ub[0] % L), decode=(0,), unique=1),
    ])

    def corollary(j):
        u, s, y = j.rows[:, _ucol(0)] // L, j.rows[:, _ycol(0)] % ns, j.rows[:, _ycol(1)]
        return _expect_min(j, L * _cp(j.probs, [u], [s]) / _cp(j.probs, [u], [y]))
    return Preset("gelfand_pinsker", net, spec, ErrorSet(lambda xs, ys: xs[1] != ys[0] // ns), corollary)


def _wz_core(name, p_x, p_t_x, p_u_x, z_of, n_z, L, bad):
    px, ptx, pux = (np.asarray(a, dtype=float) for a in (p_x, p_t_x, p_u_x))
    nx, nt = ptx.shape
    nu = pux.shape[1]
    net = Network([nx, L * nt], [L, n_z], [
        lambda xs, ys: px,
        lambda xs, ys: np.outer(_delta(L, xs[0]), ptx[ys[0]]).ravel()])
    spec = CodingSpec([
        NodeCode(nu * L, lambda y, ub: np.outer(pux[y], _uniform(L)).ravel(), lambda y, u, ub: _delta(L, u % L)),
        NodeCode(1, lambda y, ub: [1.0], lambda y, u, ub: _delta(n_z, z_of(ub[0] // L, y % nt)),
                 decode=(0,), unique=1),
    ])
    error = ErrorSet(lambda xs, ys: bad(ys[0], ys[1] % nt, xs[1]))

    def corollary(j):
        x, t = j.rows[:, _ycol(0)], j.rows[:, _ycol(1)] % nt
        u = j.rows[:, _ucol(0)] // L
        z = np.array([z_of(a, b) for a, b in zip(u, t)])
        e = np.array([bad(a, b, c) for a, b, c in zip(x, t, z)], dtype=float)
        return _expect_min(j, e + _cp(j.probs, [u], [x]) / (L * _cp(j.probs, [u], [t])))
    return Preset(name, net, spec, error, corollary)


def build_wyner_ziv(p_x, p_t_x, p_u_x, z_of, n_z, L, dist, D):
    """Lossy description of X in L symbols with side information T at the decoder."""
    return _wz_core("wyner_ziv", p_x, p_t_x, p_u_x, z_of, n_z, L, lambda x, t, z: dist(x, z) > D)


def build_coding_for_computing(f, p_x, p_t_x, p_u_x, z_of, n_z, L, dist, D):
    """As Wyner-Ziv, but the decoder targets f(X, T)."""
    return _wz_core("computing", p_x, p_t_x, p_u_x, z_of, n_z, L, lambda x, t, z: dist(f(x, t), z) > D)


def build_mac(p_x1, p_x2, channel, L1, L2):
    """Two encoders, one decoder with decoding order U_2 then U_1."""
    p1, p2, ch = (np.asarray(a, dtype=float) for a in (p_x1, p_x2, channel))
    n1, n2, ny = ch.shape
    net = Network([L1, L2, ny], [n1, n2, L1 * L2], [
        lambda xs, ys: _uniform(L1), lambda xs, ys: _uniform(L2), lambda xs, ys: ch[xs[0], xs[1]]])
    spec = CodingSpec([
        NodeCode(n1 * L1, lambda y, ub: np.outer(p1, _delta(L1, y)).ravel(), lambda y, u, ub: _delta(n1, u // L1)),
        NodeCode(n2 * L2, lambda y, ub: np.outer(p2, _delta(L2, y)).ravel(), lambda y, u, ub: _delta(n2, u // L2)),
        NodeCode(1, lambda y, ub: [1.0], lambda y, u, ub: _delta(L1 * L2, (ub[1] % L1) * L2 + ub[0] % L2),
                 decode=(1, 0), unique=2),
    ])
    error = ErrorSet(lambda xs, ys: xs[2] != ys[0] * L2 + ys[1])

    def corollary(j):
        x1, x2, y = j.rows[:, _xcol(0)], j.rows[:, _xcol(1)], j.rows[:, _ycol(2)]
        g = math.log(L1 * n1) + 1
        pr = j.probs
        t1 = g * L1 * L2 * _cp(pr, [x1, x2]) / _cp(pr, [x1, x2], [y])
        t2 = g * L2 * _cp(pr, [x2], [x1]) / _cp(pr, [x2], [x1, y])
        t3 = L1 * _cp(pr, [x1], [x2]) / _cp(pr, [x1], [x2, y])
        return _expect_min(j, t1 + t2 + t3)
    return Preset("mac", net, spec, error, corollary)


def build_broadcast(p_u1u2, x_of, channel, L1, L2):
    """Marton-style coding; the encoder is split into two nodes.

    Node 0 picks (U_1, M_1) and passes U_1 on; node 1 picks (U_2, M_2)
    given U_1 and sends X = x(U_1, U_2); nodes 2 and 3 are the receivers.
    ``channel[x, y1, y2]`` is the joint broadcast law.
    """
    pj, ch = np.asarray(p_u1u2, dtype=float), np.asarray(channel, dtype=float)
    n1, n2 = pj.shape
    nx, ny1, ny2 = ch.shape
    pu1 = pj.sum(axis=1)
    pu2_u1 = pj / np.where(pu1 > 0, pu1, 1)[:, None]

    def y2_law(xs, ys):
        row = ch[xs[1], ys[2]]
        return row / row.sum()
    net = Network([L1, n1 * L2, ny1, ny2], [n1, nx, L1, L2], [
        lambda xs, ys: _uniform(L1),
        lambda xs, ys: np.outer(_delta(n1, xs[0]), _uniform(L2)).ravel(),
        lambda xs, ys: ch[xs[1]].sum(axis=1),
        y2_law])
    spec = CodingSpec([
        NodeCode(n1 * L1, lambda y, ub: np.outer(pu1, _delta(L1, y)).ravel(), lambda y, u, ub: _delta(n1, u // L1)),
        NodeCode(n2 * L2, lambda y, ub: np.outer(pu2_u1[y // L2], _delta(L2, y % L2)).ravel(),
                 lambda y, u, ub: _delta(nx, x_of(y // L2, u // L2))),
        NodeCode(1, lambda y, ub: [1.0], lambda y, u, ub: _delta(L1, ub[0] % L1), decode=(0,), unique=1),
        NodeCode(1, lambda y, ub: [1.0], lambda y, u, ub: _delta(L2, ub[0] % L2), decode=(1,), unique=1),
    ])
    error = ErrorSet(lambda xs, ys: xs[2] != ys[0] or xs[3] != ys[1] % L2)

    def corollary(j):
        u1, u2 = j.rows[:, _ucol(0)] // L1, j.rows[:, _ucol(1)] // L2
        y1, y2 = j.rows[:, _ycol(2)], j.rows[:, _ycol(3)]
        pr = j.probs
        t = L1 * _cp(pr, [u1]) / _cp(pr, [u1], [y1]) + L2 * _cp(pr, [u2], [u1]) / _cp(pr, [u2], [y2])
        return _expect_min(j, t)
    return Preset("broadcast", net, spec, error, corollary)


def build_relay(p_x, p_yr_x, p_u_yr, xr_of, channel, L):
    """Encoder, relay, decoder; the decoder order is U_1 then U_2 softly.

    ``channel[x, xr, yr]`` is the law of the decoder's observation.
    """
    px, pyr, puy, ch = (np.asarray(a, dtype=float) for a in (p_x, p_yr_x, p_u_yr, channel))
    nx, nyr = pyr.shape
    nu = puy.shape[1]
    nxr, ny = ch.shape[1], ch.shape[3]
    net = Network([L, nyr, ny], [nx, nxr, L], [
        lambda xs, ys: _uniform(L), lambda xs, ys: pyr[xs[0]], lambda xs, ys: ch[xs[0], xs[1], ys[1]]])
    spec = CodingSpec([
        NodeCode(nx * L, lambda y, ub: np.outer(px, _delta(L, y)).ravel(), lambda y, u, ub: _delta(nx, u // L)),
        NodeCode(nu, lambda y, ub: puy[y], lambda y, u, ub: _delta(nxr, xr_of(y, u))),
        NodeCode(1, lambda y, ub: [1.0], lambda y, u, ub: _delta(L, ub[0] % L), decode=(0, 1), unique=1),
    ])

    def corollary(j):
        x, yr, u, y = (j.rows[:, c] for c in (_xcol(0), _ycol(1), _ucol(1), _ycol(2)))
        pr = j.probs
        g = math.log(nu) + 1
        t = g * L * _cp(pr, [x]) / _cp(pr, [x], [u, y]) * (_cp(pr, [u], [yr]) / _cp(pr, [u], [y]) + 1)
        return _expect_min(j, t)
    return Preset("relay", net, spec, ErrorSet(lambda xs, ys: xs[2] != ys[0]), corollary)


def build_cascade(p_xy, p_uv_x, z_of, n_z, L_split, dist, D):
    """Cascade source coding with the first encoder split in two nodes.

    ``L_split = (l1, l2, l3)`` are the sub-message sizes; the first link
    carries l1*l2 symbols and the second l2*l3.
    """
    pxy, puv = np.asarray(p_xy, dtype=float), np.asarray(p_uv_x, dtype=float)
    l1, l2, l3 = L_split
    nx, ny = pxy.shape
    _, nu, nv = puv.shape
    p_x = pxy.sum(axis=1)
    p_y_x = pxy / p_x[:, None]
    p_u_x = puv.sum(axis=2)
    p_v_ux = puv / np.where(p_u_x > 0, p_u_x, 1)[:, :, None]
    n0 = nu * l2

    def node2_u(y, ub):
        v, u, yy = ub[0] // l1, ub[1] // l2, y // (l1 * l2)
        return np.outer(_delta(n_z, z_of(u, v, yy)), _uniform(l3)).ravel()
    net = Network([nx, n0 * nx, ny * l1 * l2, l2 * l3], [n0, l1 * l2, l2 * l3, n_z], [
        lambda xs, ys: p_x,
        lambda xs, ys: _delta(n0 * nx, xs[0] * nx + ys[0]),
        lambda xs, ys: np.outer(p_y_x[ys[0]], _delta(l1 * l2, xs[1])).ravel(),
        lambda xs, ys: _delta(l2 * l3, xs[2])])
    spec = CodingSpec([
        NodeCode(n0, lambda y, ub: np.outer(p_u_x[y], _uniform(l2)).ravel(), lambda y, u, ub: _delta(n0, u)),
        NodeCode(nv * l1, lambda y, ub: np.outer(p_v_ux[y % nx, (y // nx) // l2], _uniform(l1)).ravel(),
                 lambda y, u, ub: _delta(l1 * l2, (u % l1) * l2 + (y // nx) % l2)),
        NodeCode(n_z * l3, node2_u, lambda y, u, ub: _delta(l2 * l3, (y % l2) * l3 + u % l3),
                 decode=(1, 0), unique=2),
        NodeCode(1, lambda y, ub: [1.0], lambda y, u, ub: _delta(n_z, ub[0] // l3), decode=(2, 0), unique=1),
    ])
    error = ErrorSet(lambda xs, ys: dist(ys[0], ys[2] // (l1 * l2), xs[3]) > D)

    def corollary(j):
        x, yy = j.rows[:, _ycol(0)], j.rows[:, _ycol(2)] // (l1 * l2)
        u, v, z = j.rows[:, _ucol(0)] // l2, j.rows[:, _ucol(1)] // l1, j.rows[:, _ucol(2)] // l3
        pr = j.probs
        g = math.log(nu * l2) + 1
        e = np.array([dist(a, b, c) > D for a, b, c in zip(x, yy, z)], dtype=float)
        t = (e + g / (l1 * l2) * _cp(pr, [u, v], [x, yy]) / _cp(pr, [u, v], [yy])
             + g / l1 * _cp(pr, [v], [u, x]) / _cp(pr, [v], [u, yy])
             + 1 / l2 * _cp(pr, [u], [x]) / _cp(pr, [u], [v, yy])
             + g / l3 * _cp(pr, [z], [u, v, yy]) / _cp(pr, [z], [u]) * (_cp(pr, [u], [x]) / (l2 * _cp(pr, [u])) + 1))
        return _expect_min(j, t)
    return Preset("cascade", net, spec, error, corollary)


# ------------------------------------------------------ reference matrix

def _shift_channel(q, eps, step=1):
    """Y = X w.p. 1-eps, else X+step mod q."""
    ch = np.eye(q) * (1 - eps)
    ch[np.arange(q), (np.arange(q) + step) % q] += eps
    return ch


def bsc(p):
    return np.array([[1 - p, p], [p, 1 - p]])


def reference_presets():
    """Small instances whose bounds sit well below 1, keyed by name."""
    out = {}
    out["p2p_bsc"] = build_p2p(bsc(0.1), 2)
    out["p2p"] = build_p2p(_shift_channel(8, 0.05), 2)

    # Gelfand-Pinsker: U leans toward the parity of S, the noise level depends on S
    pus = np.array([[1.0 + 0.5 * (u % 2 == s) for u in range(8)] for s in range(2)])
    pus /= pus.sum(axis=1, keepdims=True)
    gp_ch = np.stack([np.stack([_shift_channel(8, 0.03 + 0.05 * s)[x] for s in range(2)]) for x in range(8)])
    out["gelfand_pinsker"] = build_gelfand_pinsker([0.6, 0.4], pus, lambda u, s: u, gp_ch, 2)

    # lossless Wyner-Ziv: U = X, D = 0
    out["wyner_ziv"] = build_wyner_ziv(_uniform(4), _shift_channel(4, 0.15), np.eye(4), lambda u, t: u, 4, 4,
                                       lambda x, z: int(x != z), 0)
    out["computing"] = build_coding_for_computing(lambda x, t: x % 2, _uniform(4), _shift_channel(4, 0.15),
                                                  np.eye(4), lambda u, t: u % 2, 2, 4,
                                                  lambda a, b: int(a != b), 0)

    q = 16
    one = _shift_channel(q, 0.05)
    mac_ch = np.einsum("ac,bd->abcd", one, one).reshape(q, q, q * q)
    out["mac"] = build_mac(_uniform(q), _uniform(q), mac_ch, 2, 1)

    pj = np.full((8, 8), 1.0)
    pj[np.arange(8), np.arange(8)] += 0.5
    pj /= pj.sum()
    n8 = _shift_channel(8, 0.04)
    bc = np.stack([np.outer(n8[x // 8], n8[x % 8]) for x in range(64)])
    out["broadcast"] = build_broadcast(pj, lambda a, b: 8 * a + b, bc, 2, 2)

    nx = 32
    p_yr = _shift_channel(nx, 0.05)
    p_u = np.zeros((nx, nx // 2))
    p_u[np.arange(nx), np.arange(nx) // 2] = 1.0
    direct = _shift_channel(nx, 0.5)
    relay_ch = np.zeros((nx, nx // 2, nx, nx * (nx // 2)))
    for x in range(nx):
        for xr in range(nx // 2):
            relay_ch[x, xr, :, :] = np.outer(direct[x], _delta(nx // 2, xr)).ravel()
    out["relay"] = build_relay(_uniform(nx), p_yr, p_u, lambda yr, u: u, relay_ch, 2)

    pxy = 0.5 * bsc(0.1)
    puv = np.stack([np.outer(_delta(2, x), [1.0]) for x in range(2)])
    out["cascade"] = build_cascade(pxy, puv, lambda u, v, y: u, 2, (32, 8, 16),
                                   lambda x, y, z: int(x != z), 0)
    return out
