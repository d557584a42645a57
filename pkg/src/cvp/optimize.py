"""Search for minimizing measures.

The optimizer anneals support-point positions with Metropolis moves while
keeping the weights near-optimal through periodic exact sub-solves of the
simplex-constrained quadratic program

    minimize  w^T G w   over  w >= 0, sum w = 1,      G_ij = L(x_i, x_j),

solved by a primal active-set iteration on the bordered KKT system with a
regularized-Newton descent polish (the Gram of the clamped kernel is
indefinite away from minimizers).  Proposal moves: geodesic jitter of one
point with scale tied to the temperature, weight transfer between two
points (occasionally consolidating a point into its strongest-coupled
neighbour, which forms clusters), and relocation of the lightest point to
the lowest value of the potential ell on a coarse probe grid, which
repairs Euler-Lagrange violations directly; every k-th accepted move
triggers an exact weight re-solve.  Cooling ends in a zero-temperature
quench with geometrically shrinking move scale.

A tau-continuation scan runs ascending and descending passes, warm-starts
each tau from its neighbour, keeps the best of warm and cold runs, and
reduces degenerate supports (a support reduction is accepted only when it
does not raise the action beyond a small relative tolerance).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace

import numpy as np

from .manifold import (
    ManifoldModel,
    flag_point,
    lagrangian_cross,
    lagrangian_matrix,
    sample_uniform,
    theta_max,
)
from .measure import WeightedMeasure, action
from .spectral import fibonacci_sphere

_RESOLVE_EVERY = 50      # accepted moves between exact weight sub-solves
_RESYNC_EVERY = 4096     # accepted moves between full recomputations
_TIE_TOL = 1e-12


@dataclass(frozen=True)
class AnnealSchedule:
    """Cooling schedule; temperatures are absolute action scales."""

    t_start: float
    t_end: float
    cooling: float = 0.97
    steps_per_temp: int = 200
    restarts: int = 8
    seed: int = 0

    def __post_init__(self):
        if not (self.t_start > self.t_end > 0):
            raise ValueError("need t_start > t_end > 0")
        if not (0 < self.cooling < 1):
            raise ValueError("cooling must lie in (0, 1)")
        if self.steps_per_temp < 1 or self.restarts < 1:
            raise ValueError("steps_per_temp and restarts must be >= 1")

    @classmethod
    def default(cls, model: ManifoldModel, seed: int = 0, **overrides) -> "AnnealSchedule":
        """t_start = 8 tau^2, t_end = 1e-6 * 8 tau^2, cooling 0.97."""
        scale = model.kernel_scale
        sched = cls(t_start=scale, t_end=1e-6 * scale, seed=seed)
        return replace(sched, **overrides) if overrides else sched

    @classmethod
    def light(cls, model: ManifoldModel, seed: int = 0, **overrides) -> "AnnealSchedule":
        """Shorter schedule for scans and polish passes."""
        scale = model.kernel_scale
        sched = cls(
            t_start=scale,
            t_end=1e-6 * scale,
            cooling=0.93,
            steps_per_temp=80,
            restarts=2,
            seed=seed,
        )
        return replace(sched, **overrides) if overrides else sched


# ---------------------------------------------------------------------------
# exact weight sub-problem


@dataclass(frozen=True)
class WeightSolve:
    weights: np.ndarray
    action: float
    kkt_residual: float
    iterations: int


def _equality_kkt(G, idx):
    """Stationary point of w^T G w restricted to sum(w[idx]) = 1."""
    k = len(idx)
    K = np.zeros((k + 1, k + 1))
    K[:k, :k] = G[np.ix_(idx, idx)]
    K[:k, k] = -1.0
    K[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    try:
        sol = np.linalg.solve(K, rhs)
        if not np.all(np.isfinite(sol)):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    return sol[:k]


def _simplex_qp(G: np.ndarray, warm_free=None) -> WeightSolve:
    """Primal active-set solve of min w^T G w on the probability simplex.

    From a feasible point, steps toward the equality-constrained KKT
    solution of the current free set, stopping at the first weight that
    would turn negative (which joins the active set); at a stationary
    feasible point the most profitable active index is released.
    ``warm_free`` seeds the free set (e.g. the previous support).  Returns
    the best feasible iterate with its KKT residual.
    """
    n = len(G)
    scale = float(np.max(np.abs(G))) or 1.0
    if warm_free is not None and warm_free.shape == (n,) and warm_free.any():
        free = warm_free.copy()
    else:
        free = np.ones(n, dtype=bool)
    w = np.zeros(n)
    w[free] = 1.0 / free.sum()
    released = np.zeros(n, dtype=int)
    best: WeightSolve | None = None

    def record(it) -> WeightSolve:
        nonlocal best
        g = G @ w
        lam = float(w @ g)
        supp = w > 1e-14
        res_eq = float(np.max(np.abs(g[supp] - lam))) if supp.any() else 0.0
        res_in = float(max(0.0, np.max(lam - g[~supp], initial=0.0)))
        cand = WeightSolve(w.copy(), lam, max(res_eq, res_in), it)
        if best is None or cand.action < best.action - 1e-15 * scale or (
            abs(cand.action - best.action) <= 1e-15 * scale
            and cand.kkt_residual < best.kkt_residual
        ):
            best = cand
        return cand

    for it in range(6 * n + 80):
        idx = np.flatnonzero(free)
        wf = _equality_kkt(G, idx)
        d = wf - w[idx]
        if float(np.max(np.abs(d))) <= 1e-13:
            cand = record(it + 1)
            active = np.flatnonzero(~free)
            if len(active) == 0:
                break
            g = G @ w
            viol = cand.action - g[active]
            jpos = int(np.argmax(viol))
            j = int(active[jpos])
            if viol[jpos] <= 1e-11 * scale or released[j] >= 5:
                break
            released[j] += 1
            free[j] = True
            peek = _equality_kkt(G, np.flatnonzero(free))
            if peek[int(np.searchsorted(np.flatnonzero(free), j))] <= 1e-14:
                # the face stationary point sits behind the released bound
                # (indefinite Gram); take the line-optimal step toward the
                # violating vertex instead, which strictly descends
                s_now = cand.action
                denom = s_now - 2.0 * g[j] + G[j, j]
                if denom > 0:
                    eps = min(1.0, (s_now - g[j]) / denom)
                else:
                    eps = 1.0
                w *= 1.0 - eps
                w[j] += eps
                free = w > 1e-15
                free[j] = True
            continue
        # longest feasible step toward the stationary point
        alpha = 1.0
        block = -1
        shrink = d < -1e-18
        if shrink.any():
            ratios = w[idx][shrink] / -d[shrink]
            kmin = int(np.argmin(ratios))
            if ratios[kmin] < 1.0:
                alpha = float(ratios[kmin])
                block = int(idx[np.flatnonzero(shrink)[kmin]])
        w[idx] = w[idx] + alpha * d
        np.maximum(w, 0.0, out=w)
        if block >= 0:
            w[block] = 0.0
            free[block] = False
    record(6 * n + 81)
    if best.kkt_residual > 1e-10 * scale:
        # indefinite Gram: the face-stationary steps above may chase
        # saddles; finish with a strict-descent polish
        w_p, its = _descent_polish(G, best.weights, scale)
        w = w_p
        record(best.iterations + its)
    # exact simplex feasibility on the returned iterate
    w_out = np.maximum(best.weights, 0.0)
    w_out /= w_out.sum()
    g = G @ w_out
    lam = float(w_out @ g)
    supp = w_out > 1e-14
    res_eq = float(np.max(np.abs(g[supp] - lam))) if supp.any() else 0.0
    res_in = float(max(0.0, np.max(lam - g[~supp], initial=0.0)))
    return WeightSolve(w_out, lam, max(res_eq, res_in), best.iterations)


def _descent_polish(G: np.ndarray, w0: np.ndarray, scale: float, max_iter: int = 2000):
    """Gradient-projection descent to a first-order KKT point.

    Within the current face, descends along the projected negative
    gradient with an exact line search on the quadratic (strict descent
    for any symmetric G); at face-stationary points either a profitable
    vertex direction is taken or the iteration stops at KKT.  Exact face
    equality solves snap the iterate to machine-precision stationarity
    once the face stabilizes.
    """
    n = len(G)
    w = np.maximum(np.asarray(w0, dtype=float), 0.0)
    w /= w.sum()
    g = G @ w
    S = float(w @ g)
    it = 0
    for it in range(1, max_iter + 1):
        supp = w > 1e-14
        idx = np.flatnonzero(supp)
        wf = _equality_kkt(G, idx)
        if wf.min() >= -1e-12:
            # snap: the face's exact stationary point is feasible
            w_try = np.zeros(n)
            w_try[idx] = np.maximum(wf, 0.0)
            w_try /= w_try.sum()
            S_try = float(w_try @ G @ w_try)
            if S_try <= S + 1e-15 * scale:
                w, S = w_try, S_try
                g = G @ w
                supp = w > 1e-14
                idx = np.flatnonzero(supp)
                wf = w[idx]
        lam = S
        res_eq = float(np.max(np.abs(g[idx] - lam)))
        j = int(np.argmin(g))
        viol_in = lam - g[j]
        if max(res_eq, viol_in) <= 1e-11 * scale:
            break
        if res_eq > 1e-12 * scale:
            # in-face regularized Newton step: shifting the face Hessian
            # PSD makes the constrained direction a guaranteed descent
            k = len(idx)
            gf = G[np.ix_(idx, idx)]
            eigmin = float(np.linalg.eigvalsh(gf)[0])
            mu = max(0.0, -eigmin) + 1e-12 * scale
            K = np.zeros((k + 1, k + 1))
            K[:k, :k] = gf + mu * np.eye(k)
            K[:k, k] = -1.0
            K[k, :k] = 1.0
            rhs = np.zeros(k + 1)
            rhs[:k] = -g[idx]
            try:
                sol = np.linalg.solve(K, rhs)
            except np.linalg.LinAlgError:
                sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
            d = np.zeros(n)
            d[idx] = sol[:k]
            dg = float(d @ g)
            dGd = float(d @ (G @ d))
            gam_max = np.inf
            neg = (d < -1e-18) & supp
            if neg.any():
                gam_max = float(np.min(w[neg] / -d[neg]))
            gam = -dg / dGd if dGd > 0 else gam_max
            gam = min(gam, gam_max)
            if not np.isfinite(gam) or gam <= 0 or dg >= 0:
                break
            w = w + gam * d
        else:
            # face stationary: move toward the most profitable vertex
            num_t = S - g[j]
            den_t = G[j, j] - 2.0 * g[j] + S
            gam = min(1.0, num_t / den_t) if den_t > 0 else 1.0
            w *= 1.0 - gam
            w[j] += gam
        np.maximum(w, 0.0, out=w)
        w /= w.sum()
        g = G @ w
        S = float(w @ g)
    return w, it


def optimal_weights_info(model: ManifoldModel, points) -> WeightSolve:
    return _simplex_qp(lagrangian_matrix(model, points))


def optimal_weights(model: ManifoldModel, points) -> np.ndarray:
    """Weights minimizing the action for fixed support points."""
    return optimal_weights_info(model, points).weights


# ---------------------------------------------------------------------------
# proposal helpers


def _position_scale(model: ManifoldModel) -> float:
    if model.kind == "flag":
        return 1.0
    return theta_max(model)


def _probe_grid(model: ManifoldModel) -> np.ndarray:
    if model.kind == "circle":
        return 2.0 * np.pi * np.arange(192) / 192.0
    if model.kind == "sphere":
        return fibonacci_sphere(256)
    return sample_uniform(model, 96, seed=7)


class _BlockedRng:
    """Pre-drawn uniform/normal blocks; one Generator call per ~16k draws."""

    __slots__ = ("rng", "_u", "_iu", "_n", "_in")

    def __init__(self, rng):
        self.rng = rng
        self._u = rng.random(16384)
        self._iu = 0
        self._n = rng.standard_normal(16384)
        self._in = 0

    def uniform(self) -> float:
        if self._iu >= self._u.shape[0]:
            self._u = self.rng.random(16384)
            self._iu = 0
        v = self._u[self._iu]
        self._iu += 1
        return v

    def normals(self, k: int):
        if self._in + k > self._n.shape[0]:
            self._n = self.rng.standard_normal(max(16384, k))
            self._in = 0
        v = self._n[self._in : self._in + k]
        self._in += k
        return v


class _CircleEngine:
    """Cached-embedding kernel rows for the annealing hot loop.

    ``l_row`` returns an internal buffer that is invalidated by the next
    call; the annealer copies it into the Gram matrix on acceptance.
    """

    def __init__(self, model, pts):
        self.t2 = model.tau**2
        self.pts = np.array(pts, dtype=float, copy=True)
        self.cos = np.cos(self.pts)
        self.sin = np.sin(self.pts)
        probe = _probe_grid(model)
        self.probe = probe
        self.probe_emb = np.stack([np.cos(probe), np.sin(probe)], axis=1)
        self._b1 = np.empty(len(self.pts))
        self._b2 = np.empty(len(self.pts))

    def l_row(self, x):
        # L = 2 t2 (1 + c) (2 - t2 + t2 c), evaluated without allocations
        t2 = self.t2
        b1, b2 = self._b1, self._b2
        np.multiply(self.cos, math.cos(x), out=b1)
        np.multiply(self.sin, math.sin(x), out=b2)
        b1 += b2
        np.multiply(b1, t2, out=b2)
        b2 += 2.0 - t2
        b1 += 1.0
        b1 *= b2
        b1 *= 2.0 * t2
        return np.maximum(0.0, b1, out=b1)

    def set_point(self, i, x):
        self.pts[i] = x
        self.cos[i] = math.cos(x)
        self.sin[i] = math.sin(x)

    def jitter_at(self, x, scale, rand):
        return (x + scale * rand.normals(1)[0]) % (2.0 * np.pi)

    def ell_on_probe(self, w):
        c = self.probe_emb @ np.stack([self.cos, self.sin])
        d = (2.0 * self.t2) * (1.0 + c) * (2.0 - self.t2 * (1.0 - c))
        np.maximum(0.0, d, out=d)
        return d @ w


class _SphereEngine:
    def __init__(self, model, pts):
        self.t2 = model.tau**2
        self.pts = np.array(pts, dtype=float, copy=True)
        self.probe = _probe_grid(model)
        self._b1 = np.empty(len(self.pts))
        self._b2 = np.empty(len(self.pts))

    def l_row(self, x):
        t2 = self.t2
        b1, b2 = self._b1, self._b2
        np.matmul(self.pts, x, out=b1)
        np.multiply(b1, t2, out=b2)
        b2 += 2.0 - t2
        b1 += 1.0
        b1 *= b2
        b1 *= 2.0 * t2
        return np.maximum(0.0, b1, out=b1)

    def set_point(self, i, x):
        self.pts[i] = x

    def jitter_at(self, x, scale, rand):
        v = x + scale * rand.normals(3)
        return v / math.sqrt(v @ v)

    def ell_on_probe(self, w):
        c = self.probe @ self.pts.T
        d = (2.0 * self.t2) * (1.0 + c) * (2.0 - self.t2 * (1.0 - c))
        np.maximum(0.0, d, out=d)
        return d @ w


class _FlagEngine:
    def __init__(self, model, pts):
        self.tau = model.tau
        self.f = model.f
        self.pts = np.array(pts, copy=True)
        self.uc = self.pts[:, 0, :].conj().copy()
        self.vc = self.pts[:, 1, :].conj().copy()
        self.probe = _probe_grid(model)

    def l_row(self, x):
        from .manifold import _flag_kernel_parts

        u, v = x[0], x[1]
        a = self.uc @ u  # <u_i, u>
        b = self.uc @ v  # <u_i, v>
        c = self.vc @ u  # <v_i, u>
        d = self.vc @ v  # <v_i, v>
        vals = _flag_kernel_parts(a, b, c, d, self.tau)
        return np.maximum(0.0, vals, out=vals)

    def set_point(self, i, x):
        self.pts[i] = x
        self.uc[i] = x[0].conj()
        self.vc[i] = x[1].conj()

    def jitter_at(self, x, scale, rand):
        f = self.f
        n = rand.normals(4 * f)
        u = x[0] + scale * (n[:f] + 1j * n[f : 2 * f])
        v = x[1] + scale * (n[2 * f : 3 * f] + 1j * n[3 * f :])
        u = u / np.linalg.norm(u)
        v = v - np.vdot(u, v) * u
        v = v / np.linalg.norm(v)
        return np.stack([u, v])

    def ell_on_probe(self, w):
        from .manifold import lagrangian_cross

        return lagrangian_cross(
            ManifoldModel("flag", self.tau, self.f), self.probe, self.pts
        ) @ w


def _make_engine(model: ManifoldModel, pts):
    if model.kind == "circle":
        return _CircleEngine(model, pts)
    if model.kind == "sphere":
        return _SphereEngine(model, pts)
    return _FlagEngine(model, pts)


def _icosahedron_vertices() -> np.ndarray:
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    base = []
    for s1 in (1.0, -1.0):
        for s2 in (1.0, -1.0):
            base += [(0.0, s1, s2 * phi), (s1, s2 * phi, 0.0), (s2 * phi, 0.0, s1)]
    pts = np.array(base)
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


def _structured_start(model: ManifoldModel, m: int) -> np.ndarray:
    """Quasi-uniform starting configuration (packing-style seed)."""
    if model.kind == "circle":
        return 2.0 * np.pi * np.arange(m) / m
    if model.kind == "sphere":
        if m == 6:
            return np.vstack([np.eye(3), -np.eye(3)])
        if m == 12:
            return _icosahedron_vertices()
        return fibonacci_sphere(m)
    return sample_uniform(model, m, seed=11)


def _pad_measure(model: ManifoldModel, meas: WeightedMeasure, m: int, seed):
    """Pad (or trim) a warm-start measure to m points."""
    pts, w = meas.points, meas.weights
    if len(w) > m:
        order = np.sort(np.argsort(w)[::-1][:m])
        pts, w = pts[order], w[order]
        w = w / w.sum()
    elif len(w) < m:
        extra = sample_uniform(model, m - len(w), seed)
        pts = np.concatenate([pts, extra], axis=0)
        w = np.concatenate([w, np.zeros(m - len(w))])
    return pts, w


# ---------------------------------------------------------------------------
# the annealer


def _anneal_once(model: ManifoldModel, pts, w, sched: AnnealSchedule, rng):
    eng = _make_engine(model, pts)
    w = np.array(w, dtype=float, copy=True)
    m = len(w)
    diag_l0 = model.kernel_scale
    G = lagrangian_matrix(model, eng.pts)
    g = G @ w
    S = float(w @ g)
    best = [S, eng.pts.copy(), w.copy()]
    warm_free = None

    def resolve():
        nonlocal w, g, S, warm_free
        sol = _simplex_qp(G, warm_free)
        warm_free = sol.weights > 1e-14
        S_new = float(sol.weights @ (G @ sol.weights))
        if S_new <= S:
            w = sol.weights
            g = G @ w
            S = S_new
        if S < best[0]:
            best[0], best[1], best[2] = S, eng.pts.copy(), w.copy()

    resolve()
    if m == 1:
        return best

    pos_scale = _position_scale(model)
    rand = _BlockedRng(rng)
    since_resolve = 0
    since_resync = 0
    T = sched.t_start
    while T > sched.t_end:
        # sqrt decay keeps collective rearrangements possible at low T
        jit_scale = pos_scale * math.sqrt(T / sched.t_start)
        for _ in range(sched.steps_per_temp):
            u = rand.uniform()
            if u < 0.32:
                # weight transfer; occasionally consolidate a point into its
                # most strongly coupled neighbour (cluster formation)
                i = int(rand.uniform() * m)
                wi = w[i]
                if wi <= 0.0:
                    continue
                if u < 0.28:
                    j = int(rand.uniform() * m)
                    if i == j:
                        continue
                    delta = rand.uniform() * wi
                else:
                    row = G[i]
                    j = int(np.argmax(row - np.where(np.arange(m) == i, np.inf, 0.0)))
                    if row[j] <= 0.0:
                        continue
                    delta = wi
                dS = 2.0 * delta * (g[j] - g[i]) + delta * delta * (
                    G[i, i] - 2.0 * G[i, j] + G[j, j]
                )
                if dS <= 0.0 or rand.uniform() < math.exp(-dS / T):
                    w[i] = wi - delta
                    w[j] += delta
                    g += delta * (G[j] - G[i])
                    S += dS
                    since_resolve += 1
                    since_resync += 1
            else:
                if u >= 0.95:
                    # relocate the lightest point onto the ell-minimum probe
                    i = int(np.argmin(w))
                    ell_probe = eng.ell_on_probe(w)
                    k = int(np.argmin(ell_probe))
                    x_new = eng.jitter_at(eng.probe[k], 0.02 * pos_scale, rand)
                else:
                    # geodesic jitter at the temperature-tied scale
                    i = int(rand.uniform() * m)
                    x_new = eng.jitter_at(eng.pts[i], jit_scale, rand)
                row = eng.l_row(x_new)
                row[i] = diag_l0
                dS = 2.0 * w[i] * (float(row @ w) - g[i])
                if dS <= 0.0 or rand.uniform() < math.exp(-dS / T):
                    old_row = G[i].copy()
                    eng.set_point(i, x_new)
                    G[i, :] = row
                    G[:, i] = row
                    row -= old_row
                    row *= w[i]
                    g += row
                    g[i] = float(G[i] @ w)
                    S += dS
                    since_resolve += 1
                    since_resync += 1
            if since_resolve >= _RESOLVE_EVERY:
                since_resolve = 0
                resolve()
            elif S < best[0]:
                best[0], best[1], best[2] = S, eng.pts.copy(), w.copy()
            if since_resync >= _RESYNC_EVERY:
                since_resync = 0
                G = lagrangian_matrix(model, eng.pts)
                g = G @ w
                S = float(w @ g)
        T *= sched.cooling
    resolve()

    # zero-temperature quench: strict-descent refinement of the best state
    # with geometrically shrinking move scale
    eng = _make_engine(model, best[1])
    w = best[2].copy()
    G = lagrangian_matrix(model, eng.pts)
    g = G @ w
    S = float(w @ g)
    qscale = 1e-2 * pos_scale
    while qscale > 1e-10 * pos_scale:
        for _ in range(120):
            u = rand.uniform()
            if u < 0.9:
                i = int(rand.uniform() * m)
                x_new = eng.jitter_at(eng.pts[i], qscale, rand)
            else:
                i = int(np.argmin(w))
                x_new = eng.jitter_at(
                    eng.probe[int(np.argmin(eng.ell_on_probe(w)))], qscale, rand
                )
            row = eng.l_row(x_new)
            row[i] = diag_l0
            dS = 2.0 * w[i] * (float(row @ w) - g[i])
            if dS < 0.0:
                old_row = G[i].copy()
                eng.set_point(i, x_new)
                G[i, :] = row
                G[:, i] = row
                row -= old_row
                row *= w[i]
                g += row
                g[i] = float(G[i] @ w)
                S += dS
        sol = _simplex_qp(G, w > 1e-14)
        S_new = float(sol.weights @ (G @ sol.weights))
        if S_new <= S:
            w = sol.weights
            g = G @ w
            S = S_new
        qscale *= 0.5
    S = float(w @ lagrangian_matrix(model, eng.pts) @ w)
    if S < best[0]:
        best[0], best[1], best[2] = S, eng.pts.copy(), w.copy()

    # incremental S accumulates roundoff; re-evaluate the tracked best exactly
    gb = lagrangian_matrix(model, best[1])
    best[0] = float(best[2] @ gb @ best[2])
    return best


def anneal(
    model: ManifoldModel,
    m: int,
    sched: AnnealSchedule | None = None,
    init: WeightedMeasure | None = None,
) -> WeightedMeasure:
    """Simulated annealing over m weighted support points.

    Deterministic per schedule seed.  Restart 0 uses ``init`` when given
    (padded or trimmed to m points), the next restart a quasi-uniform
    structured configuration, the remaining restarts i.i.d. uniform draws.
    The returned action never exceeds that of any initial configuration;
    ties between restarts go to the lowest restart index.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if sched is None:
        sched = AnnealSchedule.default(model)
    results = []
    for r in range(sched.restarts):
        if init is not None and r == 0:
            pts, w = _pad_measure(model, init, m, seed=(sched.seed, r, 101))
        elif r == (0 if init is None else 1):
            pts = _structured_start(model, m)
            w = np.full(m, 1.0 / m)
        else:
            pts = sample_uniform(model, m, seed=(sched.seed, r))
            w = np.full(m, 1.0 / m)
        rng = np.random.default_rng((sched.seed, r, 7))
        results.append(_anneal_once(model, pts, w, sched, rng))
    best_S = min(res[0] for res in results)
    for S, pts, w in results:  # lowest restart index wins ties
        if S <= best_S + _TIE_TOL:
            return WeightedMeasure(pts, w / w.sum()).pruned()
    raise AssertionError("unreachable")


# ---------------------------------------------------------------------------
# cluster merging


def _flag_trace_matrix(model: ManifoldModel, pts) -> np.ndarray:
    """Tr(x_i x_j) from the 2x2 reduction."""
    tau = model.tau
    u, v = pts[:, 0, :], pts[:, 1, :]
    a = u.conj() @ u.T
    b = u.conj() @ v.T
    c = v.conj() @ u.T
    d = v.conj() @ v.T
    p = (1.0 + tau) ** 2
    q = (1.0 - tau) ** 2
    r = (1.0 + tau) * (1.0 - tau)
    return (
        p * (a.real**2 + a.imag**2)
        + q * (d.real**2 + d.imag**2)
        + r * (b.real**2 + b.imag**2 + c.real**2 + c.imag**2)
    )


def _distance_matrix(model: ManifoldModel, pts) -> np.ndarray:
    if model.kind == "circle":
        d = np.abs(pts[:, None] - pts[None, :])
        return np.minimum(d, 2.0 * np.pi - d)
    if model.kind == "sphere":
        c = np.clip(pts @ pts.T, -1.0, 1.0)
        return np.arccos(c)
    # flag: chordal Frobenius distance scaled to match small geodesic angles
    tau = model.tau
    tr = _flag_trace_matrix(model, pts)
    chord_sq = np.maximum(0.0, 2.0 * (2.0 + 2.0 * tau**2 - tr))
    return np.sqrt(chord_sq) / (np.sqrt(2.0) * tau)


def kernel_lipschitz(model: ManifoldModel) -> float:
    """Bound on |dL/d(angle)| along geodesics (conservative on the flag)."""
    tau = model.tau
    if model.kind in ("circle", "sphere"):
        return 4.0 * tau**2 * (1.0 + tau**2)
    return 8.0 * np.sqrt(2.0) * tau * (1.0 + tau) ** 3


def _cluster_components(dist: np.ndarray, radius: float) -> list[list[int]]:
    n = len(dist)
    adj = dist <= radius
    seen = np.zeros(n, dtype=bool)
    comps = []
    for i in range(n):
        if seen[i]:
            continue
        stack, comp = [i], []
        seen[i] = True
        while stack:
            j = stack.pop()
            comp.append(j)
            nbrs = np.flatnonzero(adj[j] & ~seen)
            seen[nbrs] = True
            stack.extend(nbrs.tolist())
        comps.append(sorted(comp))
    return comps


def _cluster_centroid(model: ManifoldModel, pts, w):
    if model.kind == "circle":
        vec = np.array([np.sum(w * np.cos(pts)), np.sum(w * np.sin(pts))])
        if np.linalg.norm(vec) < 1e-14:
            return pts[0]
        return float(np.arctan2(vec[1], vec[0]) % (2.0 * np.pi))
    if model.kind == "sphere":
        vec = w @ pts
        norm = np.linalg.norm(vec)
        return pts[0] if norm < 1e-14 else vec / norm
    # phase-align the pairs to the heaviest member before averaging
    ref = pts[np.argmax(w)]
    usum = np.zeros(model.f, dtype=complex)
    vsum = np.zeros(model.f, dtype=complex)
    for wi, p in zip(w, pts):
        pu = np.vdot(ref[0], p[0])
        pv = np.vdot(ref[1], p[1])
        usum += wi * p[0] * (np.exp(-1j * np.angle(pu)) if abs(pu) > 0 else 1.0)
        vsum += wi * p[1] * (np.exp(-1j * np.angle(pv)) if abs(pv) > 0 else 1.0)
    return flag_point(usum, vsum)


@dataclass(frozen=True)
class MergeResult:
    measure: WeightedMeasure
    action_delta: float
    action_delta_bound: float


def merge_clusters(model: ManifoldModel, m: WeightedMeasure, radius: float) -> MergeResult:
    """Merge support points within geodesic distance ``radius``.

    Clusters are single-linkage components; each is replaced by its
    weight-summed, weighted-centroid representative re-projected to the
    manifold.  The reported bound 2 * Lip(L) * sum_i w_i dist_i dominates
    the actual action change.
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    if radius == 0 or len(m) <= 1:
        return MergeResult(m, 0.0, 0.0)
    dist = _distance_matrix(model, m.points)
    comps = _cluster_components(dist, radius)
    if len(comps) == len(m):
        return MergeResult(m, 0.0, 0.0)
    new_pts, new_w, moved = [], [], 0.0
    for comp in comps:
        w = m.weights[comp]
        pts = m.points[comp]
        if len(comp) == 1:
            new_pts.append(pts[0])
            new_w.append(float(w[0]))
            continue
        total = float(w.sum())
        centroid = _cluster_centroid(model, pts, w / total)
        sub = _distance_matrix(model, np.concatenate([pts, [centroid]], axis=0))
        moved += float(np.sum(w * sub[:-1, -1]))
        new_pts.append(centroid)
        new_w.append(total)
    new_w = np.asarray(new_w)
    merged = WeightedMeasure(np.array(new_pts), new_w / new_w.sum())
    delta = action(model, merged) - action(model, m)
    bound = 2.0 * kernel_lipschitz(model) * moved
    return MergeResult(merged, delta, bound)


# ---------------------------------------------------------------------------
# tau continuation scan


@dataclass(frozen=True)
class ScanRow:
    tau: float
    m: int
    action: float
    support_size_after_merge: int
    classification: str
    el_residual: float

    def __post_init__(self):
        if self.action < 0:
            raise ValueError("action must be non-negative")


def _reduce_support(model, meas, rel_tol=1e-6, seed=0):
    """Greedy support minimization at (numerically) constant action.

    Tries dropping single points with an exact weight re-solve; when that
    stalls, re-anneals the reduced configuration briefly.  Reductions are
    kept only while the action rises by at most rel_tol (relative).
    """
    current = meas.pruned()
    S = action(model, current)
    tol = rel_tol * max(S, 1e-30)
    polish = AnnealSchedule(
        t_start=0.05 * model.kernel_scale,
        t_end=1e-7 * model.kernel_scale,
        cooling=0.9,
        steps_per_temp=60,
        restarts=1,
        seed=seed,
    )
    while current.support_size > 1:
        pts = current.points
        best_keep, best_S = None, np.inf
        for i in range(len(pts)):
            keep = np.arange(len(pts)) != i
            sol = _simplex_qp(lagrangian_matrix(model, pts[keep]))
            if sol.action < best_S:
                best_keep, best_S = keep, sol.action
        if best_S <= S + tol:
            sol = _simplex_qp(lagrangian_matrix(model, pts[best_keep]))
            current = WeightedMeasure(pts[best_keep], sol.weights).pruned()
            S = min(S, best_S)
            continue
        # QP alone cannot drop a point; let a short anneal rearrange positions
        lightest = int(np.argmin(current.weights))
        keep = np.arange(len(pts)) != lightest
        w = current.weights[keep]
        init = WeightedMeasure(pts[keep], w / w.sum())
        cand = anneal(model, len(pts) - 1, polish, init=init)
        S_cand = action(model, cand)
        if S_cand <= S + tol:
            current = cand.pruned()
            S = min(S, S_cand)
            continue
        break
    return current


def tau_scan(
    model_kind: str,
    tau_grid,
    m: int,
    sched: AnnealSchedule | None = None,
    f: int | None = None,
    seed: int = 0,
    cooling: float = 0.93,
    steps_per_temp: int = 80,
    restarts: int = 2,
    merge_radius: float = 1e-3,
    certify_tol: float = 1e-2,
    test_grid_size: int = 1024,
) -> list[ScanRow]:
    """One ScanRow per tau, warm-started continuation in both directions.

    At every tau the best of {cold run, warm run from the neighbouring tau}
    is kept, so warm-started actions are never above cold-start ones; ties
    in action prefer the smaller support.  The kept measure is
    support-reduced, merged and certified into its row.

    A ``sched`` template supplies cooling/steps/restarts/seed; its
    temperatures are rescaled to each tau's kernel scale (the schedule's
    absolute temperatures only make sense at one coupling).
    """
    from .analysis import certify  # deferred to avoid a module cycle

    if sched is not None:
        cooling = sched.cooling
        steps_per_temp = sched.steps_per_temp
        restarts = sched.restarts
        seed = sched.seed
    tau_grid = [float(t) for t in tau_grid]
    if sorted(tau_grid) != tau_grid:
        raise ValueError("tau_grid must be ascending")
    if not tau_grid:
        return []

    def make_model(tau):
        return ManifoldModel(model_kind, tau, f)

    def make_sched(model, nrestarts):
        return AnnealSchedule(
            t_start=model.kernel_scale,
            t_end=1e-6 * model.kernel_scale,
            cooling=cooling,
            steps_per_temp=steps_per_temp,
            restarts=nrestarts,
            seed=seed,
        )

    best: dict[float, WeightedMeasure] = {}

    def key(model, meas):
        return (action(model, meas), meas.support_size)

    for direction in (1, -1):
        prev = None
        for tau in tau_grid[::direction]:
            model = make_model(tau)
            cands = []
            if tau in best:
                cands.append(best[tau])
            else:
                cands.append(anneal(model, m, make_sched(model, restarts)))
            if prev is not None:
                cands.append(anneal(model, m, make_sched(model, 1), init=prev))
            chosen = min(cands, key=lambda c: key(model, c))
            best[tau] = chosen
            prev = chosen

    rows = []
    for tau in tau_grid:
        model = make_model(tau)
        reduced = _reduce_support(model, best[tau], seed=seed)
        merged = merge_clusters(model, reduced, merge_radius).measure.pruned()
        report = certify(model, merged, test_grid_size=test_grid_size, tol=certify_tol)
        rows.append(
            ScanRow(
                tau=tau,
                m=m,
                action=report.action,
                support_size_after_merge=merged.support_size,
                classification=report.classification.value,
                el_residual=report.el_residual,
            )
        )
    return rows


def write_scan_csv(rows: list[ScanRow], fh) -> None:
    """CSV columns: tau,m,action,support_size,classification,el_residual."""
    owned = isinstance(fh, (str, bytes))
    out = open(fh, "w", newline="") if owned else fh
    try:
        writer = csv.writer(out)
        writer.writerow(
            ["tau", "m", "action", "support_size", "classification", "el_residual"]
        )
        for r in rows:
            writer.writerow(
                [repr(r.tau), r.m, repr(r.action), r.support_size_after_merge,
                 r.classification, repr(r.el_residual)]
            )
    finally:
        if owned:
            out.close()


def scan_csv_string(rows: list[ScanRow]) -> str:
    buf = io.StringIO()
    write_scan_csv(rows, buf)
    return buf.getvalue()
