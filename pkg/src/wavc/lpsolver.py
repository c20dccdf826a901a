"""Box- and range-constrained infinity-norm minimisation.

    minimise    || a x + b ||_inf
    subject to  x_lo <= x <= x_hi,   g_lo <= g x <= g_hi

is rewritten in epigraph form (minimise ``t`` with ``-t <= (a x + b)_i <= t``)
and solved by a dense two-phase simplex with Bland's rule.

Constraint numbering used in ``active_set`` and infeasibility reports, for
``r`` residual rows, ``d`` decisions and ``q`` range rows:

    [0, r)              (a x + b)_i <= t
    [r, 2r)             -(a x + b)_i <= t
    [2r, 2r+d)          x_j <= x_hi_j
    [2r+d, 2r+2d)       x_j >= x_lo_j
    [2r+2d, 2r+2d+q)    (g x)_k <= g_hi_k
    [2r+2d+q, 2r+2d+2q) (g x)_k >= g_lo_k
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

PIVOT_TOL = 1e-11
FEAS_TOL = 1e-9


@dataclass
class LinfProblem:
    a: np.ndarray
    b: np.ndarray
    x_lo: np.ndarray
    x_hi: np.ndarray
    g: Optional[np.ndarray] = None
    g_lo: Optional[np.ndarray] = None
    g_hi: Optional[np.ndarray] = None

    def __post_init__(self):
        self.a = np.atleast_2d(np.asarray(self.a, dtype=float))
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        self.x_lo = np.asarray(self.x_lo, dtype=float).reshape(-1)
        self.x_hi = np.asarray(self.x_hi, dtype=float).reshape(-1)
        d = self.x_lo.size
        if self.a.size == 0:
            self.a = np.zeros((self.b.size, d))
        r = self.b.size
        if self.a.shape != (r, d) or self.x_hi.size != d:
            raise ValueError(f"inconsistent shapes: a {self.a.shape}, b {r}, bounds {d}/{self.x_hi.size}")
        if np.any(self.x_lo > self.x_hi):
            raise ValueError("x_lo must not exceed x_hi")
        if self.g is None:
            self.g = np.zeros((0, d))
            self.g_lo = np.zeros(0)
            self.g_hi = np.zeros(0)
        else:
            self.g = np.atleast_2d(np.asarray(self.g, dtype=float))
            self.g_lo = np.asarray(self.g_lo, dtype=float).reshape(-1)
            self.g_hi = np.asarray(self.g_hi, dtype=float).reshape(-1)
            if self.g.size == 0:
                self.g = np.zeros((self.g_lo.size, d))
            if self.g.shape != (self.g_lo.size, d) or self.g_hi.size != self.g_lo.size:
                raise ValueError("inconsistent range-constraint shapes")
            if np.any(self.g_lo > self.g_hi):
                raise ValueError("g_lo must not exceed g_hi")

    @property
    def shape(self):
        return self.a.shape

    def objective(self, x):
        res = self.a @ x + self.b
        return float(np.max(np.abs(res))) if res.size else 0.0

    def violation(self, x):
        """Largest constraint violation of ``x`` (0 when feasible)."""
        v = [0.0, np.max(self.x_lo - x, initial=0.0), np.max(x - self.x_hi, initial=0.0)]
        if self.g.shape[0]:
            gx = self.g @ x
            v += [np.max(self.g_lo - gx, initial=0.0), np.max(gx - self.g_hi, initial=0.0)]
        return float(max(v))


@dataclass
class LinfSolution:
    x: np.ndarray
    objective: float
    status: str
    active_set: list = field(default_factory=list)
    infeasible_constraint: Optional[int] = None
    iterations: int = 0


class _Tableau:
    """Dense simplex tableau over ``A z = rhs, z >= 0`` with ``rhs >= 0``."""

    def __init__(self, a, rhs, basis):
        m, n = a.shape
        self.t = np.zeros((m + 1, n + 1))
        self.t[:m, :n] = a
        self.t[:m, n] = rhs
        self.basis = list(basis)
        self.iterations = 0

    @property
    def m(self):
        return self.t.shape[0] - 1

    def set_objective(self, c):
        """Install costs ``c`` and price out the current basis."""
        n = self.t.shape[1] - 1
        row = np.zeros(n + 1)
        row[:len(c)] = c
        for i, j in enumerate(self.basis):
            if row[j] != 0.0:
                row -= row[j] * self.t[i]
        self.t[-1] = row

    def pivot(self, r, c):
        t = self.t
        t[r] /= t[r, c]
        col = t[:, c].copy()
        col[r] = 0.0
        nz = np.flatnonzero(col)
        if nz.size:
            t[nz] -= np.outer(col[nz], t[r])
        t[:, c] = 0.0
        t[r, c] = 1.0
        self.basis[r] = c
        self.iterations += 1

    def solve(self, allowed, max_iter=50000):
        """Bland's rule: lowest-index improving column, lowest-index leaving variable."""
        t = self.t
        m = self.m
        for _ in range(max_iter):
            cost = t[-1, :-1]
            cand = np.flatnonzero((cost < -FEAS_TOL) & allowed)
            if cand.size == 0:
                return "optimal"
            c = int(cand[0])
            col = t[:m, c]
            ok = col > PIVOT_TOL
            if not np.any(ok):
                return "unbounded"
            ratios = np.full(m, np.inf)
            ratios[ok] = t[:m, -1][ok] / col[ok]
            best = ratios.min()
            ties = np.flatnonzero(ratios <= best + 1e-12 * max(1.0, abs(best)))
            r = int(min(ties, key=lambda i: self.basis[i]))
            self.pivot(r, c)
        raise RuntimeError("simplex iteration limit reached")

    def values(self, n):
        z = np.zeros(n)
        for i, j in enumerate(self.basis):
            if j < n:
                z[j] = self.t[i, -1]
        return z


def _solve_standard(a_ub, h, c, n_var):
    """Minimise ``c z`` subject to ``a_ub z <= h``, ``z >= 0`` (two phases).

    Returns (status, z, row_slack, bad_row, iterations).
    """
    m, n = a_ub.shape
    neg = h < 0
    n_art = int(neg.sum())
    width = n + m + n_art
    a = np.zeros((m, width))
    a[:, :n] = a_ub
    a[:, n:n + m] = np.eye(m)
    rhs = h.copy()
    a[neg] *= -1.0
    rhs[neg] *= -1.0
    basis = []
    art_rows = np.flatnonzero(neg)
    for k, i in enumerate(art_rows):
        a[i, n + m + k] = 1.0
    art_of_row = {int(i): n + m + k for k, i in enumerate(art_rows)}
    for i in range(m):
        basis.append(art_of_row.get(i, n + i))
    tab = _Tableau(a, rhs, basis)
    allowed = np.ones(width, dtype=bool)
    if n_art:
        c1 = np.zeros(width)
        c1[n + m:] = 1.0
        tab.set_objective(c1)
        tab.solve(allowed)
        phase1 = -tab.t[-1, -1]
        if phase1 > FEAS_TOL:
            vals = tab.values(width)
            k = int(np.argmax(vals[n + m:]))
            return "infeasible", None, None, int(art_rows[k]), tab.iterations
        # drive artificials out of the basis where possible
        for i, j in enumerate(list(tab.basis)):
            if j >= n + m:
                row = tab.t[i, :n + m]
                nz = np.flatnonzero(np.abs(row) > PIVOT_TOL)
                if nz.size:
                    tab.pivot(i, int(nz[0]))
        allowed[n + m:] = False
    c2 = np.zeros(width)
    c2[:n] = c
    tab.set_objective(c2)
    status = tab.solve(allowed)
    if status != "optimal":
        return status, None, None, None, tab.iterations
    z = tab.values(width)
    slack = z[n:n + m]
    return "optimal", z[:n], slack, None, tab.iterations


def _rows(p):
    """Inequality rows ``A [y, t] <= h`` with ``x = x_lo + y``, ``y >= 0``."""
    r, d = p.a.shape
    q = p.g.shape[0]
    base = p.a @ p.x_lo + p.b
    ones = np.ones((r, 1))
    rows = [np.hstack([p.a, -ones]), np.hstack([-p.a, -ones]),
            np.hstack([np.eye(d), np.zeros((d, 1))]), np.hstack([-np.eye(d), np.zeros((d, 1))])]
    h = [-base, base, p.x_hi - p.x_lo, np.zeros(d)]
    if q:
        gx0 = p.g @ p.x_lo
        rows += [np.hstack([p.g, np.zeros((q, 1))]), np.hstack([-p.g, np.zeros((q, 1))])]
        h += [p.g_hi - gx0, gx0 - p.g_lo]
    return np.vstack(rows), np.concatenate(h)


def solve_linf(p, prefer=None):
    """Minimise ``||a x + b||_inf`` over the box and range constraints.

    Parameters
    ----------
    p : LinfProblem
    prefer : array, optional
        Among optimal points, return one closest to ``prefer`` in the 1-norm
        (a second lexicographic stage).  Without it the first optimal vertex
        found is returned.

    Returns
    -------
    LinfSolution
        ``status`` is ``"optimal"`` or ``"infeasible"``; an infeasible result
        names one offending constraint in ``infeasible_constraint``.
    """
    r, d = p.a.shape
    if d == 0:
        q = p.g.shape[0]
        hi_bad = np.flatnonzero(p.g_hi < -FEAS_TOL)
        lo_bad = np.flatnonzero(p.g_lo > FEAS_TOL)
        if hi_bad.size or lo_bad.size:
            idx = 2 * r + int(hi_bad[0]) if hi_bad.size else 2 * r + q + int(lo_bad[0])
            return LinfSolution(np.zeros(0), float("nan"), "infeasible", infeasible_constraint=idx)
        return LinfSolution(np.zeros(0), p.objective(np.zeros(0)), "optimal")
    a_ub, h = _rows(p)
    c = np.zeros(d + 1)
    c[d] = 1.0
    status, z, slack, bad, iters = _solve_standard(a_ub, h, c, d + 1)
    if status == "infeasible":
        return LinfSolution(np.full(d, np.nan), float("nan"), "infeasible",
                            infeasible_constraint=bad, iterations=iters)
    if status != "optimal":
        raise RuntimeError(f"unexpected simplex status {status}")
    y, tval = z[:d], z[d]
    if prefer is not None and r:
        y, iters2 = _closest_optimal(a_ub, h, d, tval, np.asarray(prefer, float) - p.x_lo, y)
        iters += iters2
    x = np.clip(p.x_lo + y, p.x_lo, p.x_hi)
    obj = p.objective(x)
    a_full, h_full = _rows(p)
    lhs = a_full @ np.concatenate([x - p.x_lo, [obj]])
    active = [int(i) for i in np.flatnonzero(np.abs(h_full - lhs) <= 1e-9 * max(1.0, obj))]
    return LinfSolution(x, obj, "optimal", active, None, iters)


def _closest_optimal(a_ub, h, d, tval, target, y0):
    """Second stage: minimise ``sum |y - target|`` with ``t <= t*``."""
    # variables [y (d), t, u (d)];  u >= y - target, u >= target - y
    m = a_ub.shape[0]
    tcap = tval + FEAS_TOL * max(1.0, abs(tval))
    rows = [np.hstack([a_ub, np.zeros((m, d))]),
            np.concatenate([np.zeros(d), [1.0], np.zeros(d)])[None, :],
            np.hstack([np.eye(d), np.zeros((d, 1)), -np.eye(d)]),
            np.hstack([-np.eye(d), np.zeros((d, 1)), -np.eye(d)])]
    hh = np.concatenate([h, [tcap], target, -target])
    c = np.concatenate([np.zeros(d + 1), np.ones(d)])
    status, z, _, _, iters = _solve_standard(np.vstack(rows), hh, c, 2 * d + 1)
    if status != "optimal":
        return y0, iters
    return z[:d], iters
