"""Bounded-variable primal simplex (revised form, explicit basis inverse).

Solves::

    minimize    c @ x
    subject to  A_ub @ x <= b_ub
                A_eq @ x == b_eq
                lo <= x <= hi        (either side may be infinite)

Inequality rows get slack columns.  Without a starting basis the engine
runs phase I on artificial variables; a caller may instead pass a basis
(e.g. the optimum of a neighbouring problem) which is used directly when it
is primal feasible.  Pricing is Dantzig's largest reduced cost; after a run
of degenerate pivots the engine switches to Bland's smallest-index rule
(entering and leaving) until a pivot makes progress again.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import SolverError

AT_LOWER, AT_UPPER, FREE, BASIC = 0, 1, 2, 3
_REFACTOR_EVERY = 100
_PIVOT_TOL = 1e-9
_FEAS_TOL = 1e-10


@dataclass
class LPResult:
    x: np.ndarray
    fun: float
    iterations: int
    reduced_costs: np.ndarray  # structural variables
    status: np.ndarray  # structural variables: AT_LOWER / AT_UPPER / FREE / BASIC
    basis: np.ndarray  # column indices into [structural | slack]
    at_upper: np.ndarray  # bool over [structural | slack]
    duals: np.ndarray


class _Revised:
    def __init__(self, A, b, lo, hi, tol, bland_after, max_iter):
        self.sparse = sp.issparse(A)
        self.A = A.tocsc() if self.sparse else np.asarray(A, dtype=float)
        self.m, self.n = A.shape
        self.b = b
        self.lo, self.hi = lo.copy(), hi.copy()
        self.tol, self.bland_after, self.max_iter = tol, bland_after, max_iter
        self.x = np.zeros(self.n)
        self.state = np.zeros(self.n, dtype=np.int8)
        self.allowed = np.ones(self.n, dtype=bool)
        self.iterations = 0
        if self.sparse:
            self._indptr, self._indices, self._data = self.A.indptr, self.A.indices, self.A.data
            self._AT = self.A.T.tocsr()
        else:
            self._AT = self.A.T

    def set_nonbasic_default(self, at_upper=None):
        lo, hi = self.lo, self.hi
        up = np.isinf(lo) & np.isfinite(hi)
        if at_upper is not None:
            up = up | (at_upper & np.isfinite(hi))
        self.x = np.where(up, hi, np.where(np.isfinite(lo), lo, 0.0))
        self.state = np.where(up, AT_UPPER, np.where(np.isfinite(lo), AT_LOWER, FREE)).astype(np.int8)

    def column(self, j):
        if not self.sparse:
            return self.Binv @ self.A[:, j]
        s, e = self._indptr[j], self._indptr[j + 1]
        return self.Binv[:, self._indices[s:e]] @ self._data[s:e]

    def install_basis(self, basis):
        self.basis = np.asarray(basis, dtype=np.intp).copy()
        self.state[self.basis] = BASIC
        self.refactor()

    def refactor(self):
        B = self.A[:, self.basis]
        if self.sparse:
            B = B.toarray()
        try:
            self.Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError:
            raise SolverError("basis matrix is singular") from None
        nonbasic = self.state != BASIC
        rhs = self.b - self.A[:, nonbasic] @ self.x[nonbasic]
        self.x[self.basis] = self.Binv @ rhs

    def primal_feasible(self, tol=1e-9):
        xb = self.x[self.basis]
        scale = np.maximum(1.0, np.abs(xb))
        return bool(np.all(xb >= self.lo[self.basis] - tol * scale)
                    and np.all(xb <= self.hi[self.basis] + tol * scale))

    def reduced_costs(self, c):
        y = self.Binv.T @ c[self.basis]
        d = c - self._AT @ y
        d[self.basis] = 0.0
        return d, y

    def _sense(self):
        # +1: improving when d > 0 (at upper); -1: when d < 0 (at lower); 0: never
        sense = np.zeros(self.n)
        sense[self.state == AT_LOWER] = -1.0
        sense[self.state == AT_UPPER] = 1.0
        sense[~self.allowed] = 0.0
        return sense

    def optimize(self, c):
        tol = self.tol
        degenerate_run = 0
        since_refactor = 0
        sense = self._sense()
        free = np.flatnonzero((self.state == FREE) & self.allowed)
        while True:
            d, _ = self.reduced_costs(c)
            score = d * sense
            if free.size:
                score[free] = np.abs(d[free])
            bland = degenerate_run >= self.bland_after
            if bland:
                cand = np.flatnonzero(score > tol)
                if cand.size == 0:
                    return
                q = int(cand[0])
            else:
                q = int(np.argmax(score))
                if score[q] <= tol:
                    return
            if self.iterations >= self.max_iter:
                raise SolverError(f"iteration cap {self.max_iter} exceeded")
            direction = 1.0 if d[q] < 0 else -1.0
            col = self.column(q) * direction
            basis = self.basis
            xb = self.x[basis]
            lb, ub = self.lo[basis], self.hi[basis]
            step = self.hi[q] - self.lo[q]
            r = -1
            if self.m:
                r, step = self._ratio_test(col, xb, lb, ub, step, bland)
            if not np.isfinite(step):
                raise SolverError("linear program is unbounded")
            self.iterations += 1
            degenerate_run = degenerate_run + 1 if step <= 1e-12 else 0
            self.x[basis] = xb - step * col
            self.x[q] += direction * step
            if r < 0:
                self.state[q] = AT_UPPER if direction > 0 else AT_LOWER
                sense[q] = 1.0 if direction > 0 else -1.0
                continue
            leaving = basis[r]
            to_lower = col[r] > 0
            self.x[leaving] = lb[r] if to_lower else ub[r]
            self.state[leaving] = AT_LOWER if to_lower else AT_UPPER
            if self.allowed[leaving]:
                sense[leaving] = -1.0 if to_lower else 1.0
            self.state[q] = BASIC
            sense[q] = 0.0
            if free.size and q in free:
                free = free[free != q]
            basis[r] = q
            since_refactor += 1
            if since_refactor >= _REFACTOR_EVERY:
                self.refactor()
                since_refactor = 0
            else:
                self._eta_update(r, col * direction)

    def _ratio_test(self, col, xb, lb, ub, step, bland):
        """Harris two-pass ratio test.

        Pass one finds the longest step allowed when every bound is relaxed
        by ``_FEAS_TOL``; pass two picks, among the rows blocking within that
        step, the one with the largest pivot magnitude (lowest basis index
        under Bland's rule).  Returns ``(row, step)``; row -1 is a bound flip.
        """
        dec = col > _PIVOT_TOL
        inc = col < -_PIVOT_TOL
        with np.errstate(divide="ignore", invalid="ignore"):
            room = np.where(dec, xb - lb, np.where(inc, ub - xb, np.inf))
            mag = np.abs(col)
            relaxed = np.where(dec | inc, (room + _FEAS_TOL) / mag, np.inf)
            exact = np.where(dec | inc, np.maximum(room, 0.0) / mag, np.inf)
        limit = relaxed.min()
        if not limit < step:
            return -1, step
        rows = np.flatnonzero(exact <= limit)
        if bland:
            r = int(rows[np.argmin(self.basis[rows])])
        else:
            r = int(rows[np.argmax(mag[rows])])
        return r, float(exact[r])

    def _eta_update(self, r, col):
        Binv = self.Binv
        piv = Binv[r] / col[r]
        f = col.copy()
        f[r] = 0.0
        Binv -= np.outer(f, piv)
        Binv[r] = piv


def solve_lp(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, bounds=None,
             max_iter=50000, tol=1e-9, bland_after=25, starts=()):
    """Minimise ``c @ x``; see module docstring for the constraint form.

    ``bounds`` is a sequence of ``(lo, hi)`` pairs (``None`` = infinite) or a
    single pair applied to every variable; the default is ``x >= 0``.
    ``starts`` is a sequence of ``(basis, at_upper)`` candidate starting
    bases over the ``[structural | slack]`` columns (as returned in
    ``LPResult``); the first primal feasible one is used, otherwise phase I
    runs from scratch.

    Raises SolverError on infeasibility, unboundedness or when ``max_iter``
    pivots are exceeded; the error carries the instance for inspection.
    """
    c = np.asarray(c, dtype=float).ravel()
    n = c.size
    A_ub = _as_matrix(A_ub, n)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float).ravel()
    A_eq = _as_matrix(A_eq, n)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).ravel()
    lo, hi = _parse_bounds(bounds, n)
    try:
        return _solve(c, A_ub, b_ub, A_eq, b_eq, lo, hi, max_iter, tol, bland_after, starts)
    except SolverError as exc:
        exc.instance = dict(c=c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, lo=lo, hi=hi)
        raise


def _as_matrix(A, n):
    """Sparse input stays sparse (CSR); anything else becomes a dense array."""
    if A is None:
        return np.zeros((0, n))
    if sp.issparse(A):
        return sp.csr_matrix(A)
    return np.atleast_2d(np.asarray(A, dtype=float)).reshape(-1, n)


def _parse_bounds(bounds, n):
    if bounds is None:
        return np.zeros(n), np.full(n, np.inf)
    if len(bounds) == 2 and not np.iterable(bounds[0]):
        bounds = [bounds] * n
    lo = np.array([-np.inf if b[0] is None else b[0] for b in bounds], dtype=float)
    hi = np.array([np.inf if b[1] is None else b[1] for b in bounds], dtype=float)
    if np.any(lo > hi):
        raise SolverError("inconsistent variable bounds")
    return lo, hi


def _solve(c, A_ub, b_ub, A_eq, b_eq, lo, hi, max_iter, tol, bland_after, starts):
    n = c.size
    m_ub, m_eq = len(b_ub), len(b_eq)
    m = m_ub + m_eq
    b_rows = np.concatenate([b_ub, b_eq])
    if sp.issparse(A_ub) or sp.issparse(A_eq):
        A_rows = sp.vstack([sp.csr_matrix(A_ub), sp.csr_matrix(A_eq)]).tocsr()
        slack = sp.vstack([sp.identity(m_ub), sp.csr_matrix((m_eq, m_ub))])
        A_real = sp.hstack([A_rows, slack]).tocsc()
    else:
        A_real = np.hstack([np.vstack([A_ub, A_eq]), np.eye(m, m_ub)])
    n_real = n + m_ub
    lo_real = np.concatenate([lo, np.zeros(m_ub)])
    hi_real = np.concatenate([hi, np.full(m_ub, np.inf)])
    c_real = np.concatenate([c, np.zeros(m_ub)])

    eng = None
    for basis, at_upper in starts:
        if basis is None or len(basis) != m:
            continue
        trial = _Revised(A_real, b_rows, lo_real, hi_real, tol, bland_after, max_iter)
        trial.set_nonbasic_default(None if at_upper is None else np.asarray(at_upper, bool))
        try:
            trial.install_basis(basis)
        except SolverError:
            continue
        if trial.primal_feasible():
            eng = trial
            break

    if eng is None:
        eng = _phase_one(A_real, b_rows, lo_real, hi_real, m_ub, tol, bland_after, max_iter)

    if eng.n > n_real:  # redundant rows keep zero artificials in the basis
        c_real = np.concatenate([c_real, np.zeros(eng.n - n_real)])
    eng.optimize(c_real)
    eng.refactor()
    d, y = eng.reduced_costs(c_real)
    x = eng.x[:n].copy()
    return LPResult(x=x, fun=float(c @ x), iterations=eng.iterations, reduced_costs=d[:n],
                    status=eng.state[:n].copy(), basis=eng.basis.copy(),
                    at_upper=eng.state[:n_real] == AT_UPPER, duals=y)


def _phase_one(A_real, b, lo, hi, m_ub, tol, bland_after, max_iter):
    m, n_real = A_real.shape
    n = n_real - m_ub
    probe = _Revised(A_real, b, lo, hi, tol, bland_after, max_iter)
    probe.set_nonbasic_default()
    x0 = probe.x
    resid = b - A_real @ x0
    need_art = np.ones(m, dtype=bool)
    need_art[:m_ub] = resid[:m_ub] < 0
    art_rows = np.flatnonzero(need_art)
    k = art_rows.size
    signs = np.where(resid[art_rows] >= 0, 1.0, -1.0)
    if sp.issparse(A_real):
        art = sp.csc_matrix((signs, (art_rows, np.arange(k))), shape=(m, k))
        A = sp.hstack([A_real, art]).tocsc()
    else:
        art = np.zeros((m, k))
        art[art_rows, np.arange(k)] = signs
        A = np.hstack([A_real, art])
    eng = _Revised(A, b, np.concatenate([lo, np.zeros(k)]), np.concatenate([hi, np.full(k, np.inf)]),
                   tol, bland_after, max_iter)
    eng.set_nonbasic_default()
    basis = np.empty(m, dtype=np.intp)
    slack_rows = np.flatnonzero(~need_art)
    basis[slack_rows] = n + slack_rows
    basis[art_rows] = n_real + np.arange(k)
    eng.install_basis(basis)
    if k:
        c1 = np.zeros(n_real + k)
        c1[n_real:] = 1.0
        eng.optimize(c1)
        infeas = eng.x[n_real:].sum()
        scale = max(1.0, np.abs(b).max(initial=0.0))
        if infeas > 1e-8 * scale:
            raise SolverError(f"linear program is infeasible (phase I residual {infeas:.3e})")
        eng.hi[n_real:] = 0.0
        eng.x[n_real:] = 0.0
        eng.allowed[n_real:] = False
        _drive_out_artificials(eng, n_real)
    if np.any(eng.basis >= n_real):
        # redundant rows keep a zero artificial in the basis; solve on the extended system
        return eng
    out = _Revised(A_real, b, lo, hi, tol, bland_after, max_iter)
    out.x = eng.x[:n_real].copy()
    out.state = eng.state[:n_real].copy()
    out.iterations = eng.iterations
    out.install_basis(eng.basis)
    return out


def _drive_out_artificials(eng, first_art):
    for r in range(eng.m):
        if eng.basis[r] < first_art:
            continue
        row = eng.Binv[r] @ eng.A[:, :first_art]
        row = np.asarray(row).ravel()
        row[eng.basis[eng.basis < first_art]] = 0.0
        j = np.flatnonzero(np.abs(row) > 1e-9)
        if j.size:
            q = int(j[np.argmax(np.abs(row[j]))])
            old = eng.basis[r]
            eng.state[old] = AT_LOWER
            eng.state[q] = BASIC
            eng.basis[r] = q
            eng.refactor()


def check_optimality(result, tol=1e-9):
    """True when no nonbasic variable has an improving reduced cost."""
    d, s = result.reduced_costs, result.status
    bad = (((s == AT_LOWER) & (d < -tol)) | ((s == AT_UPPER) & (d > tol))
           | ((s == FREE) & (np.abs(d) > tol)) | ((s == BASIC) & (np.abs(d) > tol)))
    return not bad.any()
