"""Small dense quadratic programs for the per-step safety filter.

The solver is a primal active-set method sized for filter problems: a few
dozen variables, tens of rows.  Equality-constrained subproblems are solved
through the symmetric KKT system with a minimum-norm least-squares fallback,
which tolerates the semidefinite Hessian of the filter cost (the gain shares
carry no cost).  Feasible starts come from an elastic phase 1 with a single
violation variable.  Ties are broken by lowest constraint index, so repeated
solves of the same data return bit-identical answers.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

FEAS_TOL = 1e-8
STAT_TOL = 1e-6
# shares with no cost make the KKT system rank-deficient; steps below this
# size are treated as stationary
STEP_TOL = 1e-11
# vanishing share cost keeps the filter Hessian definite so every active-set
# subproblem has a unique minimizer; the induced bias sits far below STAT_TOL
SHARE_REG = 1e-8


class QpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    MAX_ITER = "maxiter"


@dataclass
class QpProblem:
    """minimize 0.5 z' H z + g' z  subject to  A_ineq z >= b_ineq, A_eq z = b_eq.

    H must be symmetric positive semidefinite.  Optional box bounds lb <= z <= ub
    are folded into inequality rows (appended after A_ineq, lower bounds first).
    """

    H: np.ndarray
    g: np.ndarray
    A_ineq: np.ndarray | None = None
    b_ineq: np.ndarray | None = None
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None


@dataclass
class QpSolution:
    z: np.ndarray
    status: QpStatus
    kkt_residual: float
    active_set: list = field(default_factory=list)
    iterations: int = 0


def _stacked_rows(p, n):
    blocks_a = []
    blocks_b = []
    if p.A_ineq is not None and len(p.A_ineq):
        blocks_a.append(np.atleast_2d(np.asarray(p.A_ineq, dtype=float)))
        blocks_b.append(np.atleast_1d(np.asarray(p.b_ineq, dtype=float)))
    if p.lb is not None:
        for i, v in enumerate(np.asarray(p.lb, dtype=float)):
            if np.isfinite(v):
                row = np.zeros(n)
                row[i] = 1.0
                blocks_a.append(row[None, :])
                blocks_b.append(np.array([v]))
    if p.ub is not None:
        for i, v in enumerate(np.asarray(p.ub, dtype=float)):
            if np.isfinite(v):
                row = np.zeros(n)
                row[i] = -1.0
                blocks_a.append(row[None, :])
                blocks_b.append(np.array([-v]))
    if blocks_a:
        return np.vstack(blocks_a), np.concatenate(blocks_b)
    return np.zeros((0, n)), np.zeros(0)


def _kkt_step(H, g, A_w, b_w):
    """Minimizer and multipliers of the equality-constrained subproblem.

    Solved as the symmetric KKT system via minimum-norm least squares so a
    singular reduced Hessian still yields a deterministic answer.  Returns
    (z, mult, ok) where ok is False when the system is inconsistent (the
    subproblem has no stationary point).
    """
    n = H.shape[0]
    m = A_w.shape[0]
    if m == 0:
        kkt = H
        rhs = -g
    else:
        kkt = np.zeros((n + m, n + m))
        kkt[:n, :n] = H
        kkt[:n, n:] = A_w.T
        kkt[n:, :n] = A_w
        rhs = np.concatenate([-g, b_w])
    scale = 1.0 + float(np.abs(rhs).max(initial=0.0))
    sol = None
    try:
        # direct solve with iterative refinement; active-row errors get
        # amplified by the row norms on the way back to original units, so
        # push the residual down to near machine precision while it keeps
        # improving
        cand = np.linalg.solve(kkt, rhs)
        for _ in range(3):
            r = rhs - kkt @ cand
            if float(np.abs(r).max(initial=0.0)) <= 1e-14 * scale:
                break
            cand = cand + np.linalg.solve(kkt, r)
        r = rhs - kkt @ cand
        if float(np.abs(r).max(initial=0.0)) <= 1e-9 * scale:
            sol = cand
    except np.linalg.LinAlgError:
        pass
    if sol is None:
        # singular system: minimum-norm solve, refined the same way
        sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
        for _ in range(2):
            r = rhs - kkt @ sol
            if float(np.abs(r).max(initial=0.0)) <= 1e-12 * scale:
                break
            dsol, *_ = np.linalg.lstsq(kkt, r, rcond=None)
            sol = sol + dsol
    ok = float(np.abs(kkt @ sol - rhs).max(initial=0.0)) <= 1e-7 * scale
    # stationarity uses H z + g = A_w' lambda, so flip the KKT multiplier sign
    return sol[:n], -sol[n:], ok


def _independent_rows(E, A, rows):
    """Greedy subset of rows whose unit normals stay numerically independent
    of the equality rows and of each other.  Working sets built from raw
    activity can contain near-parallel rows (features seen from almost the
    same direction), and every multiplier downstream turns to noise."""
    keep = []
    M = E
    for i in rows:
        a = A[i]
        if M.shape[0]:
            y, *_ = np.linalg.lstsq(M.T, a, rcond=None)
            if float(np.linalg.norm(a - M.T @ y)) <= 1e-6:
                continue
        keep.append(i)
        M = np.vstack([M, a[None, :]])
    return keep


def _active_set_loop(H, g, A, b, E, f, z0, work, max_iter):
    """Primal active-set iteration from a feasible point z0.

    work is the initial working set (indices into A); equality rows E are
    always active.  Returns (z, working set, exit tag, iterations, mult),
    where mult holds the multipliers of the last solved subproblem.
    """
    n_eq = E.shape[0]
    z = z0.copy()
    work = sorted(work)
    mult = np.zeros(n_eq)
    for it in range(1, max_iter + 1):
        A_w = np.vstack([E, A[work]]) if (n_eq or work) else np.zeros((0, len(z)))
        b_w = np.concatenate([f, b[work]]) if (n_eq or work) else np.zeros(0)
        z_new, mult, ok = _kkt_step(H, g, A_w, b_w)
        if not ok:
            # inconsistent working set.  Dependent rows sneak in through
            # drops, not just adds, and a dependent row spans no new part of
            # the manifold, so retiring it costs nothing and restores rank.
            # On an independent set the least-squares multipliers at the
            # current point still tell which row the subproblem wants gone,
            # and when none is negative and the stationarity fit is clean
            # the point itself is already optimal.
            if work:
                pruned = _independent_rows(E, A, work)
                if len(pruned) < len(work):
                    work = pruned
                    continue
                grad = H @ z + g
                lam_ls, *_ = np.linalg.lstsq(A_w.T, grad, rcond=None)
                lam_ineq = lam_ls[n_eq:]
                if lam_ineq.size and float(lam_ineq.min()) < -1e-9:
                    work.pop(int(np.argmin(lam_ineq)))
                    continue
                fit = float(np.linalg.norm(grad - A_w.T @ lam_ls))
                if fit <= 1e-7 * (1.0 + float(np.linalg.norm(grad))):
                    return z, work, "optimal", it, lam_ls
            return z, work, "degenerate", it, mult
        step = z_new - z
        if float(np.abs(step).max(initial=0.0)) <= STEP_TOL * (1.0 + float(np.abs(z).max(initial=0.0))):
            lam = mult[n_eq:]
            if lam.size == 0 or float(lam.min()) >= -1e-9:
                return z_new, work, "optimal", it, mult
            # drop the most negative multiplier; ties favor the lowest index
            z = z_new
            work.pop(int(np.argmin(lam)))
            continue
        # largest feasible step toward z_new.  A candidate row that lies in
        # the span of the working rows cannot genuinely block: the step is
        # tangent to it up to the dependence defect, so its directional rate
        # is noise and stacking it would only wreck the multipliers.  Such a
        # winner is handled out of band and the ratio test rerun without it.
        cand = np.zeros(A.shape[0], dtype=bool)
        if A.shape[0]:
            ap = A @ step
            res = A @ z - b
            cand = ap < -1e-12
            cand[work] = False
        dropped = False
        while True:
            alpha = 1.0
            block = -1
            idx = np.nonzero(cand)[0]
            if idx.size:
                ratios = res[idx] / (-ap[idx])
                best = float(ratios.min())
                if best < alpha - 1e-15:
                    alpha = best
                    # ties favor the lowest constraint index
                    block = int(idx[ratios <= best + 1e-15].min())
            if block < 0 or not A_w.shape[0]:
                break
            y, *_ = np.linalg.lstsq(A_w.T, A[block], rcond=None)
            if float(np.linalg.norm(A[block] - A_w.T @ y)) > 1e-6:
                break
            lam = mult[n_eq:]
            if lam.size and float(lam.min()) < -1e-9:
                # the subproblem wants a row gone anyway: keep whatever
                # progress this step allows and retire the most negative
                # multiplier instead of adding a redundant row
                z = z + min(max(alpha, 0.0), 1.0) * step
                work.pop(int(np.argmin(lam)))
                dropped = True
                break
            # how badly the row is violated at the subproblem optimum tells
            # a real constraint apart from a numerical twin of the active
            # rows: the defect times a large step is a genuine slope
            committed = False
            if -(res[block] + ap[block]) > 1e-9 * (1.0 + abs(b[block])):
                # genuinely tighter than the rows implying it, so it has to
                # enter.  Giving it weight t shifts each contributor by
                # -t y_i; walk the dual ratio test, retiring the row whose
                # multiplier hits zero first (smallest lam_i / y_i over
                # y_i > 0), until the entrant is independent of the rest.
                # One eviction is not always enough: the dependence can be
                # spread over rows the first victim barely touches.
                lam_w = np.maximum(mult[n_eq:], 0.0)
                trial = list(work)
                a_blk = A[block]
                while True:
                    M = np.vstack([E, A[trial]]) if trial else E
                    if M.shape[0]:
                        yy, *_ = np.linalg.lstsq(M.T, a_blk, rcond=None)
                        defect = float(np.linalg.norm(a_blk - M.T @ yy))
                    else:
                        defect = float(np.linalg.norm(a_blk))
                    if defect > 1e-6:
                        z = z + min(max(alpha, 0.0), 1.0) * step
                        work = sorted(trial + [block])
                        dropped = True
                        committed = True
                        break
                    if not trial:
                        break
                    y_in = yy[n_eq:]
                    pos = y_in > 1e-8
                    if not np.any(pos):
                        # the entrant cannot bind through the dual: its
                        # violation is unreachable from this working set
                        break
                    rd = lam_w[pos] / y_in[pos]
                    j = int(np.nonzero(pos)[0][int(np.argmin(rd))])
                    lam_w = np.maximum(lam_w - float(rd.min()) * y_in, 0.0)
                    lam_w = np.delete(lam_w, j)
                    trial.pop(j)
            if committed:
                break
            # twin at noise level or dual-blocked: ignore it for this step
            cand[block] = False
        if dropped:
            continue
        alpha = min(max(alpha, 0.0), 1.0)
        if block >= 0:
            z = z + alpha * step
            work.append(block)
            work.sort()
        else:
            z = z_new
    return z, work, "maxiter", max_iter, mult


def _certificate(H, g, A, b, E, f, z, work, mult_eq, mult_ineq):
    """Worst KKT violation at z: stationarity, complementarity, primal and
    dual feasibility.  Each piece is measured relative to the size of the
    quantities entering it, so penalty weights spanning many orders do not
    inflate an exact optimum into a rejection.  Returns (worst, primal) so
    the caller can hold primal feasibility to its own tolerance.  Zero only
    at an exact optimum."""
    lam = np.zeros(A.shape[0])
    lam[work] = mult_ineq
    hz = H @ z
    grad = hz + g
    den = 1.0 + max(float(np.abs(hz).max(initial=0.0)),
                    float(np.abs(g).max(initial=0.0)))
    if A.shape[0]:
        alam = A.T @ lam
        grad = grad - alam
        den = max(den, 1.0 + float(np.abs(alam).max(initial=0.0)))
    if E.shape[0]:
        emu = E.T @ mult_eq
        grad = grad - emu
        den = max(den, 1.0 + float(np.abs(emu).max(initial=0.0)))
    stat = float(np.abs(grad).max(initial=0.0)) / den
    comp = 0.0
    feas = 0.0
    dual = 0.0
    if A.shape[0]:
        az = A @ z
        res = az - b
        rden = 1.0 + np.maximum(np.abs(b), np.abs(az))
        feas = float((np.maximum(-res, 0.0) / rden).max())
        comp = float((np.abs(lam * res) / ((1.0 + np.abs(lam)) * rden)).max())
        dual = float(max(0.0, -lam.min())) / (1.0 + float(np.abs(lam).max()))
    if E.shape[0]:
        ez = E @ z
        eden = 1.0 + np.maximum(np.abs(f), np.abs(ez))
        feas = max(feas, float((np.abs(ez - f) / eden).max()))
    return max(stat, comp, feas, dual), feas


def solve(problem, max_iter=None, start=None, warm_work=None):
    """Solve a QP; returns a QpSolution with a KKT residual certificate.

    Optimal status is only reported when relative primal feasibility is
    within 1e-8 and the relative stationarity/complementarity residual
    within 1e-6; otherwise the best iterate comes back tagged MAX_ITER.  A feasible start skips phase 1;
    an infeasible one is quietly discarded.  warm_work proposes a working
    set (row indices) from a related solve: if its subproblem minimizer is
    feasible the iteration starts there, which usually ends it in one check.
    """
    H_orig = 0.5 * (np.asarray(problem.H, dtype=float) + np.asarray(problem.H, dtype=float).T)
    g_orig = np.asarray(problem.g, dtype=float)
    n = H_orig.shape[0]
    A_orig, b = _stacked_rows(problem, n)
    if problem.A_eq is not None and len(problem.A_eq):
        E_orig = np.atleast_2d(np.asarray(problem.A_eq, dtype=float))
        f = np.atleast_1d(np.asarray(problem.b_eq, dtype=float))
    else:
        E_orig = np.zeros((0, n))
        f = np.zeros(0)
    if max_iter is None:
        max_iter = 50 + 10 * (n + A_orig.shape[0])

    # Jacobi column scaling z = D zt normalizes the Hessian diagonal.  Row
    # values A z and the multipliers are untouched, while penalty weights
    # spanning many orders (slack vs share costs) stop wrecking the KKT
    # conditioning.  Everything below the loop maps back to original units.
    diag = np.diag(H_orig)
    D = np.where(diag > 1e-12, np.sqrt(2.0 / np.maximum(diag, 1e-12)), 1.0)
    # cap the amplification: blowing a nearly costless column up to unit
    # curvature rotates every row touching it onto that coordinate axis, and
    # the active-set logic then fights phantom dependences.  Damping heavy
    # columns (large slack weights) is the part that matters; a mildly uneven
    # Hessian diagonal is what the refinement in the KKT solves is for.
    D = np.minimum(D, 1e2)
    H = H_orig * np.outer(D, D)
    g = g_orig * D
    A = A_orig * D[None, :] if A_orig.shape[0] else A_orig
    E = E_orig * D[None, :] if E_orig.shape[0] else E_orig
    # unit-norm constraint rows in the scaled variables, so active-set KKT
    # blocks stay O(1); an internal multiplier maps back as lam / row_norm
    b_orig_units = b
    f_orig_units = f
    if A.shape[0]:
        nu = np.linalg.norm(A, axis=1)
        nu = np.where(nu > 1e-12, nu, 1.0)
        A = A / nu[:, None]
        b = b / nu
    else:
        nu = np.ones(0)
    if E.shape[0]:
        nu_e = np.linalg.norm(E, axis=1)
        nu_e = np.where(nu_e > 1e-12, nu_e, 1.0)
        E = E / nu_e[:, None]
        f = f / nu_e
    else:
        nu_e = np.ones(0)

    z0 = None
    work0 = None
    if warm_work is not None:
        W = sorted({i for i in (int(j) for j in warm_work) if 0 <= i < A.shape[0]})
        W = _independent_rows(E, A, W)
        A_w = np.vstack([E, A[W]]) if (E.shape[0] or W) else np.zeros((0, n))
        b_w = np.concatenate([f, b[W]]) if (E.shape[0] or W) else np.zeros(0)
        z_w, _, okw = _kkt_step(H, g, A_w, b_w)
        if okw:
            feas = not A.shape[0] or float((b - A @ z_w).max()) <= FEAS_TOL
            feas = feas and (not E.shape[0] or float(np.abs(E @ z_w - f).max()) <= FEAS_TOL)
            if feas:
                z0 = z_w
                work0 = W

    if z0 is None and start is not None:
        cand = np.asarray(start, dtype=float) / D
        ok_eq = not E.shape[0] or float(np.abs(E @ cand - f).max()) <= FEAS_TOL
        ok_in = not A.shape[0] or float((b - A @ cand).max()) <= FEAS_TOL
        if ok_eq and ok_in:
            z0 = cand

    # start on the equality manifold
    if z0 is None and E.shape[0]:
        z0, *_ = np.linalg.lstsq(E, f, rcond=None)
        if float(np.abs(E @ z0 - f).max()) > FEAS_TOL:
            return QpSolution(D * z0, QpStatus.INFEASIBLE, np.inf)
    elif z0 is None:
        z0 = np.zeros(n)

    # elastic phase 1: one violation variable t covering every row
    if A.shape[0]:
        viol = float((b - A @ z0).max())
        if viol > FEAS_TOL:
            H1 = np.zeros((n + 1, n + 1))
            H1[n, n] = 1.0
            g1 = np.zeros(n + 1)
            A1 = np.hstack([A, np.ones((A.shape[0], 1))])
            t_row = np.zeros(n + 1)
            t_row[n] = 1.0
            A1 = np.vstack([A1, t_row])
            b1 = np.concatenate([b, [0.0]])
            E1 = np.hstack([E, np.zeros((E.shape[0], 1))]) if E.shape[0] else np.zeros((0, n + 1))
            elastic0 = np.concatenate([z0, [viol + 1.0]])
            z1, w1, tag, _, _ = _active_set_loop(H1, g1, A1, b1, E1, f, elastic0, [], max_iter)
            if tag != "optimal":
                return QpSolution(D * z1[:n], QpStatus.MAX_ITER, np.inf)
            if z1[n] > FEAS_TOL:
                return QpSolution(D * z1[:n], QpStatus.INFEASIBLE, np.inf)
            z0 = z1[:n]

    if work0 is None:
        work0 = [i for i in range(A.shape[0])
                 if abs(float(A[i] @ z0 - b[i])) <= 1e-9] if A.shape[0] else []
        work0 = _independent_rows(E, A, work0)
    zt, work, tag, its, mult = _active_set_loop(H, g, A, b, E, f, z0, work0, max_iter)

    if tag != "optimal":
        # the loop's multipliers can be stale here; recover a stationarity
        # fit at the point it actually returned, over an independent subset
        # of its working set so near-duplicate rows cannot poison the
        # estimate.  A re-solve of the square KKT system would hand the
        # certificate garbage whenever that set is rank deficient.
        work = _independent_rows(E, A, work)
        if E.shape[0] or work:
            A_w = np.vstack([E, A[work]])
            mult, *_ = np.linalg.lstsq(A_w.T, H @ zt + g, rcond=None)
        else:
            mult = np.zeros(0)
    # certificate and status in original units
    z = D * zt
    mult_eq = mult[:E.shape[0]] / nu_e if E.shape[0] else mult[:0]
    mult_ineq = mult[E.shape[0]:] / nu[work] if work else mult[E.shape[0]:]
    resid, feas = _certificate(H_orig, g_orig, A_orig, b_orig_units, E_orig,
                               f_orig_units, z, work, mult_eq, mult_ineq)

    # status comes from the certificate, not from how the loop exited: a
    # point that passes the KKT check is optimal even after a stalled search
    if feas <= FEAS_TOL and resid <= STAT_TOL:
        status = QpStatus.OPTIMAL
    else:
        status = QpStatus.MAX_ITER
    return QpSolution(z, status, resid, list(work), its)


@dataclass
class FilterResult:
    """Filtered input plus the gain shares and slacks the solver picked."""

    u: np.ndarray
    c: np.ndarray
    delta: np.ndarray
    status: QpStatus
    kkt_residual: float
    active_set: list = field(default_factory=list)


def build_filter_qp(u_star, groups, slack_weight):
    """Assemble the safety-filter QP.

    Decision vector: [u (6) | c1, c2 per feature | delta pair per feature],
    the slack block present only when slack_weight > 0.  Cost is
    |u - u_star|^2 + slack_weight |delta|^2 plus a vanishing tie-break cost on
    the shares, which otherwise move freely inside their constraint set.
    """
    n_feat = len(groups)
    slack = slack_weight > 0.0
    n = 6 + 2 * n_feat + (2 * n_feat if slack else 0)
    H = np.zeros((n, n))
    H[:6, :6] = 2.0 * np.eye(6)
    for k in range(2 * n_feat):
        H[6 + k, 6 + k] = 2.0 * SHARE_REG
    g = np.zeros(n)
    g[:6] = -2.0 * np.asarray(u_star, dtype=float)
    if slack:
        d0 = 6 + 2 * n_feat
        H[d0:, d0:] = 2.0 * slack_weight * np.eye(2 * n_feat)

    rows_a = []
    rows_b = []
    eq_a = np.zeros((n_feat, n))
    eq_b = np.zeros(n_feat)
    for i, grp in enumerate(groups):
        c0 = 6 + 2 * i
        for j, row in enumerate(grp.rows):
            a = np.zeros(n)
            a[:6] = row.coeff_u
            a[c0] = row.coeff_c1
            a[c0 + 1] = row.coeff_c2
            if slack:
                a[6 + 2 * n_feat + 2 * i + j] = 1.0
            rows_a.append(a)
            rows_b.append(row.rhs)
        lo_row = np.zeros(n)
        lo_row[c0 + 1] = 1.0
        rows_a.append(lo_row)
        rows_b.append(grp.c2_lo)
        hi_row = np.zeros(n)
        hi_row[c0 + 1] = -1.0
        rows_a.append(hi_row)
        rows_b.append(-grp.c2_hi)
        eq_a[i, c0] = 1.0
        eq_a[i, c0 + 1] = 1.0
        eq_b[i] = grp.gain_sum
    if slack:
        for k in range(2 * n_feat):
            a = np.zeros(n)
            a[6 + 2 * n_feat + k] = 1.0
            rows_a.append(a)
            rows_b.append(0.0)
    return QpProblem(H, g, np.array(rows_a), np.array(rows_b), eq_a, eq_b)


def _fast_shares(u_star, grp):
    """Feasible (c1, c2) at u = u_star for one feature, or None.

    Each row restricts the share it carries to a half line; intersecting both
    with the budget line and the c2 interval is one-dimensional interval
    arithmetic.  Returns the interval midpoint for determinism.
    """
    lo, hi = grp.c2_lo, grp.c2_hi
    for row, on_c1 in ((grp.rows[0], True), (grp.rows[1], False)):
        base = float(row.coeff_u @ u_star)
        coeff = row.coeff_c1 if on_c1 else row.coeff_c2
        need = row.rhs - base
        if abs(coeff) <= 1e-14:
            if need > 1e-11:
                return None
            continue
        bound = need / coeff
        if on_c1:
            # c1 = gain_sum - c2 maps the c1 half line onto c2
            if coeff > 0.0:
                hi = min(hi, grp.gain_sum - bound)
            else:
                lo = max(lo, grp.gain_sum - bound)
        else:
            if coeff > 0.0:
                lo = max(lo, bound)
            else:
                hi = min(hi, bound)
    if lo > hi + 1e-12:
        return None
    c2 = 0.5 * (lo + hi)
    return grp.gain_sum - c2, c2


def solve_filter(u_star, groups, slack_weight, warm=None):
    """Filter one nominal input through the split-constraint QP.

    Tries the closed-form fast path first: when the nominal input already
    satisfies every row for some feasible share choice, it is optimal and no
    QP needs to be solved.  Falls back to the full active-set solve, seeded
    with the previous step's active set when the caller passes one.
    """
    u_star = np.asarray(u_star, dtype=float)
    n_feat = len(groups)
    shares = []
    for grp in groups:
        s = _fast_shares(u_star, grp)
        if s is None:
            break
        shares.append(s)
    if len(shares) == n_feat:
        c = np.array([x for pair in shares for x in pair])
        return FilterResult(u_star.copy(), c, np.zeros(2 * n_feat),
                            QpStatus.OPTIMAL, 0.0, [])

    # closed-form feasible start: nominal input, shares mid-box, slacks
    # soaking up whatever the rows still miss
    start = None
    if slack_weight > 0.0:
        start = np.zeros(6 + 4 * n_feat)
        start[:6] = u_star
        for i, grp in enumerate(groups):
            c2 = min(max(0.5 * (grp.c2_lo + grp.c2_hi), grp.c2_lo), grp.c2_hi)
            c1 = grp.gain_sum - c2
            start[6 + 2 * i] = c1
            start[6 + 2 * i + 1] = c2
            for j, row in enumerate(grp.rows):
                val = float(row.coeff_u @ u_star) + row.coeff_c1 * c1 + row.coeff_c2 * c2
                start[6 + 2 * n_feat + 2 * i + j] = max(0.0, row.rhs - val)

    sol = solve(build_filter_qp(u_star, groups, slack_weight),
                start=start, warm_work=warm)
    u = sol.z[:6]
    c = sol.z[6:6 + 2 * n_feat]
    if slack_weight > 0.0:
        delta = sol.z[6 + 2 * n_feat:]
    else:
        delta = np.zeros(2 * n_feat)
    return FilterResult(u, c, delta, sol.status, sol.kkt_residual, sol.active_set)
