"""Dense constrained quadratic optimization over the tensor polytope.

Problems are stated in z-space (8 columns) but solved in the four free
coordinates ``u`` of :func:`fact.tensor.embedding`, where the marginal
equalities disappear and ``z >= 0`` becomes a box.  The convex path is a
primal active-set method that tolerates singular (PSD) Hessians by stepping
along zero-curvature descent rays to the next blocking constraint; with a
zero Hessian it degenerates to a vertex-walking LP method.

Nonconvex penalty forms ``w * (0.5 z^T B z)^2`` go through projected-gradient
multistart instead and are flagged approximate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .errors import Infeasible, IterationLimit
from .tensor import Marginals, embedding


@dataclass(frozen=True)
class SolverConfig:
    feasibility_tol: float = 1e-9
    optimality_tol: float = 1e-8
    max_iterations: int = 10_000
    multistart_count: int = 16
    rng_seed: int = 0
    tie_break: bool = True
    trace_path: str | None = None

    def __post_init__(self):
        if self.feasibility_tol <= 0 or self.optimality_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iterations < 1 or self.multistart_count < 1:
            raise ValueError("iteration and start counts must be positive")


DEFAULT_CONFIG = SolverConfig()


@dataclass(frozen=True)
class QuadraticProgram:
    """``min ||G z - h||^2 + q.z + sum_k w_k (0.5 z^T B_k z)^2`` over K.

    ``eq = (A_eq, b_eq)`` adds ``A_eq z = b_eq``; ``ineq = (A_in, b_in)`` adds
    ``A_in z <= b_in``.  Marginal equalities and ``z >= 0`` are implicit.
    """

    marginals: Marginals
    objective: np.ndarray
    target: np.ndarray | None = None
    linear: np.ndarray | None = None
    penalties: tuple = ()
    eq: tuple | None = None
    ineq: tuple | None = None

    @property
    def is_convex(self):
        return not any(w > 0 for w, _ in self.penalties)


@dataclass(frozen=True)
class Solution:
    z_star: np.ndarray
    objective_value: float
    converged: bool
    active_set: tuple
    iterations: int = 0
    kkt_residual: float = 0.0
    approximate: bool = False
    free: np.ndarray = field(default=None, repr=False)


@dataclass(frozen=True)
class FeasibilityResult:
    feasible: bool
    witness: np.ndarray | None
    residual: float

    def __bool__(self):
        return self.feasible


# ---------------------------------------------------------------------------
# reduction to free coordinates


@dataclass
class _Reduced:
    H: np.ndarray
    g: np.ndarray
    const: float
    E: np.ndarray
    e: np.ndarray
    A: np.ndarray  # first 8 rows are the z >= 0 bounds, in z order
    b: np.ndarray
    P: np.ndarray
    p0: np.ndarray
    box: np.ndarray
    n_general: int  # number of non-bound inequality rows


def _reduce(qp: QuadraticProgram, tol):
    P, p0 = embedding(qp.marginals)
    G = np.atleast_2d(np.asarray(qp.objective, dtype=float)).reshape(-1, 8)
    h = np.zeros(G.shape[0]) if qp.target is None else np.asarray(qp.target, dtype=float)
    J = G @ P
    j = G @ p0 - h
    H = 2.0 * J.T @ J
    g = 2.0 * J.T @ j
    const = float(j @ j)
    if qp.linear is not None:
        q = np.asarray(qp.linear, dtype=float)
        g = g + P.T @ q
        const += float(q @ p0)

    if qp.eq is not None and np.asarray(qp.eq[0]).size:
        Aeq = np.atleast_2d(np.asarray(qp.eq[0], dtype=float))
        beq = np.asarray(qp.eq[1], dtype=float).reshape(-1)
        E, e = _independent_rows(Aeq @ P, beq - Aeq @ p0, tol)
    else:
        E, e = np.zeros((0, 4)), np.zeros(0)

    # z >= 0 in z order: TP=u, FN=box-u, FP=u, TN=box-u
    box = qp.marginals.free_box()
    A_rows, b_rows = [], []
    for k in range(8):
        A_rows.append(-P[k])
        b_rows.append(p0[k])
    n_general = 0
    if qp.ineq is not None and np.asarray(qp.ineq[0]).size:
        Ain = np.atleast_2d(np.asarray(qp.ineq[0], dtype=float))
        bin_ = np.asarray(qp.ineq[1], dtype=float).reshape(-1)
        R = Ain @ P
        r = bin_ - Ain @ p0
        for row, rhs in zip(R, r):
            if np.linalg.norm(row) <= 1e-14:
                if rhs < -tol:
                    raise Infeasible("constant inequality violated", min_residual=-rhs)
                continue
            A_rows.append(row)
            b_rows.append(rhs)
            n_general += 1
    return _Reduced(H, g, const, E, e, np.array(A_rows), np.array(b_rows), P, p0, box, n_general)


def _independent_rows(E, e, tol):
    """Orthonormal combination of the rows of ``E x = e``; raises on inconsistency."""
    if E.shape[0] == 0:
        return E, e
    U, s, Vt = np.linalg.svd(E, full_matrices=True)
    scale = max(1.0, s[0]) if s.size else 1.0
    rank = int(np.sum(s > 1e-11 * scale))
    proj = U.T @ e
    if rank < E.shape[0] and np.any(np.abs(proj[rank:]) > max(tol, 1e-11 * np.abs(e).max(initial=1.0))):
        raise Infeasible("equality system is inconsistent", min_residual=float(np.abs(proj[rank:]).max()))
    # rows of Vt are unit length, so tolerances stay comparable across inputs
    E2 = Vt[:rank]
    e2 = proj[:rank] / s[:rank]
    return E2, e2


# ---------------------------------------------------------------------------
# active-set core


def _nullspace(C, n):
    if C.shape[0] == 0:
        return np.eye(n)
    _, s, Vt = np.linalg.svd(C, full_matrices=True)
    scale = max(1.0, s[0])
    rank = int(np.sum(s > 1e-12 * scale))
    return Vt[rank:].T


@dataclass
class _CoreResult:
    x: np.ndarray
    working: list
    multipliers: np.ndarray
    iterations: int
    kkt: float
    converged: bool


def _active_set(H, g, E, e, A, b, x0, max_iter, trace=None, working=None):
    """Primal active-set method for a convex (PSD) quadratic.

    ``min 0.5 x^T H x + g.x  s.t.  E x = e, A x <= b`` starting from a
    feasible ``x0``.  Ties (blocking constraints at equal step, equal
    multipliers) resolve to the lowest constraint index.
    """
    n = x0.size
    x = x0.astype(float).copy()
    W = [] if working is None else list(working)
    hnorm = max(1.0, np.abs(H).max(initial=0.0))
    np.zeros(0)
    for it in range(1, max_iter + 1):
        grad = H @ x + g
        C = np.vstack([E, A[W]]) if W else E
        Z = _nullspace(C, n)
        ray = False
        gscale = 1e-12 * max(1.0, np.linalg.norm(g), hnorm * np.linalg.norm(x))
        p = np.zeros(n)
        if Z.shape[1]:
            gz = Z.T @ grad
            if np.linalg.norm(gz) > gscale:
                w, V = np.linalg.eigh(Z.T @ H @ Z)
                pos = w > 1e-12 * hnorm
                gv = V.T @ gz
                null_part = gv[~pos]
                if null_part.size and np.linalg.norm(null_part) > gscale:
                    p = -Z @ (V[:, ~pos] @ null_part)
                    ray = True
                else:
                    p = -Z @ (V[:, pos] @ (gv[pos] / w[pos]))

        if trace is not None:
            trace.append({"iteration": it, "objective": float(0.5 * x @ H @ x + g @ x), "working": len(W)})

        if not ray and np.linalg.norm(p) <= 1e-14 * max(1.0, np.linalg.norm(x)):
            lam = _multipliers(C, grad)
            mu = lam[E.shape[0] :]
            mu_tol = 1e-10 * max(1.0, np.linalg.norm(grad))
            if mu.size == 0 or mu.min() >= -mu_tol:
                kkt = _kkt_residual(H, g, E, e, A, b, x, W, lam)
                return _CoreResult(x, W, lam, it, kkt, True)
            W.pop(int(np.argmin(mu)))
            continue

        Ap = A @ p
        step = np.inf if ray else 1.0
        block = -1
        for i in range(A.shape[0]):
            if i in W or Ap[i] <= 1e-15 * max(1.0, np.linalg.norm(p)):
                continue
            slack = max(0.0, b[i] - A[i] @ x)
            alpha = slack / Ap[i]
            if alpha < step:
                step, block = alpha, i
        if not np.isfinite(step):
            raise Infeasible("objective unbounded on the feasible set")
        x = x + step * p
        if block >= 0:
            W.append(block)
    C = np.vstack([E, A[W]]) if W else E
    lam = _multipliers(C, H @ x + g)
    kkt = _kkt_residual(H, g, E, e, A, b, x, W, lam)
    return _CoreResult(x, W, lam, max_iter, kkt, False)


def _multipliers(C, grad):
    if C.shape[0] == 0:
        return np.zeros(0)
    lam, *_ = np.linalg.lstsq(C.T, -grad, rcond=None)
    return lam


def _kkt_residual(H, g, E, e, A, b, x, W, lam):
    grad = H @ x + g
    C = np.vstack([E, A[W]]) if W else E
    stat = grad + (C.T @ lam if C.shape[0] else 0.0)
    mu = lam[E.shape[0] :]
    parts = [np.abs(stat).max(initial=0.0)]
    parts.append(max(0.0, -mu.min(initial=0.0)))
    if E.shape[0]:
        parts.append(np.abs(E @ x - e).max())
    parts.append(max(0.0, (A @ x - b).max(initial=0.0)))
    if W:
        parts.append(np.abs(mu * (A[W] @ x - b[W])).max())
    return float(max(parts))


# ---------------------------------------------------------------------------
# phase 1


def _phase1(red: _Reduced, cfg: SolverConfig):
    """Minimize equality residual plus inequality slack; returns (x, residual)."""
    n = 4
    ng = red.n_general
    x0 = red.box / 2.0
    Agen, bgen = red.A[8:], red.b[8:]
    if red.E.shape[0] == 0 and (ng == 0 or np.all(Agen @ x0 <= bgen)):
        return x0, 0.0
    s0 = np.maximum(0.0, Agen @ x0 - bgen) if ng else np.zeros(0)
    dim = n + ng
    H = np.zeros((dim, dim))
    g = np.zeros(dim)
    H[:n, :n] = 2.0 * red.E.T @ red.E
    g[:n] = -2.0 * red.E.T @ red.e
    H[n:, n:] = 2.0 * np.eye(ng)
    A = np.zeros((8 + 2 * ng, dim))
    b = np.zeros(8 + 2 * ng)
    A[:8, :n] = red.A[:8]
    b[:8] = red.b[:8]
    A[8 : 8 + ng, :n] = Agen
    A[8 : 8 + ng, n:] = -np.eye(ng)
    b[8 : 8 + ng] = bgen
    A[8 + ng :, n:] = -np.eye(ng)
    res = _active_set(H, g, np.zeros((0, dim)), np.zeros(0), A, b, np.concatenate([x0, s0]), cfg.max_iterations)
    x = res.x[:n]
    eq_res = red.E @ x - red.e if red.E.shape[0] else np.zeros(0)
    ineq_res = np.maximum(0.0, Agen @ x - bgen) if ng else np.zeros(0)
    resid = float(np.sqrt(eq_res @ eq_res + ineq_res @ ineq_res))
    return x, resid


def _start_point(red: _Reduced, cfg: SolverConfig):
    x, resid = _phase1(red, cfg)
    if resid > cfg.feasibility_tol:
        raise Infeasible(f"constraints unsatisfiable (phase-1 residual {resid:.3g})", min_residual=resid)
    return x


def feasible(marginals: Marginals, eq=None, ineq=None, cfg: SolverConfig = DEFAULT_CONFIG) -> FeasibilityResult:
    """Decide whether K intersected with the extra constraints is nonempty.

    The decision compares the phase-1 minimum residual (equality residual
    plus inequality excess, Euclidean) against ``cfg.feasibility_tol``.
    """
    qp = QuadraticProgram(marginals, np.zeros((0, 8)), eq=eq, ineq=ineq)
    try:
        red = _reduce(qp, cfg.feasibility_tol)
    except Infeasible as exc:
        return FeasibilityResult(False, None, float(exc.min_residual or np.inf))
    x, resid = _phase1(red, cfg)
    if resid <= cfg.feasibility_tol:
        return FeasibilityResult(True, red.P @ x + red.p0, resid)
    return FeasibilityResult(False, None, resid)


# ---------------------------------------------------------------------------
# public solve


def solve(qp: QuadraticProgram, cfg: SolverConfig = DEFAULT_CONFIG) -> Solution:
    """Minimize the program; see :class:`QuadraticProgram`.

    Convex programs are solved to a KKT residual below ``optimality_tol``.
    Programs with nonconvex penalty forms return the best of
    ``multistart_count`` projected-gradient runs, ``approximate=True``.
    """
    red = _reduce(qp, cfg.feasibility_tol)
    x0 = _start_point(red, cfg)
    trace = [] if cfg.trace_path else None
    res = _active_set(red.H, red.g, red.E, red.e, red.A, red.b, x0, cfg.max_iterations, trace)
    if not res.converged:
        raise IterationLimit(f"active-set method did not converge in {cfg.max_iterations} iterations")
    x = res.x
    if cfg.tie_break and qp.is_convex:
        x = _lexicographic(red, x, cfg)
    if qp.is_convex:
        sol = _finish(red, x, res, qp, cfg, approximate=False, converged=res.kkt <= cfg.optimality_tol)
    else:
        sol = _multistart(red, qp, x, cfg, trace)
    if trace is not None:
        with open(cfg.trace_path, "a") as fh:
            fh.writelines(json.dumps(rec) + "\n" for rec in trace)
    return sol


def _finish(red, x, res, qp, cfg, approximate, converged):
    z = red.P @ x + red.p0
    obj = _objective_z(qp, z)
    slack = red.b - red.A @ x
    tight = tuple(int(i) for i in np.flatnonzero(np.abs(slack) <= 10 * cfg.feasibility_tol))
    return Solution(
        z_star=z,
        objective_value=obj,
        converged=bool(converged),
        active_set=tight,
        iterations=res.iterations if res is not None else 0,
        kkt_residual=float(res.kkt) if res is not None else float("nan"),
        approximate=approximate,
        free=x,
    )


def _objective_z(qp: QuadraticProgram, z):
    G = np.atleast_2d(np.asarray(qp.objective, dtype=float)).reshape(-1, 8)
    r = G @ z - (0.0 if qp.target is None else np.asarray(qp.target, dtype=float))
    val = float(r @ r)
    if qp.linear is not None:
        val += float(np.asarray(qp.linear, dtype=float) @ z)
    for w, B in qp.penalties:
        q = 0.5 * z @ np.asarray(B, dtype=float) @ z
        val += w * q * q
    return val


def _lexicographic(red: _Reduced, x, cfg: SolverConfig):
    """Lexicographically smallest z on the optimal face of a convex program.

    The face is ``{H u = H u*, g.u = g.u*}`` intersected with the constraints;
    each coordinate of z (cell order) is minimized in turn and then frozen.
    """
    tol = cfg.feasibility_tol
    face_rows = [red.E, red.H, red.g[None, :]]
    face_rhs = [red.e, red.H @ x, np.array([red.g @ x])]
    E = np.vstack(face_rows)
    e = np.concatenate(face_rhs)
    try:
        E, e = _independent_rows(E, e, max(tol, 1e-10))
    except Infeasible:
        return x
    n = x.size
    zero_H = np.zeros((n, n))
    for k in range(8):
        if E.shape[0] >= n:
            break
        c = red.P[k]
        Z = _nullspace(E, n)
        if np.linalg.norm(Z.T @ c) <= 1e-12:
            continue
        res = _active_set(zero_H, c, E, e, red.A, red.b, x, cfg.max_iterations)
        if not res.converged:
            break
        x = res.x
        E2, e2 = np.vstack([E, c[None, :]]), np.concatenate([e, [c @ x]])
        try:
            E, e = _independent_rows(E2, e2, max(tol, 1e-10))
        except Infeasible:
            break
    return x


# ---------------------------------------------------------------------------
# nonconvex multistart


def _penalty_parts(red: _Reduced, qp: QuadraticProgram):
    parts = []
    for w, B in qp.penalties:
        B = np.asarray(B, dtype=float)
        Q = red.P.T @ B @ red.P
        l = red.P.T @ B @ red.p0
        c = 0.5 * red.p0 @ B @ red.p0
        parts.append((float(w), Q, l, c))
    return parts


def _multistart(red: _Reduced, qp: QuadraticProgram, x_convex, cfg: SolverConfig, trace):
    parts = _penalty_parts(red, qp)

    def f_and_grad(x):
        val = 0.5 * x @ red.H @ x + red.g @ x
        grad = red.H @ x + red.g
        for w, Q, l, c in parts:
            q = 0.5 * x @ Q @ x + l @ x + c
            val += w * q * q
            grad = grad + 2.0 * w * q * (Q @ x + l)
        return val, grad

    box_only = red.E.shape[0] == 0 and red.n_general == 0
    if box_only:
        lo, hi = np.zeros(4), red.box

        def project(v):
            return np.clip(v, lo, hi)

    else:
        eye = np.eye(4)

        def project(v, _start=x_convex):
            r = _active_set(2 * eye, -2 * v, red.E, red.e, red.A, red.b, _start, cfg.max_iterations)
            return r.x

    sampler = qmc.LatinHypercube(d=4, seed=cfg.rng_seed)
    seeds = [x_convex] + [project(s * red.box) for s in sampler.random(cfg.multistart_count - 1)]
    results = []
    all_ok = True
    for idx, x in enumerate(seeds):
        x, val, ok, iters = _projected_gradient(f_and_grad, project, x, cfg)
        all_ok &= ok
        results.append((val, idx, x, iters))
        if trace is not None:
            trace.append({"start": idx, "objective": float(val), "converged": bool(ok)})
    results.sort(key=lambda t: (t[0], t[1]))
    _, _, best_x, iters = results[0]
    z = red.P @ best_x + red.p0
    slack = red.b - red.A @ best_x
    tight = tuple(int(i) for i in np.flatnonzero(np.abs(slack) <= 10 * cfg.feasibility_tol))
    return Solution(
        z_star=z,
        objective_value=_objective_z(qp, z),
        converged=bool(all_ok),
        active_set=tight,
        iterations=int(iters),
        kkt_residual=float("nan"),
        approximate=True,
        free=best_x,
    )


def _projected_gradient(f_and_grad, project, x, cfg: SolverConfig):
    """Spectral (Barzilai-Borwein) projected gradient with Armijo backtracking."""
    x = project(x)
    val, grad = f_and_grad(x)
    step = 1.0
    gnorm0 = max(1.0, np.linalg.norm(grad))
    for it in range(1, cfg.max_iterations + 1):
        pg = x - project(x - grad)
        if np.linalg.norm(pg) <= 1e-12 * gnorm0:
            return x, val, True, it
        t = step
        while True:
            cand = project(x - t * grad)
            cval, cgrad = f_and_grad(cand)
            if cval <= val - 1e-4 * grad @ (x - cand) or t < 1e-20:
                break
            t *= 0.5
        s = cand - x
        yv = cgrad - grad
        if np.linalg.norm(s) <= 1e-16 * max(1.0, np.linalg.norm(x)):
            return cand, cval, True, it
        sy = s @ yv
        step = float(np.clip((s @ s) / sy, 1e-12, 1e12)) if sy > 0 else 1e3 * max(t, 1e-12)
        x, val, grad = cand, cval, cgrad
    return x, val, False, cfg.max_iterations
