"""Dual solvers for the gradient-projection quadratic programs.

All solvers minimize, over multipliers ``v`` of length ``m``,

    f(v) = 0.5 * || C^T v + g ||^2            (box_lower_bound form)
    f(v) = 0.5 * || C^T v + g ||^2 - gamma^T v  (linear_regularized form)

subject to per-coordinate lower bounds ``v >= q`` (box form, ``q`` is the
memory strength) or ``v >= 0`` (regularized form, where ``gamma`` holds the
primal margins). ``C`` stacks the constraint gradients as rows, and the
primal update direction is recovered as ``z = g + C^T v``: the minimizer of
``0.5 * || g - z ||^2`` subject to ``<c_k, z> >= gamma_k`` (regularized form)
by strong duality.

Three routes are provided:

* ``solve_exact``    -- projected cyclic coordinate descent, the production
                        solver; converges to the stated KKT tolerance.
* ``solve_enumerate``-- exhaustive active-set enumeration (m <= 12), the
                        certification oracle for the other two.
* ``solve_approx``   -- the two-stage closed form: unconstrained solution
                        with the Gram matrix replaced by its diagonal, then
                        a clamp of each multiplier to its lower bound. Exact
                        for a single constraint; one matrix-vector pass.

Rows with squared norm below ``MIN_ROW_SQNORM`` must be dropped before
solving (the diagonal scaling would divide by ~0); ``drop_degenerate_rows``
does this at assembly time.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

BOX_FORM = "box_lower_bound"
REGULARIZED_FORM = "linear_regularized"
_FORMS = (BOX_FORM, REGULARIZED_FORM)

MIN_ROW_SQNORM = 1e-12
DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 10_000
_ENUM_MAX_M = 12


@dataclass(eq=False)
class QpInstance:
    """One assembled inequality system for a single update step.

    ``strength`` is the per-row lower bound ``q`` in the box form, or the
    per-row primal margin ``gamma`` in the regularized form; entrywise >= 0
    either way. ``row_tags`` optionally records ``(task, split)`` provenance
    per row and ``module_index`` which parameter module the instance covers.
    """

    constraint_rows: np.ndarray
    target: np.ndarray
    strength: np.ndarray
    form: str = BOX_FORM
    row_tags: tuple = None
    module_index: int = 0

    def __post_init__(self):
        self.constraint_rows = np.atleast_2d(
            np.asarray(self.constraint_rows, dtype=np.float64)
        )
        self.target = np.asarray(self.target, dtype=np.float64)
        self.strength = np.atleast_1d(np.asarray(self.strength, dtype=np.float64))
        if self.constraint_rows.size == 0:
            self.constraint_rows = self.constraint_rows.reshape(0, self.target.shape[0])
            self.strength = self.strength.reshape(0)
        if self.form not in _FORMS:
            raise ValueError(f"unknown form {self.form!r}")
        if self.target.ndim != 1:
            raise ValueError("target must be a vector")
        if self.constraint_rows.shape[1] != self.target.shape[0]:
            raise ValueError("constraint rows and target disagree on dimension")
        if self.strength.shape[0] != self.constraint_rows.shape[0]:
            raise ValueError("strength length must equal the number of rows")

    @property
    def m(self) -> int:
        return self.constraint_rows.shape[0]

    @property
    def n(self) -> int:
        return self.target.shape[0]


@dataclass(eq=False)
class DualSolution:
    """Multipliers, recovered direction, and convergence diagnostics."""

    multipliers: np.ndarray
    direction: np.ndarray
    iterations: int
    kkt_residual: float
    converged: bool
    objective_history: np.ndarray = field(default=None)


def drop_degenerate_rows(rows: np.ndarray, strength: np.ndarray):
    """Remove rows with squared norm below MIN_ROW_SQNORM.

    Returns ``(rows, strength, n_dropped)``. Near-zero constraint gradients
    (e.g. a fully-fit past task) carry no directional information and would
    break the diagonal scaling in the approximate solver.
    """
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    strength = np.atleast_1d(np.asarray(strength, dtype=np.float64))
    if rows.shape[0] == 0:
        return rows, strength, 0
    keep = np.einsum("ij,ij->i", rows, rows) >= MIN_ROW_SQNORM
    dropped = int(np.sum(~keep))
    if dropped:
        log.debug("dropped %d degenerate constraint rows", dropped)
        rows, strength = rows[keep], strength[keep]
    return rows, strength, dropped


def _validate(inst: QpInstance):
    if not (np.all(np.isfinite(inst.constraint_rows))
            and np.all(np.isfinite(inst.target))
            and np.all(np.isfinite(inst.strength))):
        raise ValueError("QP instance contains NaN or Inf")
    if np.any(inst.strength < 0.0):
        raise ValueError("strength must be entrywise >= 0")
    if inst.m:
        sq = np.einsum("ij,ij->i", inst.constraint_rows, inst.constraint_rows)
        if np.any(sq < MIN_ROW_SQNORM):
            raise ValueError(
                "degenerate constraint row reached the solver; "
                "drop_degenerate_rows must run at assembly time"
            )


def lower_bounds(inst: QpInstance) -> np.ndarray:
    return inst.strength if inst.form == BOX_FORM else np.zeros(inst.m)


def dual_objective(inst: QpInstance, v: np.ndarray) -> float:
    r = inst.constraint_rows.T @ v + inst.target
    f = 0.5 * float(r @ r)
    if inst.form == REGULARIZED_FORM:
        f -= float(inst.strength @ v)
    return f


def dual_gradient(inst: QpInstance, v: np.ndarray) -> np.ndarray:
    g = inst.constraint_rows @ (inst.constraint_rows.T @ v + inst.target)
    if inst.form == REGULARIZED_FORM:
        g = g - inst.strength
    return g


def kkt_residual(inst: QpInstance, v: np.ndarray) -> float:
    """Max violation of the bound-constrained KKT conditions at ``v``.

    Per coordinate the residual is ``|min(v_k - lb_k, grad_k)|``: zero iff
    ``v`` is feasible and each coordinate is either at its bound with a
    non-negative dual gradient, or stationary.
    """
    if inst.m == 0:
        return 0.0
    v = np.asarray(v, dtype=np.float64)
    resid = np.minimum(v - lower_bounds(inst), dual_gradient(inst, v))
    return float(np.max(np.abs(resid)))


def _solution(inst, v, iterations, converged, history=None) -> DualSolution:
    direction = inst.target + inst.constraint_rows.T @ v
    return DualSolution(
        multipliers=v,
        direction=direction,
        iterations=iterations,
        kkt_residual=kkt_residual(inst, v),
        converged=converged,
        objective_history=None if history is None else np.asarray(history),
    )


def _refine_active_set(inst, v, lb, gamma, current_obj):
    """One Newton-style solve on the face coordinate descent has settled on.

    Coordinates strictly above their bound are treated as free and their
    stationarity system is solved directly (least-squares, so rank-deficient
    faces are fine). The candidate is adopted only if it stays feasible and
    does not increase the objective, which keeps the sweep history monotone.
    Nearly anti-parallel rows make plain coordinate descent crawl; this step
    finishes such instances to machine precision once the face is right.
    """
    free = np.flatnonzero(v > lb)
    if free.size == 0:
        return None
    rows = inst.constraint_rows
    pinned = np.flatnonzero(v <= lb)
    base = inst.target
    if pinned.size:
        base = base + rows[pinned].T @ lb[pinned]
    k_ff = rows[free] @ rows[free].T
    rhs = gamma[free] - rows[free] @ base
    v_free, *_ = np.linalg.lstsq(k_ff, rhs, rcond=None)
    if not np.all(np.isfinite(v_free)):
        return None
    scale = 1.0 + float(np.max(np.abs(v_free)))
    if np.any(v_free < lb[free] - 1e-12 * scale):
        return None
    cand = lb.copy()
    cand[free] = np.maximum(v_free, lb[free])
    if dual_objective(inst, cand) > current_obj:
        return None
    return cand


def solve_exact(inst: QpInstance, tol: float = DEFAULT_TOL,
                max_iter: int = DEFAULT_MAX_ITER) -> DualSolution:
    """Projected cyclic coordinate descent on the dual, with face refinement.

    Each coordinate is minimized exactly and clamped to its lower bound, so
    iterates stay feasible and the dual objective never increases; after
    every sweep the free-coordinate face is polished by a direct solve (see
    ``_refine_active_set``). Stops when the KKT residual drops to ``tol``;
    if ``max_iter`` sweeps pass first the result is returned with
    ``converged=False`` and the caller decides. ``iterations`` counts full
    sweeps.
    """
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    _validate(inst)
    if inst.m == 0:
        return _solution(inst, np.zeros(0), 0, True, history=[])

    rows = inst.constraint_rows
    sq = np.einsum("ij,ij->i", rows, rows)
    lb = lower_bounds(inst)
    gamma = inst.strength if inst.form == REGULARIZED_FORM else np.zeros(inst.m)

    v = lb.copy()
    z = inst.target + rows.T @ v
    history = []
    sweeps = 0
    converged = False
    while sweeps < max_iter:
        for k in range(inst.m):
            grad_k = float(rows[k] @ z) - gamma[k]
            new_vk = max(lb[k], v[k] - grad_k / sq[k])
            if new_vk != v[k]:
                z += (new_vk - v[k]) * rows[k]
                v[k] = new_vk
        sweeps += 1
        refined = _refine_active_set(inst, v, lb, gamma, dual_objective(inst, v))
        if refined is not None:
            v = refined
        z = inst.target + rows.T @ v  # shed incremental round-off each sweep
        history.append(dual_objective(inst, v))
        if kkt_residual(inst, v) <= tol:
            converged = True
            break
    return _solution(inst, v, sweeps, converged, history=history)


def solve_enumerate(inst: QpInstance) -> DualSolution:
    """Global optimum by exhaustive active-set enumeration (m <= 12).

    Every subset of coordinates is tried as the free set: the free
    coordinates solve the stationarity system with the rest pinned to their
    bounds, and the candidate is kept iff it is feasible and the pinned
    coordinates have non-negative dual gradient. Singular subsystems are
    skipped. Ties go to the first enumerated optimal set.
    """
    _validate(inst)
    m = inst.m
    if m > _ENUM_MAX_M:
        raise ValueError(f"enumeration supports m <= {_ENUM_MAX_M}, got {m}")
    if m == 0:
        return _solution(inst, np.zeros(0), 0, True)

    rows = inst.constraint_rows
    K = rows @ rows.T
    c = rows @ inst.target
    lb = lower_bounds(inst)
    gamma = inst.strength if inst.form == REGULARIZED_FORM else np.zeros(m)

    scale = 1.0 + float(np.max(np.abs(K))) + float(np.max(np.abs(c)))
    feas_tol = 1e-9 * scale

    best_v = None
    best_obj = np.inf
    tried = 0
    for mask in range(2 ** m):
        free = [k for k in range(m) if mask >> k & 1]
        v = lb.copy()
        if free:
            pinned = [k for k in range(m) if not (mask >> k & 1)]
            rhs = gamma[free] - c[free]
            if pinned:
                rhs = rhs - K[np.ix_(free, pinned)] @ lb[pinned]
            try:
                v_free = np.linalg.solve(K[np.ix_(free, free)], rhs)
            except np.linalg.LinAlgError:
                continue
            if not np.all(np.isfinite(v_free)):
                continue
            v[free] = v_free
        tried += 1
        if np.any(v < lb - feas_tol):
            continue
        grad = K @ v + c - gamma
        pinned_mask = np.array([not (mask >> k & 1) for k in range(m)])
        if np.any(grad[pinned_mask] < -feas_tol):
            continue
        obj = dual_objective(inst, v)
        if obj < best_obj - 1e-12:
            best_obj = obj
            best_v = v
    if best_v is None:
        raise RuntimeError("no active set satisfied the KKT conditions")
    return _solution(inst, best_v, tried, True)


def solve_approx(inst: QpInstance) -> DualSolution:
    """Two-stage approximate dual solve (box form only).

    Stage one solves the unconstrained problem with the Gram matrix
    ``C C^T`` replaced by its diagonal: ``nu_k = -<c_k, g> / ||c_k||^2``.
    Stage two clamps each multiplier to its strength floor:
    ``v = max(nu, q)``. The direction is ``z = g + C^T v``. For ``m=1``
    the diagonal approximation is the true Gram matrix, so the result
    matches the exact solver for any ``q``.
    """
    if inst.form != BOX_FORM:
        raise ValueError("approximate solver handles the box_lower_bound form only")
    _validate(inst)
    if inst.m == 0:
        return _solution(inst, np.zeros(0), 0, True)
    rows = inst.constraint_rows
    sq = np.einsum("ij,ij->i", rows, rows)
    nu = -(rows @ inst.target) / sq
    v = np.maximum(nu, inst.strength)
    return _solution(inst, v, 0, True)
