"""Howard's policy iteration on an assembled Bellman system.

The loop alternates an exact linear solve for the current policy with a
per-node greedy improvement.  ``sense="max"`` selects, at each node, the
control with the largest residual ``B(a) V - c(a)``, which is policy
iteration for a cost-minimisation problem (values decrease monotonically);
``sense="min"`` is the mirror image used by the inner player of a max-min
game (values increase).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .errors import SingularSystem
from .scheme import AssembledSystem, ProblemSpec, StencilTable, node_values

log = logging.getLogger(__name__)

LINEAR_RTOL = 1e-12
STAGNATION_TOL = 1e-13
# A node only switches control when the gain beats rounding noise; without
# this, near-ties can make the policy cycle with values differing by 1 ulp.
SWITCH_RTOL = 1e-14


@dataclass
class HowardResult:
    values: np.ndarray
    policy: np.ndarray
    iterations: int
    converged: bool
    residual_inf: float
    unknowns: np.ndarray
    history: list[np.ndarray] = field(default_factory=list, repr=False)


def _table(spec) -> StencilTable:
    return spec if isinstance(spec, StencilTable) else spec.table


def policy_evaluate(system: AssembledSystem) -> np.ndarray:
    """Solve ``B(policy) V = c`` by sparse LU.

    Rows without off-diagonal entries (target nodes, obstacle contact) are
    solved directly and moved to the right-hand side first, so their values
    are exact.  The residual is checked against ``1e-12 * max(1, |c|_inf)``;
    one step of refinement with the same factors is taken when rounding
    exceeds it.
    """
    A = system.matrix.tocsr()
    b = system.rhs
    n = A.shape[0]
    if n == 0:
        return np.empty(0)
    nnz = np.diff(A.indptr)
    diag = A.diagonal()
    lone = (nnz == 1) & (diag != 0)
    x = np.empty(n)
    x[lone] = b[lone] / diag[lone]
    rest = np.flatnonzero(~lone)
    if len(rest):
        Ar = A[rest][:, rest].tocsc()
        br = b[rest] - A[rest][:, np.flatnonzero(lone)] @ x[lone]
        try:
            lu = spla.splu(Ar)
        except RuntimeError as exc:
            raise SingularSystem(str(exc)) from exc
        xr = lu.solve(br)
        tol = LINEAR_RTOL * max(1.0, float(np.abs(b).max()))
        r = br - Ar @ xr
        if np.abs(r).max() > tol:
            xr = xr + lu.solve(r)
        x[rest] = xr
    if not np.all(np.isfinite(x)):
        raise SingularSystem("policy evaluation produced non-finite values")
    return x


def _full(spec, unknowns, values, fixed_values):
    if isinstance(spec, StencilTable):
        V = np.array(fixed_values, dtype=float, copy=True)
    else:
        V = node_values(spec, fixed_values).copy()
    V[unknowns] = values
    return V


def _pick(R: np.ndarray, sense: str) -> np.ndarray:
    if sense == "max":
        return np.argmax(R, axis=0)
    if sense == "min":
        return np.argmin(R, axis=0)
    raise ValueError(f"sense must be 'max' or 'min', got {sense!r}")


def policy_improve(spec: ProblemSpec | StencilTable, unknowns, values, fixed_values=None,
                   sense: str = "max", choices: np.ndarray | None = None) -> np.ndarray:
    """Greedy control per unknown at the given values.

    Ties go to the smallest control index.  ``choices`` optionally restricts
    node ``i`` to the control indices ``choices[i]``.
    """
    unknowns = np.asarray(unknowns, dtype=np.int64)
    V = _full(spec, unknowns, values, fixed_values)
    R = _table(spec).residuals(V, unknowns, choices)
    best = _pick(R, sense)
    if choices is None:
        return best
    return np.asarray(choices)[np.arange(len(unknowns)), best]


def _switch(table: StencilTable, U, V, sense, choices, current) -> np.ndarray:
    """Greedy policy that keeps ``current`` unless another control is clearly better."""
    R = table.residuals(V, U, choices)
    best = _pick(R, sense)
    gain = R[best, np.arange(len(U))] - table.residuals(V, U, current[:, None])[0]
    if sense == "min":
        gain = -gain
    tol = SWITCH_RTOL * max(1.0, float(np.abs(V[U]).max(initial=0.0)))
    new = best if choices is None else np.asarray(choices)[np.arange(len(U)), best]
    return np.where(gain > tol, new, current)


def bellman_residual(spec, unknowns, values, fixed_values=None, sense: str = "max",
                     choices: np.ndarray | None = None) -> np.ndarray:
    """``max_a`` (or ``min_a``) of ``B(a) V - c(a)`` at each unknown."""
    unknowns = np.asarray(unknowns, dtype=np.int64)
    V = _full(spec, unknowns, values, fixed_values)
    R = _table(spec).residuals(V, unknowns, choices)
    return R.max(axis=0) if sense == "max" else R.min(axis=0)


def howard_solve(spec: ProblemSpec | StencilTable, unknowns=None, fixed_values=None, v0=None,
                 policy0=None, max_iter: int = 1000, sense: str = "max",
                 choices: np.ndarray | None = None, tol: float = STAGNATION_TOL,
                 record: bool = False) -> HowardResult:
    """Policy iteration over ``unknowns`` with everything else held at ``fixed_values``.

    Starts from ``policy0`` if given, else from the greedy policy at ``v0``,
    else from control 0 everywhere.  Stops when an evaluation repeats the
    previous one (exactly or within ``tol`` in sup norm) or the improved
    policy equals the current one.  During the loop a node keeps its control
    unless another one lowers its residual by more than rounding noise, so
    the loop also terminates with ``tol=0``.  On hitting ``max_iter`` the last iterate
    is returned with ``converged=False``.

    Args:
        spec: problem (or a prebuilt stencil table, then ``fixed_values`` must
            be a full node vector).
        unknowns: node indices solved for; defaults to all non-Dirichlet nodes.
        fixed_values: values of every coupled node outside ``unknowns``.
        sense: ``"max"`` for cost minimisation, ``"min"`` for the maximiser.
        choices: optional ``(n, C)`` per-node admissible control indices.
        record: keep every evaluated iterate in ``history``.
    """
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    table = _table(spec)
    if unknowns is None:
        unknowns = table.grid.interior
    U = np.asarray(unknowns, dtype=np.int64)
    V = _full(spec, U, 0.0, fixed_values)
    if policy0 is not None:
        policy = np.broadcast_to(np.asarray(policy0, dtype=np.int64), U.shape).copy()
    elif v0 is not None:
        V[U] = v0
        policy = policy_improve(table, U, V[U], V, sense, choices)
    elif choices is not None:
        policy = np.asarray(choices)[:, 0].astype(np.int64)
    else:
        policy = np.zeros(len(U), dtype=np.int64)

    history = []
    prev = None
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        x = policy_evaluate(table.assemble(U, policy, V))
        V[U] = x
        if record:
            history.append(x.copy())
        if prev is not None and (np.array_equal(x, prev) or np.abs(x - prev).max() <= tol):
            converged = True
            break
        new = _switch(table, U, V, sense, choices, policy)
        if np.array_equal(new, policy):
            converged = True
            break
        prev, policy = x, new
    if not converged:
        log.warning("Howard iteration stopped at max_iter=%d without convergence", max_iter)
    res = bellman_residual(table, U, V[U], V, sense, choices)
    return HowardResult(
        V[U].copy(), policy, it, converged, float(np.abs(res).max()) if len(res) else 0.0, U, history
    )
