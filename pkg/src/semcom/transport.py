"""Relaxed entropic optimal transport between two equally sized point sets.

The denoiser solves the entropic transport problem twice, each time keeping
only one marginal constraint, which has a closed form:

* row-relaxed plan:    ``T_U = diag(p / (K 1)) K``   (row sums equal ``p``)
* column-relaxed plan: ``T_V = K diag(q / (K^T 1))`` (column sums equal ``q``)

where ``K = exp(-C / eta)`` is the Gibbs kernel of the Euclidean cost matrix.
The two are merged by an element-wise maximum and applied as a barycentric
map.  Everything costs O(n^2).

:func:`sinkhorn_full` (both marginals, iterative) and
:func:`lp_transport_oracle` (unregularized, exact) are reference solvers.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import linprog

from .errors import ContractViolation

PLAN_KINDS = ("row_relaxed", "col_relaxed", "combined", "sinkhorn", "lp")
DEFAULT_ETA = 0.05
# below this eta, relaxed plans are computed from shifted exponentials
STABILIZE_BELOW = 1e-2
LP_MAX_N = 8


@dataclass
class TransportPlan:
    matrix: np.ndarray
    p: np.ndarray
    q: np.ndarray
    eta: float | None
    kind: str
    iterations: int | None = None
    converged: bool | None = None

    def __post_init__(self):
        if self.kind not in PLAN_KINDS:
            raise ContractViolation(f"unknown plan kind {self.kind!r}")

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def cost(self, c: np.ndarray) -> float:
        """Linear transport cost ``sum_ij T_ij c_ij``."""
        return float(np.sum(self.matrix * c))


def uniform(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


def _marginal(w, n: int, name: str) -> np.ndarray:
    if w is None:
        return uniform(n)
    w = np.asarray(w, dtype=float).ravel()
    if w.shape != (n,):
        raise ContractViolation(f"{name} must have length {n}")
    if (w < 0).any() or not math.isclose(w.sum(), 1.0, rel_tol=0, abs_tol=1e-9):
        raise ContractViolation(f"{name} must be nonnegative and sum to 1")
    return w


def cost_matrix(source: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Pairwise Euclidean distances ``C[i, j] = |source_i - target_j|``."""
    s = np.atleast_2d(np.asarray(source, dtype=float))
    t = np.atleast_2d(np.asarray(target, dtype=float))
    if len(s) != len(t) or len(s) == 0:
        raise ContractViolation(f"point sets must be nonempty and equal in size, got {len(s)} and {len(t)}")
    if s.shape[1] != t.shape[1]:
        raise ContractViolation("point sets differ in dimension")
    if not (np.isfinite(s).all() and np.isfinite(t).all()):
        raise ContractViolation("coordinates must be finite")
    diff = s[:, None, :] - t[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def gibbs_kernel(c: np.ndarray, eta: float, shift: str | None = None) -> np.ndarray:
    """``exp(-c / eta)``.

    ``shift="row"`` (``"col"``) subtracts each row's (column's) minimum cost first,
    so the largest entry per row (column) is exactly 1 and nothing underflows.
    That rescales rows (columns) by a positive factor, which the row-relaxed
    (column-relaxed) plan normalizes away.
    """
    if not eta > 0:
        raise ContractViolation("eta must be > 0")
    c = np.asarray(c, dtype=float)
    if shift == "row":
        c = c - c.min(axis=1, keepdims=True)
    elif shift == "col":
        c = c - c.min(axis=0, keepdims=True)
    elif shift is not None:
        raise ContractViolation(f"shift must be None, 'row' or 'col', got {shift!r}")
    k = np.divide(c, -eta)
    return np.exp(k, out=k)


def relax_rows(kernel: np.ndarray, p=None, eta: float | None = None) -> TransportPlan:
    """Closed-form plan with only the row marginal enforced."""
    k = np.asarray(kernel, dtype=float)
    p = _marginal(p, k.shape[0], "p")
    row = k.sum(axis=1)
    if (row <= 0).any():
        raise ContractViolation("kernel has a zero row")
    t = k * (p / row)[:, None]
    return TransportPlan(t, p, t.sum(axis=0), eta, "row_relaxed")


def relax_cols(kernel: np.ndarray, q=None, eta: float | None = None) -> TransportPlan:
    """Closed-form plan with only the column marginal enforced."""
    k = np.asarray(kernel, dtype=float)
    q = _marginal(q, k.shape[1], "q")
    col = k.sum(axis=0)
    if (col <= 0).any():
        raise ContractViolation("kernel has a zero column")
    t = k * (q / col)[None, :]
    return TransportPlan(t, t.sum(axis=1), q, eta, "col_relaxed")


def combine_max(t_u: TransportPlan, t_v: TransportPlan) -> TransportPlan:
    if t_u.matrix.shape != t_v.matrix.shape:
        raise ContractViolation("plans differ in shape")
    if t_u.eta is not None and t_v.eta is not None and t_u.eta != t_v.eta:
        raise ContractViolation("plans were built with different eta")
    eta = t_u.eta if t_u.eta is not None else t_v.eta
    return TransportPlan(np.maximum(t_u.matrix, t_v.matrix), t_u.p, t_v.q, eta, "combined")


def barycentric_apply(plan: TransportPlan | np.ndarray, target_points: np.ndarray) -> np.ndarray:
    """Map source ``i`` to ``sum_j T_ij target_j / sum_j T_ij``."""
    t = plan.matrix if isinstance(plan, TransportPlan) else np.asarray(plan, dtype=float)
    tgt = np.asarray(target_points, dtype=float)
    rows = t.sum(axis=1)
    if (rows <= 0).any():
        raise ContractViolation("plan has a row with zero mass")
    return (t @ tgt) / rows[:, None]


def relaxed_plans(c: np.ndarray, eta: float = DEFAULT_ETA, p=None, q=None):
    """Row-relaxed, column-relaxed and combined plans for cost ``c``.

    For ``eta < 1e-2`` each relaxed plan is built from a kernel shifted along
    the axis it normalizes; the plans are unchanged in exact arithmetic.
    """
    c = np.asarray(c, dtype=float)
    if eta < STABILIZE_BELOW:
        t_u = relax_rows(gibbs_kernel(c, eta, "row"), p, eta)
        t_v = relax_cols(gibbs_kernel(c, eta, "col"), q, eta)
    else:
        k = gibbs_kernel(c, eta)
        t_u, t_v = relax_rows(k, p, eta), relax_cols(k, q, eta)
    return t_u, t_v, combine_max(t_u, t_v)


def denoise_points(source: np.ndarray, target: np.ndarray, eta: float = DEFAULT_ETA, p=None, q=None) -> np.ndarray:
    """Move each source point to its barycentric image under the combined relaxed plan."""
    _, _, t_star = relaxed_plans(cost_matrix(source, target), eta, p, q)
    return barycentric_apply(t_star, target)


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    m = a.max(axis=axis, keepdims=True)
    return (m + np.log(np.exp(a - m).sum(axis=axis, keepdims=True))).squeeze(axis)


def sinkhorn_full(c: np.ndarray, p=None, q=None, eta: float = DEFAULT_ETA, max_iters: int = 10_000, tol: float = 1e-9) -> TransportPlan:
    """Entropic transport with both marginals, by alternating row/column scaling.

    Stops once the row-marginal error (max abs) drops below ``tol``; the column
    marginal is exact after every column update.  Runs in the log domain when
    the plain kernel would underflow.  If ``max_iters`` is hit the last iterate
    is returned with ``converged=False``.
    """
    if not eta > 0:
        raise ContractViolation("eta must be > 0")
    c = np.asarray(c, dtype=float)
    n, m = c.shape
    p = _marginal(p, n, "p")
    q = _marginal(q, m, "q")
    converged = False

    if math.exp(-c.max() / eta) > 1e-200:
        k = np.exp(-c / eta)
        v = np.ones(m)
        for it in range(1, max_iters + 1):
            u = p / (k @ v)
            v = q / (k.T @ u)
            err = np.abs(u * (k @ v) - p).max()
            if err < tol:
                converged = True
                break
        t = u[:, None] * k * v[None, :]
    else:
        # Log domain with the dual potentials stored unscaled (f/eta is the log
        # scaling).  eta is annealed geometrically from the cost scale down to
        # the target, warm-starting each stage; iterations count over all stages.
        log_p, log_q = np.log(p), np.log(q)
        f = np.zeros(n)
        g = np.zeros(m)
        schedule = []
        e = max(float(c.max()), eta)
        while e > eta:
            schedule.append(e)
            e /= 4.0
        schedule.append(eta)
        it = 0
        for stage, e in enumerate(schedule):
            last = stage == len(schedule) - 1
            stage_tol = tol if last else max(tol, 1e-3)
            while it < max_iters:
                it += 1
                f = e * (log_p - _logsumexp((g[None, :] - c) / e, axis=1))
                g = e * (log_q - _logsumexp((f[:, None] - c) / e, axis=0))
                row = np.exp(_logsumexp((f[:, None] + g[None, :] - c) / e, axis=1))
                if np.abs(row - p).max() < stage_tol:
                    converged = last
                    break
            if it >= max_iters:
                break
        t = np.exp((f[:, None] + g[None, :] - c) / eta)
    return TransportPlan(t, p, q, eta, "sinkhorn", iterations=it, converged=converged)


def lp_transport_oracle(c: np.ndarray, p=None, q=None) -> TransportPlan:
    """Exact unregularized transport plan by linear programming (tiny ``n`` only)."""
    c = np.asarray(c, dtype=float)
    n, m = c.shape
    if max(n, m) > LP_MAX_N:
        raise ContractViolation(f"the LP oracle is limited to n <= {LP_MAX_N}")
    p = _marginal(p, n, "p")
    q = _marginal(q, m, "q")
    a_rows = np.kron(np.eye(n), np.ones((1, m)))
    a_cols = np.kron(np.ones((1, n)), np.eye(m))
    res = linprog(
        c.ravel(),
        A_eq=np.vstack([a_rows, a_cols]),
        b_eq=np.concatenate([p, q]),
        bounds=(0, None),
        method="highs",
    )
    if not res.success:
        raise RuntimeError(f"LP solver failed: {res.message}")
    t = np.clip(res.x.reshape(n, m), 0.0, None)
    return TransportPlan(t, p, q, None, "lp", converged=True)


def plan_to_csv(plan: TransportPlan, path: str | Path | None = None) -> str:
    """``n,eta,kind`` header line followed by one matrix row per line."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "eta", "kind"])
    w.writerow([plan.n, "" if plan.eta is None else repr(plan.eta), plan.kind])
    for row in plan.matrix:
        w.writerow([repr(float(x)) for x in row])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def plan_from_csv(text_or_path) -> TransportPlan:
    text = text_or_path
    if isinstance(text_or_path, Path) or (isinstance(text_or_path, str) and "\n" not in text_or_path):
        text = Path(text_or_path).read_text()
    rows = list(csv.reader(io.StringIO(text)))
    n, eta, kind = rows[1]
    mat = np.array(rows[2 : 2 + int(n)], dtype=float)
    return TransportPlan(mat, mat.sum(axis=1), mat.sum(axis=0), float(eta) if eta else None, kind)
