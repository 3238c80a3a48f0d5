"""Dense interior-point solver for strict linear matrix inequalities.

Problems are affine in a flat decision vector assembled from structured
variables: symmetric matrices (stored as their upper triangle with sqrt(2)
off-diagonal scaling, so the flat inner product equals the Frobenius one),
vectors and scalars. Each constraint

    F(x) = F0 + sum_i x_i F_i  must be positive definite.

Strictness is materialized as an internal shift: F(x) - delta*(1 + s_j)*I
with s_j the per-block coefficient scale, so every feasibility certificate
carries an explicit, scale-aware margin that :func:`check_solution` can
re-verify without trusting solver internals.

Algorithm: infeasible-start primal barrier method.

* Phase I appends a scalar shift variable ``s`` and minimizes it over the
  cone {F_j(x) + s I > 0}. Any ``s < 0`` certifies strict feasibility; the
  search stops early once ``s`` clears a comfortable interior margin, or
  declares infeasibility once the duality bound ``s - mu*D`` is positive.
* Phase II maximizes the linear objective along the central path of the
  log-det barrier, shrinking the barrier weight geometrically and
  re-centering with damped Newton steps. Backtracking keeps all blocks
  inside the cone at every iterate, so intermediate solutions are always
  strictly feasible.

The solver is deterministic: no randomized pivoting or seeding anywhere,
identical inputs yield identical iterates.
"""

from __future__ import annotations

import contextlib
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import linalg
from .errors import DimensionMismatchError

try:  # BLAS threading hurts badly on the small dense blocks solved here
    from threadpoolctl import threadpool_limits as _thread_limits
except ImportError:  # pragma: no cover
    def _thread_limits(limits=None):
        return contextlib.nullcontext()

log = logging.getLogger(__name__)
log.addHandler(logging.NullHandler())

SYMMETRIC = "symmetric"
VECTOR = "vector"
SCALAR = "scalar"

STATUS_OPTIMAL = "optimal"
STATUS_FEASIBLE = "feasible"
STATUS_INFEASIBLE = "infeasible"
STATUS_MAXITER = "max_iter"
STATUS_NUMERICAL_FAILURE = "numerical_failure"

_SQRT2 = math.sqrt(2.0)
#: Headroom multiplier on the internal strictness shift so that margins
#: re-measured by eigensolvers stay at or above delta*(1 + scale).
_SHIFT_HEADROOM = 1.001
_ARMIJO = 0.01


@dataclass(frozen=True)
class VarSpec:
    """One structured decision variable (symmetric matrix, vector or scalar)."""

    name: str
    kind: str
    dim: int = 1

    def __post_init__(self):
        if self.kind not in (SYMMETRIC, VECTOR, SCALAR):
            raise ValueError(f"unknown variable kind {self.kind!r}")
        if self.dim < 1:
            raise ValueError("variable dimension must be positive")

    @property
    def size(self):
        """Number of scalar decision variables this contributes."""
        if self.kind == SYMMETRIC:
            return self.dim * (self.dim + 1) // 2
        if self.kind == VECTOR:
            return self.dim
        return 1


def sym_basis(d):
    """Orthonormal (Frobenius) basis of d x d symmetric matrices,
    upper-triangle row-major order, shape (d(d+1)/2, d, d)."""
    i, j = np.triu_indices(d)
    basis = np.zeros((i.size, d, d))
    idx = np.arange(i.size)
    basis[idx, i, j] = np.where(i == j, 1.0, 1.0 / _SQRT2)
    basis[idx, j, i] = np.where(i == j, 1.0, 1.0 / _SQRT2)
    return basis


def sym_to_flat(p):
    """Pack a symmetric matrix into the scaled upper-triangle coordinates."""
    p = np.asarray(p, dtype=float)
    i, j = np.triu_indices(p.shape[0])
    return p[i, j] * np.where(i == j, 1.0, _SQRT2)


def flat_to_sym(x, d):
    """Inverse of :func:`sym_to_flat`."""
    x = np.asarray(x, dtype=float).reshape(-1)
    i, j = np.triu_indices(d)
    if x.size != i.size:
        raise DimensionMismatchError(f"expected {i.size} coordinates for dim {d}")
    m = np.zeros((d, d))
    vals = x * np.where(i == j, 1.0, 1.0 / _SQRT2)
    m[i, j] = vals
    m[j, i] = vals
    return m


@dataclass(frozen=True)
class LmiConstraint:
    """Affine matrix map F(x) = f0 + sum_i x_i coeffs[i], required PD."""

    name: str
    f0: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        f0 = np.asarray(self.f0, dtype=float)
        coeffs = np.asarray(self.coeffs, dtype=float)
        object.__setattr__(self, "f0", f0)
        object.__setattr__(self, "coeffs", coeffs)
        d = f0.shape[0]
        if f0.shape != (d, d) or coeffs.ndim != 3 or coeffs.shape[1:] != (d, d):
            raise DimensionMismatchError(
                f"constraint {self.name!r}: coefficient shapes inconsistent")
        linalg.check_finite(f0, f"constraint {self.name!r} F0")
        linalg.check_finite(coeffs, f"constraint {self.name!r} coefficients")
        scale = 1.0 + np.abs(f0).max() + (np.abs(coeffs).max() if coeffs.size else 0.0)
        if np.abs(f0 - f0.T).max() > 1e-12 * scale \
                or (coeffs.size and np.abs(coeffs - coeffs.transpose(0, 2, 1)).max() > 1e-12 * scale):
            raise DimensionMismatchError(f"constraint {self.name!r}: matrices must be symmetric")

    @property
    def dim(self):
        return self.f0.shape[0]

    def evaluate(self, x):
        """F(x) for a flat decision vector."""
        return self.f0 + np.tensordot(np.asarray(x, dtype=float), self.coeffs, axes=1)

    def scale(self):
        """Scale of the block: the largest coefficient-slice Frobenius norm.

        The constant part is deliberately excluded so that folding large
        solved quantities into F0 (warm-started refinement problems) does
        not inflate the strictness shift.
        """
        if self.coeffs.size:
            s = float(np.linalg.norm(
                self.coeffs.reshape(self.coeffs.shape[0], -1), axis=1).max())
        else:
            s = 0.0
        return max(s, 1e-12)


@dataclass
class LmiProblem:
    """Strict LMI feasibility/optimization problem over structured variables.

    ``objective`` (optional) is maximized; ``delta`` is the strictness
    margin, applied per block as delta*(1 + block scale).
    """

    variables: list
    constraints: list
    objective: np.ndarray | None = None
    delta: float = 1e-6

    def __post_init__(self):
        if not self.constraints:
            raise ValueError("an LMI problem needs at least one constraint")
        if self.delta <= 0:
            raise ValueError("strictness margin delta must be positive")
        m = self.n_vars
        for c in self.constraints:
            if c.coeffs.shape[0] != m:
                raise DimensionMismatchError(
                    f"constraint {c.name!r} has {c.coeffs.shape[0]} coefficient "
                    f"slices for {m} variables")
        if self.objective is not None:
            obj = np.asarray(self.objective, dtype=float).reshape(-1)
            if obj.size != m:
                raise DimensionMismatchError("objective length != variable count")
            self.objective = obj

    @property
    def n_vars(self):
        return sum(v.size for v in self.variables)

    def var_slice(self, name):
        start = 0
        for v in self.variables:
            if v.name == name:
                return slice(start, start + v.size)
            start += v.size
        raise KeyError(f"no variable named {name!r}")

    def spec_of(self, name):
        for v in self.variables:
            if v.name == name:
                return v
        raise KeyError(f"no variable named {name!r}")

    def extract(self, x, name):
        """Structured value of one variable from a flat solution vector."""
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.size != self.n_vars:
            raise DimensionMismatchError("solution vector length != variable count")
        v = self.spec_of(name)
        part = x[self.var_slice(name)]
        if v.kind == SYMMETRIC:
            return flat_to_sym(part, v.dim)
        if v.kind == VECTOR:
            return part.copy()
        return float(part[0])

    def pack(self, **values):
        """Flat decision vector from named structured values (testing aid)."""
        x = np.zeros(self.n_vars)
        for name, value in values.items():
            v = self.spec_of(name)
            if v.kind == SYMMETRIC:
                x[self.var_slice(name)] = sym_to_flat(value)
            elif v.kind == VECTOR:
                x[self.var_slice(name)] = np.asarray(value, dtype=float).reshape(-1)
            else:
                x[self.var_slice(name)] = float(value)
        return x

    def required_margins(self):
        """Per-constraint minimal eigenvalue a certified solution must meet."""
        return np.array([self.delta * (1.0 + c.scale()) for c in self.constraints])

    def to_json(self):
        return {
            "variables": [{"name": v.name, "kind": v.kind, "dim": v.dim}
                          for v in self.variables],
            "constraints": [{
                "name": c.name,
                "f0": linalg.mat_to_json(c.f0),
                "coeffs": [linalg.mat_to_json(c.coeffs[i])
                           for i in range(c.coeffs.shape[0])],
            } for c in self.constraints],
            "objective": None if self.objective is None else [float(v) for v in self.objective],
            "delta": self.delta,
        }

    @classmethod
    def from_json(cls, obj):
        variables = [VarSpec(v["name"], v["kind"], int(v["dim"])) for v in obj["variables"]]
        constraints = []
        for c in obj["constraints"]:
            coeffs = np.stack([linalg.mat_from_json(m) for m in c["coeffs"]]) \
                if c["coeffs"] else np.zeros((0, 0, 0))
            constraints.append(LmiConstraint(c["name"], linalg.mat_from_json(c["f0"]), coeffs))
        objective = None if obj.get("objective") is None else np.asarray(obj["objective"])
        return cls(variables, constraints, objective, float(obj.get("delta", 1e-6)))

    def dump(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(json.load(fh))


@dataclass
class SdpSolution:
    """Solver output: flat decision vector, status, per-constraint minimal
    eigenvalues at x, and iteration/diagnostic info."""

    x: np.ndarray
    status: str
    min_eigs: np.ndarray
    iterations: int
    objective: float | None = None
    info: dict = field(default_factory=dict)

    @property
    def ok(self):
        return self.status in (STATUS_OPTIMAL, STATUS_FEASIBLE)


@dataclass
class SolverOptions:
    """Interior-point tuning knobs (defaults follow the design contract)."""

    max_iter: int = 200
    mu_reduction: float = 0.2
    gap_tol: float = 1e-8
    # intermediate stages center only into Newton's quadratic basin
    # (decrement^2/2 below stage_tol); the final stage re-centers tightly,
    # bounded by stage_iter_cap since deep centering is unreachable in
    # double precision once the barrier Hessian conditioning explodes
    stage_tol: float = 0.1
    final_tol: float = 1e-6
    stage_iter_cap: int = 60
    phase1_target: float = 1e-2
    ridge_max_tries: int = 6


def check_solution(problem, x):
    """Independent certificate check: minimal eigenvalue of every F_j(x),
    computed purely via the eigensolver (no solver internals)."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != problem.n_vars:
        raise DimensionMismatchError(
            f"solution has {x.size} entries, problem has {problem.n_vars} variables")
    return np.array([linalg.min_eig(c.evaluate(x)) for c in problem.constraints])


class _Cone:
    """Shifted, per-block-normalized constraint set with barrier calculus."""

    def __init__(self, problem, with_shift_var=False):
        self.blocks = []
        self.total_dim = 0
        for c in problem.constraints:
            scale = c.scale()
            margin = problem.delta * (1.0 + scale) * _SHIFT_HEADROOM
            d = c.dim
            g0 = (c.f0 - margin * np.eye(d)) / scale
            ga = c.coeffs / scale
            if with_shift_var:
                ga = np.concatenate([ga, np.eye(d)[None]], axis=0)
            self.blocks.append((g0, np.ascontiguousarray(ga), d))
            self.total_dim += d
        self.n_coords = self.blocks[0][1].shape[0]

    def factor(self, x):
        """Cholesky factors of every block at x, or None if outside the cone."""
        factors = []
        for g0, ga, d in self.blocks:
            g = g0 + np.tensordot(x, ga, axes=1)
            if not np.all(np.isfinite(g)):
                return None
            try:
                factors.append(np.linalg.cholesky(g))
            except np.linalg.LinAlgError:
                return None
        return factors

    def barrier(self, factors):
        """-sum_j logdet G_j from cached Cholesky factors."""
        return -2.0 * sum(float(np.sum(np.log(np.diag(fac)))) for fac in factors)

    def min_normalized_margin(self, factors):
        """Cheap interior-margin proxy: smallest squared Cholesky pivot."""
        return min(float(np.min(np.diag(fac)) ** 2) for fac in factors)

    def grad_hess(self, factors):
        """Gradient and Hessian of the log-det barrier at the factored point."""
        m = self.n_coords
        grad = np.zeros(m)
        hess = np.zeros((m, m))
        for (g0, ga, d), fac in zip(self.blocks, factors):
            # M_i = L^{-1} A_i L^{-T}, batched over i via horizontal stacking
            stacked = ga.transpose(1, 0, 2).reshape(d, m * d)
            half = scipy.linalg.solve_triangular(
                fac, stacked, lower=True, check_finite=False)
            half = half.reshape(d, m, d)
            stacked_t = half.transpose(2, 1, 0).reshape(d, m * d)
            full = scipy.linalg.solve_triangular(
                fac, stacked_t, lower=True, check_finite=False)
            mats = full.reshape(d, m, d).transpose(1, 0, 2)
            grad -= np.einsum("ijj->i", mats)
            flat = mats.reshape(m, d * d)
            hess += flat @ flat.T
        return grad, hess


def _newton_direction(hess, grad, opts):
    """Solve H dx = -grad with escalating Tikhonov regularization."""
    m = hess.shape[0]
    scale = max(float(np.trace(hess)) / m, 1e-300)
    ridge = 0.0
    for _ in range(opts.ridge_max_tries):
        try:
            fac = scipy.linalg.cho_factor(
                hess + ridge * np.eye(m) if ridge else hess,
                lower=True, check_finite=False)
            return scipy.linalg.cho_solve(fac, -grad, check_finite=False)
        except scipy.linalg.LinAlgError:
            ridge = max(ridge * 100.0, 1e-14 * scale)
    return None


def _barrier_minimize(cone, x0, obj, mu0, opts, label,
                      early_stop=None, stage_check=None, iter_offset=0):
    """Minimize obj @ x over the cone via the log-det barrier central path.

    Returns (x, verdict, iters, info) where verdict is "converged", a
    caller-defined early verdict, or one of the failure statuses.
    """
    x = x0.copy()
    factors = cone.factor(x)
    if factors is None:
        return x, STATUS_NUMERICAL_FAILURE, 0, {"reason": "initial point outside cone"}
    mu = mu0
    iters = 0
    big_d = cone.total_dim
    final_stage = False
    lam2 = np.inf
    while True:
        tol = opts.final_tol if final_stage else opts.stage_tol
        stage_iters = 0
        while True:
            grad_bar, hess = cone.grad_hess(factors)
            grad = obj / mu + grad_bar
            dx = _newton_direction(hess, grad, opts)
            if dx is None:
                return x, STATUS_NUMERICAL_FAILURE, iters, {
                    "reason": "singular Newton system beyond recovery"}
            lam2 = float(-grad @ dx)
            if lam2 <= 2.0 * tol or stage_iters >= opts.stage_iter_cap:
                break
            # cap steps along nearly-flat barrier directions (rank-deficient
            # Hessians otherwise allow arbitrarily large Newton moves)
            cap = 100.0 * (1.0 + float(np.max(np.abs(x))))
            dx_max = float(np.max(np.abs(dx)))
            if dx_max > cap:
                dx = dx * (cap / dx_max)
            phi0 = float(obj @ x) / mu + cone.barrier(factors)
            slope = float(grad @ dx)
            step = 1.0
            accepted = False
            for _ in range(60):
                x_try = x + step * dx
                factors_try = cone.factor(x_try)
                if factors_try is not None:
                    phi_try = float(obj @ x_try) / mu + cone.barrier(factors_try)
                    if phi_try <= phi0 + _ARMIJO * step * slope:
                        x, factors = x_try, factors_try
                        accepted = True
                        break
                step *= 0.5
            if not accepted:
                if lam2 <= 1e-6:
                    break  # at numerical centering precision already
                return x, STATUS_NUMERICAL_FAILURE, iters, {
                    "reason": "line search stalled", "newton_decrement": lam2}
            iters += 1
            stage_iters += 1
            if log.isEnabledFor(logging.DEBUG):
                log.debug("%s iter %d, barrier_param %.3e, min_margin %.3e, objective %.6e",
                          label, iter_offset + iters, mu,
                          cone.min_normalized_margin(factors), float(obj @ x))
            if early_stop is not None:
                verdict = early_stop(x)
                if verdict:
                    return x, verdict, iters, {"mu": mu}
            if iters >= opts.max_iter:
                return x, STATUS_MAXITER, iters, {"reason": "Newton iteration cap reached"}
            if abs(float(obj @ x)) > 1e13 or float(np.max(np.abs(x))) > 1e13:
                return x, STATUS_NUMERICAL_FAILURE, iters, {
                    "reason": "iterates diverging (objective unbounded over the cone?)"}
        if final_stage:
            return x, "converged", iters, {
                "gap": mu * big_d, "mu_final": mu, "newton_decrement": lam2}
        if stage_check is not None:
            verdict = stage_check(x, mu)
            if verdict:
                return x, verdict, iters, {"mu": mu}
        if mu * big_d <= opts.gap_tol * (1.0 + abs(float(obj @ x))):
            final_stage = True
        else:
            mu *= opts.mu_reduction


def _phase1(problem, opts):
    """Minimize the cone shift s; s < 0 certifies strict feasibility."""
    cone1 = _Cone(problem, with_shift_var=True)
    m1 = cone1.n_coords
    worst = min(linalg.min_eig(g0) for g0, _, _ in cone1.blocks)
    if worst > opts.phase1_target:
        # the origin is already comfortably strictly feasible
        return np.zeros(m1 - 1), STATUS_FEASIBLE, 0, {
            "phase1_shift": -worst, "phase1_iterations": 0, "phase1_skipped": True}
    x = np.zeros(m1)
    x[-1] = max(0.0, -worst) + 1.0
    obj = np.zeros(m1)
    obj[-1] = 1.0

    def early_stop(xc):
        # any iterate with s < 0 already certifies strict feasibility (the
        # blocks hold with margin |s|); razor-thin problems never reach a
        # comfortable shift, so accept just past the sign change
        return "interior" if xc[-1] <= -1e-8 else None

    def stage_check(xc, mu):
        # duality bound: the minimal achievable shift is >= s - mu*D at a
        # centered iterate (2x safety for inexact centering), so a positive
        # bound proves infeasibility without full convergence
        if xc[-1] - 2.0 * mu * cone1.total_dim > 0.0:
            return "infeasible_bound"
        return None

    mu0 = max(1.0, 0.1 * x[-1])
    x, verdict, iters, info = _barrier_minimize(
        cone1, x, obj, mu0, opts, "phase1",
        early_stop=early_stop, stage_check=stage_check)
    shift = float(x[-1])
    info = {**info, "phase1_shift": shift, "phase1_iterations": iters}
    if verdict == "interior" or (verdict == "converged" and shift < 0.0):
        return x[:-1], STATUS_FEASIBLE, iters, info
    if verdict in ("infeasible_bound",) or (verdict == "converged" and shift >= 0.0):
        return x[:-1], STATUS_INFEASIBLE, iters, info
    return x[:-1], verdict, iters, info


def _finalize(problem, x, status, iters, info):
    min_eigs = check_solution(problem, x)
    if status in (STATUS_FEASIBLE, STATUS_OPTIMAL):
        required = problem.required_margins()
        if np.any(min_eigs < required):
            status = STATUS_NUMERICAL_FAILURE
            info = {**info, "reason": "final margin check failed",
                    "min_eigs": min_eigs.tolist(), "required": required.tolist()}
    obj_val = None if problem.objective is None else float(problem.objective @ x)
    return SdpSolution(x, status, min_eigs, iters, obj_val, info)


def solve_feasibility(problem, options=None):
    """Find a strictly feasible point of the LMI system, or report
    infeasibility with the phase-I margin."""
    opts = options or SolverOptions()
    with _thread_limits(limits=1):
        x, status, iters, info = _phase1(problem, opts)
    return _finalize(problem, x, status, iters, info)


def maximize_linear(problem, options=None, x0=None):
    """Maximize the problem's linear objective over the strict LMI set.

    A strictly feasible ``x0`` (e.g. from a previous solve of a problem with
    the same cone) skips phase I entirely.
    """
    if problem.objective is None:
        raise ValueError("problem has no objective; use solve_feasibility")
    opts = options or SolverOptions()
    with _thread_limits(limits=1):
        cone = _Cone(problem)
        iters = 0
        info = {}
        if x0 is not None and cone.factor(np.asarray(x0, dtype=float)) is not None:
            x, status = np.asarray(x0, dtype=float).copy(), STATUS_FEASIBLE
            info["warm_start"] = True
        else:
            x, status, iters, info = _phase1(problem, opts)
            if status != STATUS_FEASIBLE:
                return _finalize(problem, x, status, iters, info)

        obj_min = -problem.objective  # maximize c --> minimize -c
        mu0 = max(1.0, abs(float(obj_min @ x)))
        x, verdict, iters2, info2 = _barrier_minimize(
            cone, x, obj_min, mu0, opts, "phase2", iter_offset=iters)
    info = {**info, **info2, "phase2_iterations": iters2}
    if verdict == "converged":
        status = STATUS_OPTIMAL
    else:
        status = verdict
    return _finalize(problem, x, status, iters + iters2, info)
