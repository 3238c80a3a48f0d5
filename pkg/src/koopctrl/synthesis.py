"""State-feedback synthesis for identified bilinear lifted models.

The closed loop z+ = (A + B0 k^T) z + B1 z (k^T z) [+ eps] is treated as a
linear fractional representation with the bilinear channel w = z u (and,
in robust mode, the truncation error eps with gain bound ||eps|| <=
l_eps ||z||) pulled out as structured uncertainties over a quadratic
validity region Z. Feasibility of one strict LMI in (P, y[, tau]) then
certifies asymptotic stability on the sublevel set {z : z^T P^{-1} z <= c}
contained in Z, with gain k = P^{-1} y.

Synthesis runs in the two-stage order: maximize tr(P) subject to the LMI
(bounded by a configurable cap beta*I - P > 0), then maximize the level c.
Certificates are re-verified without trusting the solver: independent
eigenvalue margins, Lyapunov decrease on sampled sublevel-set points
(with exact worst-case error directions in robust mode), and the two
proof-level matrix conditions re-assembled at the solution.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import linalg, sdp
from .errors import (
    DimensionMismatchError,
    InfeasibleSynthesisError,
    InvalidRegionError,
    NumericalFailureError,
)

log = logging.getLogger(__name__)
log.addHandler(logging.NullHandler())

NOMINAL = "nominal"
ROBUST = "robust"

#: Default cap beta*I - P > 0 that bounds the trace maximization.
DEFAULT_BETA = 1e3
#: Default strictness margin for synthesis LMIs.
DEFAULT_DELTA = 1e-6


@dataclass(frozen=True)
class RegionSpec:
    """Quadratic validity region {z : [z;1]^T [[q, s],[s^T, r]] [z;1] >= 0}
    with q negative definite and r > 0, plus the inverse blocks
    (qt, st, rt) of the indicator matrix that the LMIs consume."""

    q: np.ndarray
    s: np.ndarray
    r: float
    qt: np.ndarray
    st: np.ndarray
    rt: float

    @property
    def dim(self):
        return self.q.shape[0]

    @property
    def indicator(self):
        return np.block([[self.q, self.s], [self.s.T, np.array([[self.r]])]])

    def contains(self, z):
        """Membership test for a single point or a (N, S) batch."""
        z = np.asarray(z, dtype=float)
        single = z.ndim == 1
        pts = z[:, None] if single else z
        vals = (np.einsum("is,ij,js->s", pts, self.q, pts)
                + 2.0 * (self.s[:, 0] @ pts) + self.r)
        return bool(vals[0] >= 0) if single else vals >= 0

    def to_json(self):
        return {"q": linalg.mat_to_json(self.q), "s": linalg.mat_to_json(self.s),
                "r": self.r}

    @classmethod
    def from_json(cls, obj):
        return region_from_qsr(linalg.mat_from_json(obj["q"]),
                               linalg.mat_from_json(obj["s"]), float(obj["r"]))


def region_from_qsr(q, s, r):
    """Build a region from its indicator blocks, computing the inverse blocks."""
    q = linalg.check_finite(q, "region q")
    s = linalg.check_finite(s, "region s")
    if s.ndim == 1:
        s = s[:, None]
    n = q.shape[0]
    if q.shape != (n, n) or s.shape != (n, 1):
        raise DimensionMismatchError("region blocks must be (N, N) and (N, 1)")
    if linalg.max_eig(q) >= 0:
        raise InvalidRegionError("region requires q negative definite")
    if r <= 0:
        raise InvalidRegionError("region requires r > 0")
    indicator = np.block([[q, s], [s.T, np.array([[float(r)]])]])
    try:
        inverse = np.linalg.solve(indicator, np.eye(n + 1))
    except np.linalg.LinAlgError as exc:
        raise InvalidRegionError("region indicator matrix is singular") from exc
    residual = np.linalg.norm(indicator @ inverse - np.eye(n + 1))
    if residual > 1e-8 * (1.0 + np.linalg.norm(indicator)):
        raise InvalidRegionError("region indicator inverse is numerically unreliable")
    return RegionSpec(q, s, float(r), inverse[:n, :n], inverse[:n, n:], float(inverse[n, n]))


def region_ball(dim, c_z):
    """Centered ball region {z : z^T z <= c_z}; inverse blocks are exact."""
    if c_z <= 0:
        raise InvalidRegionError("ball region needs c_z > 0")
    eye = np.eye(dim)
    zero = np.zeros((dim, 1))
    return RegionSpec(-eye, zero, float(c_z), -eye, zero, 1.0 / float(c_z))


def _check_model_region(model, region):
    if region.dim != model.dimension:
        raise DimensionMismatchError(
            f"region dimension {region.dim} != model dimension {model.dimension}")


def build_nominal_lmi(model, region, beta=DEFAULT_BETA, delta=DEFAULT_DELTA,
                      sigma=1.0):
    """Nominal synthesis LMI over (P, y).

    The stability block (dimension 2N+1, row blocks z / u / successor) is

        [ P + B1 qt B1^T   -B1 st      A P + B0 y^T ]
        [     *              rt           y^T       ]
        [     *              *           sigma P    ]  > 0

    together with P > 0 and the trace cap beta*I - P > 0; the objective
    maximizes tr(P). At the default sigma = 1 this is the plain stability
    condition; sigma < 1 demands the certified one-step contraction
    V(z+) < sigma V(z), and any sigma-solution also satisfies the sigma = 1
    condition (the blocks differ by the positive-semidefinite successor
    corner (1 - sigma) P).
    """
    _check_model_region(model, region)
    big_n = model.dimension
    n_sym = big_n * (big_n + 1) // 2
    m = n_sym + big_n
    a, b0, b1 = model.a, model.b0, model.b1
    dim = 2 * big_n + 1
    r_u, r_s = big_n, big_n + 1

    f0 = np.zeros((dim, dim))
    f0[:big_n, :big_n] = b1 @ region.qt @ b1.T
    f0[:big_n, r_u] = -(b1 @ region.st)[:, 0]
    f0[r_u, :big_n] = f0[:big_n, r_u]
    f0[r_u, r_u] = region.rt

    basis = sdp.sym_basis(big_n)
    coeffs = np.zeros((m, dim, dim))
    for idx in range(n_sym):
        e = basis[idx]
        blk = coeffs[idx]
        blk[:big_n, :big_n] += e
        ae = a @ e
        blk[:big_n, r_s:] += ae
        blk[r_s:, :big_n] += ae.T
        blk[r_s:, r_s:] += sigma * e
    col = b0[:, 0]
    for i in range(big_n):
        blk = coeffs[n_sym + i]
        blk[:big_n, r_s + i] += col
        blk[r_s + i, :big_n] += col
        blk[r_u, r_s + i] += 1.0
        blk[r_s + i, r_u] += 1.0

    pd_coeffs = np.zeros((m, big_n, big_n))
    pd_coeffs[:n_sym] = basis
    cap_coeffs = np.zeros((m, big_n, big_n))
    cap_coeffs[:n_sym] = -basis

    objective = np.zeros(m)
    ii, jj = np.triu_indices(big_n)
    objective[:n_sym][ii == jj] = 1.0  # tr(P)

    return sdp.LmiProblem(
        variables=[sdp.VarSpec("P", sdp.SYMMETRIC, big_n),
                   sdp.VarSpec("y", sdp.VECTOR, big_n)],
        constraints=[
            sdp.LmiConstraint("P_pos_def", np.zeros((big_n, big_n)), pd_coeffs),
            sdp.LmiConstraint("stability", f0, coeffs),
            sdp.LmiConstraint("trace_cap", beta * np.eye(big_n), cap_coeffs),
        ],
        objective=objective,
        delta=delta,
    )


def build_robust_lmi(model, region, l_eps, beta=DEFAULT_BETA, delta=DEFAULT_DELTA,
                     sigma=1.0):
    """Robust synthesis LMI over (P, y, tau) for error gain bound l_eps.

    The stability block (dimension 3N+1, row blocks z / u / error channel /
    successor) is

        [ P + B1 qt B1^T - tau*I   -B1 st    0        A P + B0 y^T ]
        [        *                   rt      0            y^T      ]
        [        *                   *      tau*I       l_eps P    ]
        [        *                   *       *          sigma P    ]  > 0

    with P > 0, tau > 0 and the trace cap; objective tr(P). At l_eps = 0
    and vanishing tau this reduces to the nominal condition; sigma plays
    the same contraction-rate role as in :func:`build_nominal_lmi`.
    """
    _check_model_region(model, region)
    if l_eps < 0:
        raise ValueError("error gain bound l_eps must be nonnegative")
    big_n = model.dimension
    n_sym = big_n * (big_n + 1) // 2
    m = n_sym + big_n + 1
    assert m == (big_n * big_n + 3 * big_n) // 2 + 1  # structural variable count
    a, b0, b1 = model.a, model.b0, model.b1
    dim = 3 * big_n + 1
    r_u, r_e, r_s = big_n, big_n + 1, 2 * big_n + 1

    f0 = np.zeros((dim, dim))
    f0[:big_n, :big_n] = b1 @ region.qt @ b1.T
    f0[:big_n, r_u] = -(b1 @ region.st)[:, 0]
    f0[r_u, :big_n] = f0[:big_n, r_u]
    f0[r_u, r_u] = region.rt

    basis = sdp.sym_basis(big_n)
    coeffs = np.zeros((m, dim, dim))
    for idx in range(n_sym):
        e = basis[idx]
        blk = coeffs[idx]
        blk[:big_n, :big_n] += e
        ae = a @ e
        blk[:big_n, r_s:] += ae
        blk[r_s:, :big_n] += ae.T
        if l_eps:
            blk[r_e:r_e + big_n, r_s:] += l_eps * e
            blk[r_s:, r_e:r_e + big_n] += l_eps * e
        blk[r_s:, r_s:] += sigma * e
    col = b0[:, 0]
    for i in range(big_n):
        blk = coeffs[n_sym + i]
        blk[:big_n, r_s + i] += col
        blk[r_s + i, :big_n] += col
        blk[r_u, r_s + i] += 1.0
        blk[r_s + i, r_u] += 1.0
    tau_blk = coeffs[n_sym + big_n]
    tau_blk[:big_n, :big_n] -= np.eye(big_n)
    tau_blk[r_e:r_e + big_n, r_e:r_e + big_n] += np.eye(big_n)

    pd_coeffs = np.zeros((m, big_n, big_n))
    pd_coeffs[:n_sym] = basis
    cap_coeffs = np.zeros((m, big_n, big_n))
    cap_coeffs[:n_sym] = -basis
    tau_pos = np.zeros((m, 1, 1))
    tau_pos[n_sym + big_n, 0, 0] = 1.0

    objective = np.zeros(m)
    ii, jj = np.triu_indices(big_n)
    objective[:n_sym][ii == jj] = 1.0

    return sdp.LmiProblem(
        variables=[sdp.VarSpec("P", sdp.SYMMETRIC, big_n),
                   sdp.VarSpec("y", sdp.VECTOR, big_n),
                   sdp.VarSpec("tau", sdp.SCALAR)],
        constraints=[
            sdp.LmiConstraint("P_pos_def", np.zeros((big_n, big_n)), pd_coeffs),
            sdp.LmiConstraint("tau_pos", np.zeros((1, 1)), tau_pos),
            sdp.LmiConstraint("stability", f0, coeffs),
            sdp.LmiConstraint("trace_cap", beta * np.eye(big_n), cap_coeffs),
        ],
        objective=objective,
        delta=delta,
    )


@dataclass(frozen=True)
class Controller:
    """Synthesis output: certificate matrix P, parametrization y, the gain
    k = P^{-1} y, the S-procedure multiplier tau (0 in nominal mode), and
    the certified region-of-attraction level c."""

    p: np.ndarray
    y: np.ndarray
    k: np.ndarray
    tau: float
    c: float
    mode: str
    l_eps: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    @property
    def dimension(self):
        return self.p.shape[0]

    def lyapunov(self, z):
        """V(z) = z^T P^{-1} z for a point or an (N, S) batch."""
        z = np.asarray(z, dtype=float)
        pts = z[:, None] if z.ndim == 1 else z
        sol = linalg.solve_spd(self.p, pts)
        vals = np.einsum("is,is->s", pts, sol)
        return float(vals[0]) if z.ndim == 1 else vals

    def to_json(self):
        return {
            "P": linalg.mat_to_json(self.p),
            "y": linalg.mat_to_json(self.y[:, None]),
            "k": linalg.mat_to_json(self.k[:, None]),
            "tau": self.tau,
            "c": self.c,
            "mode": self.mode,
            "l_eps": self.l_eps,
            "diagnostics": dict(self.diagnostics),
        }

    @classmethod
    def from_json(cls, obj):
        return cls(
            p=linalg.mat_from_json(obj["P"]),
            y=linalg.mat_from_json(obj["y"])[:, 0],
            k=linalg.mat_from_json(obj["k"])[:, 0],
            tau=float(obj["tau"]),
            c=float(obj["c"]),
            mode=obj["mode"],
            l_eps=float(obj.get("l_eps", 0.0)),
            diagnostics=dict(obj.get("diagnostics", {})),
        )


def compute_roa(p, region, rel_tol=1e-6, max_bisect=60, solver_options=None):
    """Largest c with {z : z^T P^{-1} z <= c} contained in the region.

    Centered ball regions admit the closed form c = r / lambda_max(P);
    anything else is bisected with an S-procedure feasibility LMI per step.
    """
    p = linalg.check_finite(p, "P")
    eig = linalg.sym_eig(p)
    if eig.values[0] <= 0:
        raise InvalidRegionError("P must be positive definite to define a sublevel set")
    lam_max = float(eig.values[-1])
    n = p.shape[0]
    if region.dim != n:
        raise DimensionMismatchError("region and P dimensions differ")
    centered_ball = (np.array_equal(region.s, np.zeros((n, 1)))
                     and np.array_equal(region.q, -np.eye(n)))
    if centered_ball:
        return region.r / lam_max

    p_inv = eig.vectors @ np.diag(1.0 / eig.values) @ eig.vectors.T

    def feasible(c):
        # S-procedure: indicator - lam * [[-P^{-1}, 0], [0, c]] > 0, lam > 0
        coeff = np.zeros((1, n + 1, n + 1))
        coeff[0, :n, :n] = p_inv
        coeff[0, n, n] = -c
        lam_pos = np.zeros((1, 1, 1))
        lam_pos[0, 0, 0] = 1.0
        problem = sdp.LmiProblem(
            variables=[sdp.VarSpec("lam", sdp.SCALAR)],
            constraints=[
                sdp.LmiConstraint("containment", region.indicator, coeff),
                sdp.LmiConstraint("lam_pos", np.zeros((1, 1)), lam_pos),
            ],
            delta=1e-9,
        )
        return sdp.solve_feasibility(problem, solver_options).ok

    hi = region.r / (lam_max * max(-linalg.max_eig(region.q), 1e-12))
    lo = 0.0
    for _ in range(20):
        if not feasible(hi):
            break
        lo = hi
        hi *= 2.0
    else:
        return lo
    for _ in range(max_bisect):
        if hi - lo <= rel_tol * hi:
            break
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    if lo <= 0:
        raise InvalidRegionError("no positive sublevel level fits inside the region")
    return lo


def _build_synthesis_lmi(model, region, mode, l_eps, beta, delta, sigma=1.0):
    if mode == NOMINAL:
        return build_nominal_lmi(model, region, beta, delta, sigma)
    if mode == ROBUST:
        return build_robust_lmi(model, region, l_eps, beta, delta, sigma)
    raise ValueError(f"unknown synthesis mode {mode!r}")


def _best_contraction(model, region, mode, l_eps, beta, delta,
                      solver_options, max_probes=12):
    """Smallest certified contraction rate sigma for which the synthesis
    LMI stays feasible (generalized-eigenvalue-style bisection; each probe
    is one affine feasibility solve). Returns the last feasible sigma."""
    lo, hi = 0.0, 1.0  # hi is known feasible (caller established sigma = 1)
    for _ in range(max_probes):
        if hi - lo <= max(1e-3, 0.02 * (1.0 - hi)):
            break
        mid = 0.5 * (lo + hi)
        probe = _build_synthesis_lmi(model, region, mode, l_eps, beta, delta, mid)
        if sdp.solve_feasibility(probe, solver_options).ok:
            hi = mid
        else:
            lo = mid
    return hi


def synthesize(model, region, mode=NOMINAL, l_eps=0.0,
               beta=DEFAULT_BETA, delta=DEFAULT_DELTA, solver_options=None,
               gain_shaping=False):
    """Solve the synthesis LMI (maximizing tr(P)), extract the gain and the
    certified region-of-attraction level.

    The plain trace objective can leave the gain parametrization y
    degenerate when the identified model is already (near-)stable:
    near-zero feedback is then trace-optimal. The opt-in ``gain_shaping``
    extension first minimizes the certified one-step contraction rate by
    bisection (each probe a feasibility solve of the same LMI with the
    successor corner scaled), then maximizes the trace within that
    maximal-contraction family. Every certificate returned also satisfies
    the plain stability LMI, and feasibility verdicts are unaffected.

    Raises :class:`InfeasibleSynthesisError` when no certificate exists for
    this model/region (and error bound), :class:`NumericalFailureError` on
    solver breakdown.
    """
    problem = _build_synthesis_lmi(model, region, mode, l_eps, beta, delta)

    solution = sdp.maximize_linear(problem, solver_options)
    if solution.status == sdp.STATUS_INFEASIBLE:
        margin = solution.info.get("phase1_shift")
        raise InfeasibleSynthesisError(
            f"{mode} synthesis LMI infeasible (phase-I shift {margin!r}): the "
            "lifting/region/error-bound combination admits no certificate",
            margin=margin)
    if not solution.ok:
        raise NumericalFailureError(
            f"{mode} synthesis failed with solver status {solution.status}: "
            f"{solution.info.get('reason', 'unknown')}")

    contraction = None
    if gain_shaping:
        sigma = _best_contraction(model, region, mode, l_eps, beta, delta,
                                  solver_options)
        if sigma < 1.0:
            shaped_problem = _build_synthesis_lmi(
                model, region, mode, l_eps, beta, delta, sigma)
            shaped = sdp.maximize_linear(shaped_problem, solver_options)
            if shaped.ok and np.all(sdp.check_solution(problem, shaped.x)
                                    >= problem.required_margins()):
                solution = sdp.SdpSolution(
                    x=shaped.x, status=solution.status, min_eigs=shaped.min_eigs,
                    iterations=solution.iterations + shaped.iterations,
                    objective=shaped.objective,
                    info={**solution.info, "shaped": shaped.info})
                contraction = sigma
        if contraction is None:
            log.info("contraction shaping not adopted; keeping the plain "
                     "trace-optimal certificate")

    p = problem.extract(solution.x, "P")
    y = problem.extract(solution.x, "y")
    tau = problem.extract(solution.x, "tau") if mode == ROBUST else 0.0

    margins = sdp.check_solution(problem, solution.x)
    required = problem.required_margins()
    if np.any(margins < required):
        raise NumericalFailureError("independent certificate margin check failed")

    k = linalg.solve_spd(p, y)
    c = compute_roa(p, region)
    diagnostics = {
        "status": solution.status,
        "iterations": solution.iterations,
        "objective_trace_p": solution.objective,
        "certified_contraction": contraction,
        "lmi_dim": problem.constraints[-2].dim if mode == ROBUST else problem.constraints[1].dim,
        "n_vars": problem.n_vars,
        "gap": solution.info.get("gap"),
        "newton_decrement": solution.info.get("newton_decrement"),
        "constraint_margins": margins.tolist(),
        "beta": beta,
        "delta": delta,
        "trace_cap_active": bool(linalg.max_eig(p) > 0.99 * beta),
    }
    return Controller(p=p, y=y, k=k, tau=float(tau), c=float(c), mode=mode,
                      l_eps=float(l_eps) if mode == ROBUST else 0.0,
                      diagnostics=diagnostics)


def max_quadratic_on_ball(m, b, radius):
    """Maximize (b + e)^T M (b + e) over ||e|| <= radius for M > 0.

    The maximum of a convex quadratic over a ball sits on the sphere; the
    maximizer solves the secular equation of the shifted eigenproblem,
    including the degenerate case where b has no component along the top
    eigenspace. Scalar reference implementation; the batched variant used
    in verification is :func:`_worst_error_batch`.
    """
    eig = linalg.sym_eig(m)
    eps = _worst_error_batch(eig.values, eig.vectors,
                             np.asarray(b, dtype=float).reshape(-1, 1),
                             np.array([float(radius)]))
    return eps[:, 0]


def _worst_error_batch(lam, vec, b, radii):
    """Worst-case push directions for a batch of centers b (N, S) and per-
    sample radii (S,), for the quadratic form with eigenpairs (lam, vec)."""
    big_n, n_pts = b.shape
    beta = vec.T @ b
    lam_col = lam[:, None]
    lb = lam_col * beta
    lam_top = lam[-1]
    gaps = lam_top - lam  # >= 0, ascending order makes gaps[-1] = 0
    radii = np.asarray(radii, dtype=float)

    out = np.zeros_like(b)
    active = radii > 0
    if not np.any(active):
        return out
    lb_a = lb[:, active]
    r_a = radii[active]

    # secular equation in t = nu - lam_top:
    #   f(t) = sum_i (lam_i beta_i)^2 / (t + gap_i)^2 = r^2,  t > 0
    norm_lb = np.linalg.norm(lb_a, axis=0)
    hi = norm_lb / r_a + 1e-300
    lo = np.full_like(hi, 1e-200)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        for _ in range(90):  # geometric bisection, robust near the hard case
            mid = np.sqrt(lo * hi)
            f_mid = np.sum((lb_a / (mid[None, :] + gaps[:, None])) ** 2, axis=0)
            too_big = f_mid > r_a ** 2
            lo = np.where(too_big, mid, lo)
            hi = np.where(too_big, hi, mid)
        t_star = np.sqrt(lo * hi)
        w = lb_a / (t_star[None, :] + gaps[:, None])
    # place the remaining norm budget along the top eigendirection (exact in
    # the hard case, a no-op after a converged regular-case bisection); the
    # result never leaves the ball
    rest = np.sum(w[:-1, :] ** 2, axis=0)
    top = np.sqrt(np.maximum(r_a ** 2 - rest, 0.0))
    w[-1, :] = np.where(lb_a[-1, :] >= 0, top, -top)
    out[:, active] = vec @ w
    return out


@dataclass(frozen=True)
class CertificateReport:
    """Numerical re-verification of a synthesized certificate.

    The dualized proof form involves P^{-1}; for badly conditioned
    certificates its true margin (of order delta / cond(P)^2) can sit below
    what double-precision eigenvalues resolve, so the pass criterion allows
    it within the eigensolver's noise floor (a small multiple of machine
    epsilon times the matrix scale) instead of demanding a signed zero.
    """

    mode: str
    l_eps: float
    n_samples: int
    violations: int
    min_decrease: float
    primal_proof_min_eig: float
    dual_proof_max_eig: float
    dual_scale: float = 1.0
    notes: dict = field(default_factory=dict)

    @property
    def dual_noise_floor(self):
        return 1e-12 * self.dual_scale

    @property
    def passed(self):
        return (self.violations == 0 and self.primal_proof_min_eig > 0
                and self.dual_proof_max_eig < self.dual_noise_floor)

    def to_json(self):
        return {
            "mode": self.mode,
            "l_eps": self.l_eps,
            "n_samples": self.n_samples,
            "violations": self.violations,
            "min_decrease": self.min_decrease,
            "primal_proof_min_eig": self.primal_proof_min_eig,
            "dual_proof_max_eig": self.dual_proof_max_eig,
            "dual_noise_floor": self.dual_noise_floor,
            "passed": self.passed,
            "notes": dict(self.notes),
        }


def proof_matrices(model, controller, region, l_eps=None):
    """Re-assemble the proof-level matrix conditions at the solution.

    Returns (primal, dual): the Schur-complement form that must be positive
    definite, and its dualized counterpart (built from P^{-1} and the
    non-inverted region blocks) that must be negative definite.
    """
    a, b0, b1 = model.a, model.b0, model.b1
    big_n = model.dimension
    p = controller.p
    k = controller.k
    p_inv = linalg.solve_spd(p, np.eye(big_n))
    a_cl = a + b0 @ k[None, :]
    eye = np.eye(big_n)
    zero = np.zeros((big_n, big_n))
    zcol = np.zeros((big_n, 1))
    region_inv = np.block([[region.qt, region.st], [region.st.T, np.array([[region.rt]])]])
    region_ind = region.indicator

    if controller.mode == NOMINAL:
        outer_p = np.block([
            [a_cl.T, k[:, None]],
            [-eye, zcol],
            [b1.T, zcol],
            [zcol.T, np.array([[-1.0]])],
        ])
        middle_p = scipy.linalg.block_diag(-p, p, region_inv)
        outer_d = np.block([
            [eye, zero],
            [a_cl, b1],
            [zero, eye],
            [k[None, :], zcol.T],
        ])
        middle_d = scipy.linalg.block_diag(-p_inv, p_inv, region_ind)
    else:
        le = controller.l_eps if l_eps is None else l_eps
        tau = controller.tau
        outer_p = np.block([
            [a_cl.T, k[:, None], le * eye],
            [-eye, zcol, zero],
            [b1.T, zcol, zero],
            [zcol.T, np.array([[-1.0]]), zcol.T],
            [zero, zcol, -eye],
            [eye, zcol, zero],
        ])
        middle_p = scipy.linalg.block_diag(-p, p, region_inv, tau * eye, -tau * eye)
        outer_d = np.block([
            [eye, zero, zero],
            [a_cl, b1, eye],
            [zero, eye, zero],
            [k[None, :], zcol.T, zcol.T],
            [le * eye, zero, zero],
            [zero, zero, eye],
        ])
        middle_d = scipy.linalg.block_diag(
            -p_inv, p_inv, region_ind, (1.0 / tau) * eye, -(1.0 / tau) * eye)
    primal = outer_p.T @ middle_p @ outer_p
    dual = outer_d.T @ middle_d @ outer_d
    return 0.5 * (primal + primal.T), 0.5 * (dual + dual.T)


def verify_certificate(model, controller, region, l_eps=None,
                       n_samples=10000, seed=0):
    """Sample-based and proof-level re-verification of a certificate.

    Draws points in the certified sublevel set (origin excluded), checks the
    Lyapunov decrease along the identified dynamics (against the exact
    worst-case error direction in robust mode), and reports the definiteness
    margins of the re-assembled proof matrices. Violations are reported, not
    raised.
    """
    big_n = model.dimension
    p = controller.p
    if l_eps is None:
        l_eps = controller.l_eps
    rng = np.random.default_rng(seed)

    # uniform samples in the sublevel ellipsoid {z^T P^{-1} z <= c}, z != 0
    w = rng.standard_normal((big_n, n_samples))
    norms = np.linalg.norm(w, axis=0)
    keep = norms > 1e-12
    w = w[:, keep] / norms[keep]
    w *= rng.random(w.shape[1]) ** (1.0 / big_n)
    chol_p = np.linalg.cholesky(0.5 * (p + p.T))
    z = math.sqrt(controller.c) * (chol_p @ w)

    u = controller.k @ z
    z_next = model.a @ z + model.b0 @ u[None, :] + (model.b1 @ z) * u[None, :]
    if controller.mode == ROBUST and l_eps > 0:
        p_eig = linalg.sym_eig(linalg.solve_spd(p, np.eye(big_n)))
        radii = l_eps * np.linalg.norm(z, axis=0)
        z_next = z_next + _worst_error_batch(p_eig.values, p_eig.vectors, z_next, radii)

    v_now = np.einsum("is,is->s", z, linalg.solve_spd(p, z))
    v_next = np.einsum("is,is->s", z_next, linalg.solve_spd(p, z_next))
    decrease = v_now - v_next
    violations = int(np.count_nonzero(decrease <= 0))

    primal, dual = proof_matrices(model, controller, region, l_eps)
    report = CertificateReport(
        mode=controller.mode,
        l_eps=float(l_eps),
        n_samples=int(z.shape[1]),
        violations=violations,
        min_decrease=float(decrease.min()) if decrease.size else float("nan"),
        primal_proof_min_eig=linalg.min_eig(primal),
        dual_proof_max_eig=linalg.max_eig(dual),
        dual_scale=float(np.linalg.norm(dual)),
        notes={"seed": seed, "c": controller.c},
    )
    if not report.passed:
        log.warning("certificate verification found problems: %s", report.to_json())
    return report
