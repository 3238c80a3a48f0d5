"""EDMD identification of lifted bilinear dynamics from trajectory data.

Snapshot matrices are regressed as Z+ ~ [A B0 B1] Y with
Y = [Z; U; Z diag(U)], either over all N lifted rows (full fit) or, for
delay liftings, only over the n physical-state rows with the remaining
rows assembled from the known shift structure (structured fit).

The residual per sample, eps_k = z_{k+1} - A z_k - u_k (B0 + B1 z_k), is
the dictionary truncation error. Its maximal gain ||eps_k|| / ||z_k|| over
the training data (``l_hat``) is an *empirical, heuristic* stand-in for a
rigorous finite-gain bound; consumers inflate it (default 1.5x) before
feeding it to the robust synthesis.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .errors import (
    DimensionMismatchError,
    InsufficientDataError,
    NonFiniteError,
    WrongKindError,
)
from .lifting import DELAY, MONOMIAL, LiftingSpec, delay_lift, monomial_lift, structure_matrices

log = logging.getLogger(__name__)
log.addHandler(logging.NullHandler())

#: Samples with lifted norm below this are excluded from gain statistics
#: (division guard); their residuals still count toward the rms.
ZERO_NORM_GUARD = 1e-12


@dataclass(frozen=True)
class Dataset:
    """Recorded trajectory with an explicit unforced warm-up prefix.

    ``states`` has ``n_warmup + L + 1`` rows and ``inputs`` has
    ``n_warmup + L`` entries; the prefix only serves delay-window
    construction and is ignored by history-free liftings.
    """

    states: np.ndarray
    inputs: np.ndarray
    tau_s: float
    n_warmup: int = 0
    seed: int | None = None
    source: str = ""

    def __post_init__(self):
        states = np.asarray(self.states, dtype=float)
        inputs = np.asarray(self.inputs, dtype=float).reshape(-1)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "inputs", inputs)
        if not (np.all(np.isfinite(states)) and np.all(np.isfinite(inputs))):
            raise NonFiniteError("dataset contains NaN or Inf samples")
        if states.ndim != 2:
            raise DimensionMismatchError("dataset states must be (T+1, n)")
        if states.shape[0] != inputs.shape[0] + 1:
            raise DimensionMismatchError("dataset needs len(states) == len(inputs) + 1")
        if self.n_warmup < 0 or self.n_warmup >= inputs.shape[0]:
            raise InsufficientDataError("warm-up prefix leaves no usable samples")

    @property
    def n(self):
        return self.states.shape[1]

    @property
    def length(self):
        """Number of regression samples L (after the warm-up prefix)."""
        return self.inputs.shape[0] - self.n_warmup


def dataset_from_trajectory(traj, n_warmup=0, seed=None, source=""):
    """Wrap a simulated trajectory as a dataset with a warm-up prefix."""
    return Dataset(traj.states, traj.inputs, traj.tau_s,
                   n_warmup=n_warmup, seed=seed, source=source)


def dataset_to_csv(ds):
    """CSV text ``k,x1..xn,u``; warm-up rows carry negative k, the final
    state row has an empty input cell."""
    header = "k," + ",".join(f"x{i + 1}" for i in range(ds.n)) + ",u"
    lines = [header]
    total = ds.inputs.shape[0]
    for row in range(ds.states.shape[0]):
        k = row - ds.n_warmup
        u = repr(float(ds.inputs[row])) if row < total else ""
        lines.append(",".join([str(k)] + [repr(float(v)) for v in ds.states[row]] + [u]))
    return "\n".join(lines) + "\n"


def dataset_from_csv(text, tau_s, n_warmup=0, seed=None, source=""):
    """Parse :func:`dataset_to_csv` output back into a dataset."""
    lines = [ln for ln in text.strip().splitlines() if ln]
    states, inputs = [], []
    for ln in lines[1:]:
        cells = ln.split(",")
        states.append([float(v) for v in cells[1:-1]])
        if cells[-1]:
            inputs.append(float(cells[-1]))
    return Dataset(np.array(states), np.array(inputs), tau_s,
                   n_warmup=n_warmup, seed=seed, source=source)


def dataset_hash(ds):
    """Content hash of the sample arrays (provenance for fitted models)."""
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(ds.states).tobytes())
    h.update(np.ascontiguousarray(ds.inputs).tobytes())
    return h.hexdigest()


@dataclass(frozen=True)
class BilinearModel:
    """Identified lifted dynamics z+ = A z + u (B0 + B1 z)."""

    a: np.ndarray
    b0: np.ndarray
    b1: np.ndarray
    spec: LiftingSpec
    structured: bool = False
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        big_n = self.spec.dimension
        if self.a.shape != (big_n, big_n) or self.b0.shape != (big_n, 1) \
                or self.b1.shape != (big_n, big_n):
            raise DimensionMismatchError("model matrices inconsistent with lifting dimension")
        for name, m in (("A", self.a), ("B0", self.b0), ("B1", self.b1)):
            linalg.check_finite(m, name)
        if self.structured:
            known = structure_matrices(self.spec)
            n = self.spec.n
            if not (np.array_equal(self.a[n:], known.a_known)
                    and np.array_equal(self.b0[n:], known.b0_known)
                    and np.array_equal(self.b1[n:], known.b1_known)):
                raise DimensionMismatchError(
                    "structured model's bottom rows must equal the known shift blocks")

    @property
    def dimension(self):
        return self.spec.dimension

    def step(self, z, u):
        """One step of the identified dynamics."""
        z = np.asarray(z, dtype=float).reshape(-1)
        return self.a @ z + float(u) * (self.b0[:, 0] + self.b1 @ z)

    def to_json(self):
        return {
            "spec": self.spec.to_json(),
            "A": linalg.mat_to_json(self.a),
            "B0": linalg.mat_to_json(self.b0),
            "B1": linalg.mat_to_json(self.b1),
            "structured": self.structured,
            "provenance": dict(self.provenance),
        }

    @classmethod
    def from_json(cls, obj):
        return cls(
            a=linalg.mat_from_json(obj["A"]),
            b0=linalg.mat_from_json(obj["B0"]),
            b1=linalg.mat_from_json(obj["B1"]),
            spec=LiftingSpec.from_json(obj["spec"]),
            structured=bool(obj.get("structured", False)),
            provenance=dict(obj.get("provenance", {})),
        )


def build_data_matrices(ds, spec):
    """Snapshot matrices (Z, Z_plus, U, Y, X_plus) for a dataset and lifting.

    Columns k = 0..L-1 index the post-warm-up segment; delay columns use the
    window ending at each k, which the warm-up prefix must cover.
    """
    if ds.n != spec.n:
        raise DimensionMismatchError(
            f"dataset state dimension {ds.n} != lifting state dimension {spec.n}")
    length = ds.length
    if length < 1:
        raise InsufficientDataError("dataset has no regression samples")
    off = ds.n_warmup
    if spec.kind == DELAY:
        if spec.dx > ds.n_warmup:
            raise InsufficientDataError(
                f"delay lifting needs a warm-up prefix of at least dx = {spec.dx} "
                f"samples, dataset has {ds.n_warmup}")
        zcols = [
            delay_lift(ds.states[off + k - spec.dx:off + k + 1],
                       ds.inputs[off + k - spec.du:off + k], spec)
            for k in range(length)
        ]
        zpcols = [
            delay_lift(ds.states[off + k + 1 - spec.dx:off + k + 2],
                       ds.inputs[off + k + 1 - spec.du:off + k + 1], spec)
            for k in range(length)
        ]
        z = np.column_stack(zcols)
        z_plus = np.column_stack(zpcols)
    else:
        lifted = np.column_stack(
            [monomial_lift(ds.states[off + k], spec.degree) for k in range(length + 1)])
        z = lifted[:, :-1]
        z_plus = lifted[:, 1:]
    u = ds.inputs[off:off + length].copy()
    y = np.vstack([z, u[None, :], z * u[None, :]])
    x_plus = ds.states[off + 1:off + length + 1].T.copy()
    return z, z_plus, u, y, x_plus


def _rank_check(y, label):
    rank = int(np.linalg.matrix_rank(y))
    if rank < y.shape[0]:
        log.warning("%s: data matrix Y has numerical rank %d < %d; "
                    "the identified model is not unique", label, rank, y.shape[0])
    return rank


def fit_full(z_plus, y, rtol=linalg.DEFAULT_PINV_RTOL):
    """Least-squares fit [A B0 B1] = Z_plus Y^+ over all lifted rows."""
    z_plus = linalg.check_finite(z_plus, "Z_plus")
    y = linalg.check_finite(y, "Y")
    big_n = z_plus.shape[0]
    if y.shape != (2 * big_n + 1, z_plus.shape[1]):
        raise DimensionMismatchError(
            f"Y must be (2N+1, L) = ({2 * big_n + 1}, {z_plus.shape[1]}), got {y.shape}")
    _rank_check(y, "fit_full")
    coef = z_plus @ linalg.pinv(y, rtol)
    return coef[:, :big_n], coef[:, big_n:big_n + 1], coef[:, big_n + 1:]


def fit_structured(x_plus, y, spec, rtol=linalg.DEFAULT_PINV_RTOL, provenance=None):
    """Least-squares fit of the unknown top-n rows only; the rest comes from
    the delay shift structure."""
    if spec.kind != DELAY:
        raise WrongKindError("structured fit needs a delay spec")
    x_plus = linalg.check_finite(x_plus, "X_plus")
    y = linalg.check_finite(y, "Y")
    big_n, n = spec.dimension, spec.n
    if x_plus.shape[0] != n or y.shape != (2 * big_n + 1, x_plus.shape[1]):
        raise DimensionMismatchError("X_plus/Y dimensions inconsistent with spec")
    _rank_check(y, "fit_structured")
    coef = x_plus @ linalg.pinv(y, rtol)
    known = structure_matrices(spec)
    a = np.vstack([coef[:, :big_n], known.a_known])
    b0 = np.vstack([coef[:, big_n:big_n + 1], known.b0_known])
    b1 = np.vstack([coef[:, big_n + 1:], known.b1_known])
    return BilinearModel(a, b0, b1, spec, structured=True,
                         provenance=dict(provenance or {}))


def fit_dataset(ds, spec, structured=None, rtol=linalg.DEFAULT_PINV_RTOL):
    """Identify a model from a dataset; delay specs default to the
    structured fit."""
    if structured is None:
        structured = spec.kind == DELAY
    _, z_plus, _, y, x_plus = build_data_matrices(ds, spec)
    provenance = {"data_sha256": dataset_hash(ds), "samples": int(ds.length),
                  "rank_y": int(np.linalg.matrix_rank(y))}
    if structured:
        return fit_structured(x_plus, y, spec, rtol, provenance)
    a, b0, b1 = fit_full(z_plus, y, rtol)
    return BilinearModel(a, b0, b1, spec, structured=False, provenance=provenance)


@dataclass(frozen=True)
class ErrorReport:
    """Per-sample truncation residuals and their empirical gain statistics.

    ``l_hat`` is the max of ||eps_k||/||z_k|| over samples with nonzero
    lifted norm — a heuristic surrogate for a finite-gain bound, not a
    certified one. ``assumption_violated`` flags samples with z_k = 0 but
    eps_k != 0, which no finite gain can cover.
    """

    residuals: np.ndarray
    gains: np.ndarray
    l_hat: float
    rms: float
    n_excluded: int = 0
    assumption_violated: bool = False

    def summary(self):
        return {
            "estimator": "empirical max residual gain (heuristic)",
            "l_hat": self.l_hat,
            "rms": self.rms,
            "samples": int(self.gains.size + self.n_excluded),
            "excluded_zero_norm": self.n_excluded,
            "assumption_violated": self.assumption_violated,
        }


def residuals(model, ds):
    """Truncation residuals of a model on a dataset."""
    z, z_plus, u, _, _ = build_data_matrices(ds, model.spec)
    pred = model.a @ z + model.b0 @ u[None, :] + model.b1 @ (z * u[None, :])
    eps = z_plus - pred
    eps_norms = np.linalg.norm(eps, axis=0)
    z_norms = np.linalg.norm(z, axis=0)
    valid = z_norms > ZERO_NORM_GUARD
    gains = eps_norms[valid] / z_norms[valid]
    l_hat = float(gains.max()) if gains.size else 0.0
    rms = float(np.sqrt(np.mean(eps_norms ** 2)))
    violated = bool(np.any(~valid & (eps_norms > 0)))
    return ErrorReport(eps, gains, l_hat, rms,
                       n_excluded=int(np.count_nonzero(~valid)),
                       assumption_violated=violated)
