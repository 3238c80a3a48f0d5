"""Observable dictionaries mapping the physical state into the lifted state.

Two dictionaries are provided:

* ``monomial``: all monomials of the state up to a maximum total degree,
  in graded-lexicographic order with the degree-1 block first, so the state
  is recovered exactly as the leading ``n`` coordinates of ``z``.
* ``delay``: the current state stacked with a window of past states, past
  inputs and past state-input products,

      z_k = (x_k, x_{k-1}, ..., x_{k-dx}, u_{k-1}, ..., u_{k-du},
             x_{k-1} u_{k-1}, ..., x_{k-du} u_{k-du}).

  The window part of z evolves by a known shift structure
  (:func:`structure_matrices`) that the structured identification exploits:
  the bottom N-n rows of z_{k+1} equal A_known z_k + u_k (B0_known +
  B1_known z_k) with zero error, by construction.

Both dictionaries vanish exactly at the origin and only there (they contain
the state itself), so the lifted system inherits the equilibrium at zero.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import (
    DimensionMismatchError,
    HistoryLengthError,
    WrongKindError,
)

MONOMIAL = "monomial"
DELAY = "delay"


@dataclass(frozen=True)
class LiftingSpec:
    """Dictionary selection: monomial(max degree) or delay(dx, du) windows."""

    kind: str
    n: int
    degree: int | None = None
    dx: int | None = None
    du: int | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("state dimension must be at least 1")
        if self.kind == MONOMIAL:
            if self.degree is None or self.degree < 1:
                raise ValueError("monomial lifting needs max degree >= 1")
        elif self.kind == DELAY:
            if self.dx is None or self.du is None or self.dx < 0 or self.du < 0:
                raise ValueError("delay lifting needs dx >= 0 and du >= 0")
            if self.du > self.dx:
                raise ValueError("delay lifting requires dx >= du")
        else:
            raise ValueError(f"unknown lifting kind {self.kind!r}")

    @classmethod
    def monomial(cls, n, degree):
        return cls(MONOMIAL, n, degree=degree)

    @classmethod
    def delay(cls, n, dx, du=0):
        return cls(DELAY, n, dx=dx, du=du)

    @property
    def dimension(self):
        """Number of lifted coordinates N."""
        if self.kind == MONOMIAL:
            return math.comb(self.n + self.degree, self.degree) - 1
        return self.n * (1 + self.dx + self.du) + self.du

    def to_json(self):
        if self.kind == MONOMIAL:
            return {"kind": MONOMIAL, "n": self.n, "degree": self.degree}
        return {"kind": DELAY, "n": self.n, "dx": self.dx, "du": self.du}

    @classmethod
    def from_json(cls, obj):
        if obj["kind"] == MONOMIAL:
            return cls.monomial(int(obj["n"]), int(obj["degree"]))
        if obj["kind"] == DELAY:
            return cls.delay(int(obj["n"]), int(obj["dx"]), int(obj["du"]))
        raise ValueError(f"unknown lifting kind {obj['kind']!r}")


def dimension(spec):
    """Lifted dimension N for a spec."""
    return spec.dimension


@lru_cache(maxsize=None)
def monomial_exponents(n, degree):
    """Exponent matrix (N, n) in graded-lex order, degree-1 block first.

    Order depends only on (n, degree), which keeps serialized models
    portable across runs.
    """
    rows = []
    for total in range(1, degree + 1):
        for combo in itertools.combinations_with_replacement(range(n), total):
            e = [0] * n
            for i in combo:
                e[i] += 1
            rows.append(e)
    return np.array(rows, dtype=int)


def monomial_lift(x, degree):
    """Lift a state into all its monomials of total degree 1..degree."""
    x = np.asarray(x, dtype=float).reshape(-1)
    exps = monomial_exponents(x.size, degree)
    powers = x[None, :] ** np.arange(degree + 1)[:, None]  # (degree+1, n)
    return np.prod(powers[exps, np.arange(x.size)[None, :]], axis=1)


def delay_lift(x_hist, u_hist, spec):
    """Lift a state/input history window into delay coordinates.

    ``x_hist`` holds x_{k-dx}..x_k (oldest first, dx+1 rows); ``u_hist``
    holds u_{k-du}..u_{k-1} (du entries, empty for du = 0).
    """
    if spec.kind != DELAY:
        raise WrongKindError("delay_lift needs a delay spec")
    x_hist = np.asarray(x_hist, dtype=float)
    if x_hist.ndim == 1:
        x_hist = x_hist[:, None]
    u_hist = np.asarray(u_hist, dtype=float).reshape(-1)
    if x_hist.shape != (spec.dx + 1, spec.n):
        raise HistoryLengthError(
            f"state history must be (dx+1, n) = ({spec.dx + 1}, {spec.n}), "
            f"got {x_hist.shape}")
    if u_hist.shape != (spec.du,):
        raise HistoryLengthError(
            f"input history must have du = {spec.du} entries, got {u_hist.size}")
    xk = x_hist[-1]
    hx = x_hist[-2::-1].reshape(-1)
    hu = u_hist[::-1]
    # x_{k-j} * u_{k-j} for j = 1..du; empty slice when du = 0
    hxu = (x_hist[-2:-2 - spec.du:-1] * hu[:, None]).reshape(-1)
    return np.concatenate([xk, hx, hu, hxu])


@dataclass(frozen=True)
class DelayStructure:
    """Known shift blocks of the delay lifting's bottom N-n rows.

    Entries are exactly 0 or 1. ``a_known`` shifts the state/input/product
    windows, ``b0_known`` injects the fresh input into the first input-history
    slot, and ``b1_known`` routes x_k into the first state-input-product slot
    (scaled by u_k at evaluation time).
    """

    a_known: np.ndarray
    b0_known: np.ndarray
    b1_known: np.ndarray


def structure_matrices(spec):
    """Shift-structure blocks for the bottom N-n rows of a delay lifting.

    For du = 0 the input and product windows are empty, so ``b0_known`` and
    ``b1_known`` are all-zero (their rows remain, under the state window).
    """
    if spec.kind != DELAY:
        raise WrongKindError("structure_matrices needs a delay spec")
    n, dx, du = spec.n, spec.dx, spec.du
    big_n = spec.dimension
    rows = big_n - n

    a_known = np.zeros((rows, big_n))
    # state window:   (x_k, ..., x_{k-dx+1}) <- leading n*dx entries of z
    a_known[:n * dx, :n * dx] = np.eye(n * dx)
    r_u, c_u = n * dx, n * (1 + dx)
    if du > 0:
        # input window: first slot left for B0_known * u_k, rest shifted
        a_known[r_u + 1:r_u + du, c_u:c_u + du - 1] = np.eye(du - 1)
        # product window: first n slots left for u_k * B1_known z_k
        r_xu, c_xu = r_u + du, c_u + du
        a_known[r_xu + n:r_xu + n * du, c_xu:c_xu + n * (du - 1)] = np.eye(n * (du - 1))

    b0_known = np.zeros((rows, 1))
    b1_known = np.zeros((rows, big_n))
    if du > 0:
        b0_known[r_u, 0] = 1.0
        b1_known[r_u + du:r_u + du + n, :n] = np.eye(n)
    return DelayStructure(a_known, b0_known, b1_known)


def recover_state(z, spec):
    """Recover the physical state from a lifted vector (leading n entries)."""
    z = np.asarray(z, dtype=float).reshape(-1)
    if z.size != spec.dimension:
        raise DimensionMismatchError(
            f"lifted vector has length {z.size}, spec dimension is {spec.dimension}")
    return z[:spec.n].copy()
