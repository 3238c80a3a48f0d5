"""Benchmark systems, forward-Euler discretization and trajectory generation.

The discretized system is the ground truth for identification and
verification; continuous-time accuracy of the Euler scheme is explicitly
not a claim. Excitation signals come from a self-contained splitmix-style
64-bit generator so identical seeds reproduce identical datasets
bit-exactly on any platform.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import lifting
from .errors import DimensionMismatchError

#: Any state component beyond this magnitude truncates the simulation with a
#: diverged flag (failed controllers still produce inspectable trajectories).
DIVERGENCE_LIMIT = 1e6

OPEN_LOOP = "open"
CLOSED_LOOP = "closed"


@dataclass(frozen=True)
class SystemDef:
    """Control-affine continuous-time system x' = f(x) + g(x) u with an
    equilibrium at the origin."""

    n: int
    f: Callable[[np.ndarray], np.ndarray]
    g: Callable[[np.ndarray], np.ndarray]
    label: str = ""

    def __post_init__(self):
        origin = np.zeros(self.n)
        if np.linalg.norm(np.asarray(self.f(origin), dtype=float)) > 1e-12:
            raise ValueError(f"system {self.label!r} has f(0) != 0")


def vanderpol(mu=1.0):
    """Forced Van der Pol oscillator: x1' = x2, x2' = mu(1-x1^2)x2 - x1 + u."""

    def f(x):
        return np.array([x[1], mu * (1.0 - x[0] ** 2) * x[1] - x[0]])

    def g(x):
        return np.array([0.0, 1.0])

    return SystemDef(2, f, g, label=f"vanderpol(mu={mu})")


def euler_step(sys, x, u, tau_s):
    """One forward-Euler step of the control-affine dynamics."""
    x = np.asarray(x, dtype=float)
    return x + tau_s * (sys.f(x) + sys.g(x) * float(u))


_MASK64 = (1 << 64) - 1


class SplitMix64:
    """Portable deterministic 64-bit generator (splitmix-style).

    State update: ``state += 0x9E3779B97F4A7C15`` (mod 2^64). Output mixing:
    two xorshift-multiply rounds with constants 0xBF58476D1CE4E5B9 and
    0x94D049BB133111EB and shifts 30/27/31. Uniform doubles take the top
    53 bits. The constants are part of the file-format contract: the same
    seed reproduces the same excitation sequence everywhere.
    """

    def __init__(self, seed):
        self._state = int(seed) & _MASK64

    def next_u64(self):
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def uniform(self, lo=0.0, hi=1.0):
        return lo + (hi - lo) * ((self.next_u64() >> 11) * 2.0 ** -53)


def generate_excitation(seed, lo, hi, length):
    """Deterministic i.i.d. uniform input sequence on [lo, hi]."""
    if hi < lo:
        raise ValueError("excitation range must satisfy lo <= hi")
    rng = SplitMix64(seed)
    return np.array([rng.uniform(lo, hi) for _ in range(length)])


@dataclass(frozen=True)
class Trajectory:
    """Time-indexed state/input record. states has one more row than inputs;
    a diverged run is truncated at the offending state."""

    tau_s: float
    states: np.ndarray
    inputs: np.ndarray
    kind: str = OPEN_LOOP
    diverged: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.states.shape[0] != self.inputs.shape[0] + 1:
            raise DimensionMismatchError("trajectory needs len(states) == len(inputs) + 1")

    @property
    def times(self):
        return self.tau_s * np.arange(self.states.shape[0])


def _out_of_bounds(x):
    return not np.all(np.isfinite(x)) or np.any(np.abs(x) > DIVERGENCE_LIMIT)


def simulate_open(sys, x0, inputs, tau_s):
    """Open-loop forward-Euler simulation under a given input sequence."""
    x = np.asarray(x0, dtype=float).reshape(-1)
    if x.size != sys.n:
        raise DimensionMismatchError(f"x0 must have dimension {sys.n}")
    states = [x]
    used = []
    diverged = _out_of_bounds(x)
    if not diverged:
        for u in np.asarray(inputs, dtype=float).reshape(-1):
            x = euler_step(sys, states[-1], u, tau_s)
            states.append(x)
            used.append(u)
            if _out_of_bounds(x):
                diverged = True
                break
    return Trajectory(tau_s, np.array(states), np.array(used), OPEN_LOOP, diverged)


def simulate_closed(sys, spec, gain, x0, steps, tau_s):
    """Closed-loop simulation with u = gain . z(lifted state).

    Delay liftings need a history window before the feedback is defined;
    following the data-collection convention, the first dx steps run
    unforced (u = 0) to fill the window.
    """
    gain = np.asarray(gain, dtype=float).reshape(-1)
    if gain.size != spec.dimension:
        raise DimensionMismatchError(
            f"gain has length {gain.size}, lifting dimension is {spec.dimension}")
    x = np.asarray(x0, dtype=float).reshape(-1)
    if x.size != sys.n:
        raise DimensionMismatchError(f"x0 must have dimension {sys.n}")

    states = [x]
    used = []
    diverged = _out_of_bounds(x)
    for k in range(steps):
        if diverged:
            break
        if spec.kind == lifting.MONOMIAL:
            u = float(gain @ lifting.monomial_lift(states[-1], spec.degree))
        elif k < spec.dx:
            u = 0.0
        else:
            x_hist = np.array(states[k - spec.dx:k + 1])
            u_hist = np.array(used[k - spec.du:k]) if spec.du else np.empty(0)
            u = float(gain @ lifting.delay_lift(x_hist, u_hist, spec))
        x = euler_step(sys, states[-1], u, tau_s)
        states.append(x)
        used.append(u)
        if _out_of_bounds(x):
            diverged = True
    return Trajectory(tau_s, np.array(states), np.array(used), CLOSED_LOOP, diverged)


def trajectory_to_csv(traj, sys_n=None):
    """Render a trajectory as ``k,t,x1..xn,u`` CSV text (deterministic)."""
    n = traj.states.shape[1]
    header = "k,t," + ",".join(f"x{i + 1}" for i in range(n)) + ",u"
    lines = [header]
    for k, x in enumerate(traj.states):
        u = repr(float(traj.inputs[k])) if k < traj.inputs.shape[0] else ""
        cells = [str(k), repr(float(k * traj.tau_s))] + [repr(float(v)) for v in x] + [u]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def phase_csv(trajectories):
    """Phase-portrait CSV: x1,x2 pairs per trajectory, blank-line separated."""
    chunks = []
    for traj in trajectories:
        rows = "\n".join(f"{repr(float(x[0]))},{repr(float(x[1]))}" for x in traj.states)
        chunks.append(rows)
    return "x1,x2\n" + "\n\n".join(chunks) + "\n"
