"""Problem model shared by every solver: smooth oracles, feasible regions,
bilevel instances, stepsize schedules, cutting planes, and run traces."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

DEFAULT_MEMBERSHIP_TOL = 1e-9


class OracleError(RuntimeError):
    """A subproblem oracle failed (infeasible LP, lost bisection bracket, ...)."""


class ConfigurationError(ValueError):
    """Solver was configured inconsistently with the instance it was given."""


# ---------------------------------------------------------------------------
# Smooth objectives
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadraticForm:
    """Explicit representation f(x) = 0.5 x'Qx + q'x + c for solvers that
    need to minimize f over small polyhedra in closed form."""

    Q: np.ndarray
    q: np.ndarray
    c: float = 0.0

    def value(self, x: np.ndarray) -> float:
        return 0.5 * float(x @ self.Q @ x) + float(self.q @ x) + self.c

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.Q @ x + self.q


@dataclass(frozen=True)
class SmoothOracle:
    """Black-box value + gradient evaluator.

    ``lipschitz_grad`` is a Lipschitz constant of the gradient in the l2
    norm, or None when unknown.  ``quadratic`` is set when the function is an
    explicit convex quadratic (enables closed-form subproblems and exact
    line search).
    """

    dimension: int
    eval: Callable[[np.ndarray], tuple[float, np.ndarray]]
    lipschitz_grad: Optional[float] = None
    quadratic: Optional[QuadraticForm] = None

    def __call__(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dimension,):
            raise ValueError(f"point has shape {x.shape}, expected ({self.dimension},)")
        val, grad = self.eval(x)
        grad = np.asarray(grad, dtype=float)
        if grad.shape != (self.dimension,):
            raise OracleError(
                f"gradient has shape {grad.shape}, expected ({self.dimension},)"
            )
        return float(val), grad

    def value(self, x: np.ndarray) -> float:
        return self(x)[0]

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self(x)[1]


# ---------------------------------------------------------------------------
# Feasible regions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class L1Ball:
    """{x : ||x||_1 <= radius} in ``dimension`` variables."""

    radius: float
    dimension: int
    membership_tol: float = DEFAULT_MEMBERSHIP_TOL

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("l1 ball radius must be positive")

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    def contains(self, x: np.ndarray, tol: Optional[float] = None) -> bool:
        tol = self.membership_tol if tol is None else tol
        return float(np.abs(x).sum()) <= self.radius + tol


@dataclass(frozen=True)
class BallProduct:
    """Product of per-column Euclidean balls for a matrix variable stored
    column-major as a flat vector of length col_dim * num_cols."""

    num_cols: int
    col_dim: int
    radii: np.ndarray
    membership_tol: float = DEFAULT_MEMBERSHIP_TOL

    def __post_init__(self):
        radii = np.broadcast_to(np.asarray(self.radii, dtype=float), (self.num_cols,))
        object.__setattr__(self, "radii", radii.copy())
        if np.any(self.radii <= 0):
            raise ValueError("ball radii must be positive")

    @property
    def dimension(self) -> int:
        return self.num_cols * self.col_dim

    @property
    def diameter(self) -> float:
        return 2.0 * float(np.sqrt(np.sum(self.radii**2)))

    def columns(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float).reshape(self.col_dim, self.num_cols, order="F")

    def flatten(self, cols: np.ndarray) -> np.ndarray:
        return cols.reshape(-1, order="F")

    def contains(self, x: np.ndarray, tol: Optional[float] = None) -> bool:
        tol = self.membership_tol if tol is None else tol
        norms = np.linalg.norm(self.columns(x), axis=0)
        return bool(np.all(norms <= self.radii + tol))


@dataclass(frozen=True)
class Polytope:
    """{x : Ax <= b} intersected with the nonnegative orthant when
    ``nonnegative`` is set.  Must be bounded (it backs an LMO)."""

    A: np.ndarray
    b: np.ndarray
    nonnegative: bool = True
    membership_tol: float = DEFAULT_MEMBERSHIP_TOL
    diameter_hint: Optional[float] = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.asarray(self.b, dtype=float).ravel()
        if A.shape[0] != b.shape[0]:
            raise ValueError("row count of A must match length of b")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def dimension(self) -> int:
        return self.A.shape[1]

    def contains(self, x: np.ndarray, tol: Optional[float] = None) -> bool:
        tol = self.membership_tol if tol is None else tol
        x = np.asarray(x, dtype=float)
        if self.nonnegative and np.any(x < -tol):
            return False
        return bool(np.all(self.A @ x <= self.b + tol))

    def halfspaces(self) -> list[tuple[np.ndarray, float]]:
        """All defining halfspaces (a, beta) with semantics <a, x> <= beta,
        including the sign constraints when present."""
        rows = [(self.A[i], float(self.b[i])) for i in range(self.A.shape[0])]
        if self.nonnegative:
            eye = np.eye(self.dimension)
            rows += [(-eye[i], 0.0) for i in range(self.dimension)]
        return rows

    def vertices(self) -> np.ndarray:
        """Enumerate vertices by intersecting d-subsets of the defining
        halfspaces.  Intended for desk-scale instances (dimension <= ~4)."""
        from itertools import combinations

        d = self.dimension
        planes = self.halfspaces()
        seen: list[np.ndarray] = []
        for idx in combinations(range(len(planes)), d):
            M = np.array([planes[i][0] for i in idx])
            rhs = np.array([planes[i][1] for i in idx])
            if abs(np.linalg.det(M)) < 1e-12:
                continue
            v = np.linalg.solve(M, rhs)
            if not self.contains(v, tol=1e-9):
                continue
            if not any(np.linalg.norm(v - w) < 1e-9 for w in seen):
                seen.append(v)
        if not seen:
            raise OracleError("polytope has no vertices (empty or degenerate)")
        return np.array(seen)

    @property
    def diameter(self) -> float:
        if self.diameter_hint is not None:
            return self.diameter_hint
        verts = self.vertices()
        best = 0.0
        for i in range(len(verts)):
            d = np.linalg.norm(verts[i + 1 :] - verts[i], axis=1)
            if d.size:
                best = max(best, float(d.max()))
        return best


@dataclass(frozen=True)
class ProductRegion:
    """Cartesian product of regions over consecutive blocks of the variable
    vector.  Used by the dictionary-learning family (dictionary columns in
    l2 balls times coefficient columns in l1 balls)."""

    blocks: tuple

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))
        if not self.blocks:
            raise ValueError("product region needs at least one block")

    @property
    def dimension(self) -> int:
        return sum(b.dimension for b in self.blocks)

    @property
    def diameter(self) -> float:
        return float(np.sqrt(sum(b.diameter**2 for b in self.blocks)))

    @property
    def membership_tol(self) -> float:
        return max(b.membership_tol for b in self.blocks)

    def offsets(self) -> list[tuple[int, int]]:
        out, start = [], 0
        for b in self.blocks:
            out.append((start, start + b.dimension))
            start += b.dimension
        return out

    def split(self, x: np.ndarray) -> list[np.ndarray]:
        x = np.asarray(x, dtype=float)
        return [x[lo:hi] for lo, hi in self.offsets()]

    def contains(self, x: np.ndarray, tol: Optional[float] = None) -> bool:
        return all(b.contains(part, tol) for b, part in zip(self.blocks, self.split(x)))


FeasibleRegion = Union[L1Ball, BallProduct, Polytope, ProductRegion]


def check_membership(region: FeasibleRegion, x: np.ndarray, tol: Optional[float] = None) -> bool:
    """True iff all defining constraints of ``region`` hold within ``tol``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (region.dimension,):
        raise ValueError(f"point has shape {x.shape}, expected ({region.dimension},)")
    return region.contains(x, tol)


# ---------------------------------------------------------------------------
# Bilevel instances
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReferenceData:
    """Optional ground-truth information attached to an instance.

    ``lower_solution_set`` is a vertex list (rows) of the optimal face of
    the lower-level problem, when it is polyhedral and known.
    """

    g_star: Optional[float] = None
    f_star: Optional[float] = None
    lower_solution_set: Optional[np.ndarray] = None


@dataclass(frozen=True)
class BilevelInstance:
    upper: SmoothOracle
    lower: SmoothOracle
    region: FeasibleRegion
    reference: Optional[ReferenceData] = None
    name: str = "instance"

    def __post_init__(self):
        dims = {self.upper.dimension, self.lower.dimension, self.region.dimension}
        if len(dims) != 1:
            raise ValueError(f"inconsistent dimensions: {dims}")

    @property
    def dimension(self) -> int:
        return self.region.dimension


# ---------------------------------------------------------------------------
# Halfspaces and cutting planes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Halfspace:
    """{s : <normal, s> <= offset}."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        object.__setattr__(self, "normal", np.asarray(self.normal, dtype=float))
        object.__setattr__(self, "offset", float(self.offset))

    def contains(self, x: np.ndarray, tol: float = 0.0) -> bool:
        return float(self.normal @ x) <= self.offset + tol

    def violation(self, x: np.ndarray) -> float:
        return float(self.normal @ x) - self.offset


def cutting_plane(g: SmoothOracle, x0: np.ndarray, xk: np.ndarray) -> Halfspace:
    """Halfspace keeping every point whose linearized lower-level value at
    ``xk`` does not exceed g(x0).  By convexity of g it contains the whole
    lower-level solution set whenever g(x0) >= min g."""
    x0 = np.asarray(x0, dtype=float)
    xk = np.asarray(xk, dtype=float)
    g0 = g.value(x0)
    gk, grad = g(xk)
    offset = float(grad @ xk) + g0 - gk
    return Halfspace(normal=grad, offset=offset)


# ---------------------------------------------------------------------------
# Stepsize schedules
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Harmonic:
    """gamma_k = 2 / (k + shift); shift >= 2 keeps gamma_0 <= 1."""

    shift: int = 2

    def __post_init__(self):
        if self.shift < 2:
            raise ValueError("harmonic shift must be >= 2")


@dataclass(frozen=True)
class ConstantStep:
    gamma: float

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("constant stepsize must lie in (0, 1]")


@dataclass(frozen=True)
class InvSqrt:
    """gamma_k = min(1, scale / sqrt(k + 1))."""

    scale: float

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("inv-sqrt scale must be positive")


Schedule = Union[Harmonic, ConstantStep, InvSqrt]


def step_size(schedule: Schedule, k: int) -> float:
    if k < 0:
        raise ValueError("iteration index must be nonnegative")
    if isinstance(schedule, Harmonic):
        return 2.0 / (k + schedule.shift)
    if isinstance(schedule, ConstantStep):
        return schedule.gamma
    if isinstance(schedule, InvSqrt):
        return min(1.0, schedule.scale / np.sqrt(k + 1.0))
    raise TypeError(f"unknown schedule {schedule!r}")


# ---------------------------------------------------------------------------
# Solver configuration and outcomes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SolverConfig:
    eps_f: float = 1e-5
    eps_g: float = 1e-5
    max_iters: int = 1000
    schedule: Schedule = Harmonic(2)
    rng_seed: int = 0
    keep_iterates: bool = False

    def __post_init__(self):
        if self.eps_f <= 0 or self.eps_g <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iters <= 0:
            raise ValueError("max_iters must be positive")


@dataclass(frozen=True)
class TraceRow:
    k: int
    f_val: float
    g_val: float
    surrogate_f_gap: float
    surrogate_g_gap: float
    wall_nanos: int
    iterate: Optional[np.ndarray] = None


@dataclass(frozen=True)
class SolveOutcome:
    final_point: np.ndarray
    stop_reason: str  # "criterion_met" | "budget_exhausted" | "oracle_failure: ..."
    trace: tuple[TraceRow, ...]

    def __post_init__(self):
        if not self.trace:
            raise ValueError("trace must be nonempty")
        ks = [row.k for row in self.trace]
        if any(b <= a for a, b in zip(ks, ks[1:])):
            raise ValueError("trace rows must be strictly increasing in k")

    @property
    def best_index(self) -> int:
        """Trace position of the minimum surrogate upper-level gap (the k* of
        the non-convex guarantee).  Falls back to the last row when no
        surrogate gaps were recorded."""
        gaps = np.array([row.surrogate_f_gap for row in self.trace])
        if np.all(np.isnan(gaps)):
            return len(self.trace) - 1
        return int(np.nanargmin(gaps))

    @property
    def iterations(self) -> int:
        return self.trace[-1].k

    @property
    def wall_nanos_total(self) -> int:
        return int(sum(row.wall_nanos for row in self.trace))
