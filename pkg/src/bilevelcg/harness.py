"""Reference-solution oracles, evaluation metrics, experiment orchestration,
and run persistence (trace CSV + summary JSON)."""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .core import (
    BallProduct,
    BilevelInstance,
    ConstantStep,
    Harmonic,
    InvSqrt,
    L1Ball,
    Polytope,
    ProductRegion,
    Schedule,
    SmoothOracle,
    SolveOutcome,
    SolverConfig,
    TraceRow,
)
from .solvers import (
    AIrgConfig,
    BigSamConfig,
    DbgdConfig,
    MngConfig,
    a_irg,
    big_sam,
    cg_bio,
    dbgd,
    initialize_lower,
    mng,
    standard_cg,
)

FACE_EXCLUSION_DIST = 1e-6


# ---------------------------------------------------------------------------
# Reference solutions
# ---------------------------------------------------------------------------

def _is_linear(oracle: SmoothOracle) -> bool:
    q = oracle.quadratic
    return q is not None and not np.any(q.Q)


def reference_lower(instance: BilevelInstance, tol: float = 1e-9, max_iters: int = 200_000) -> float:
    """High-accuracy estimate of the lower-level optimal value.

    Linear objectives over desk-scale polytopes are solved exactly by vertex
    enumeration; otherwise a long conditional-gradient run with line search
    certifies g(x) - g* <= tol through the duality gap.
    """
    lower, region = instance.lower, instance.region
    if _is_linear(lower) and isinstance(region, Polytope) and region.dimension <= 4:
        verts = region.vertices()
        return float(min(lower.value(v) for v in verts))
    mode = "exact" if lower.quadratic is not None else "backtracking"
    cfg = SolverConfig(eps_f=tol, eps_g=tol, max_iters=max_iters)
    out = standard_cg(lower, region, cfg, line_search=mode)
    if out.stop_reason != "criterion_met":
        raise RuntimeError(
            f"lower-level reference budget exhausted; achieved gap {out.trace[-1].surrogate_f_gap:.3e}"
        )
    return out.trace[-1].f_val


def _solution_face(instance: BilevelInstance) -> np.ndarray:
    ref = instance.reference
    if ref is not None and ref.lower_solution_set is not None:
        return np.atleast_2d(np.asarray(ref.lower_solution_set, dtype=float))
    # Derivable case: linear lower level over a small polytope.
    region = instance.region
    if _is_linear(instance.lower) and isinstance(region, Polytope) and region.dimension <= 4:
        verts = region.vertices()
        vals = np.array([instance.lower.value(v) for v in verts])
        return verts[vals <= vals.min() + 1e-9]
    raise ValueError("instance carries no lower-level solution-set description")


def _golden_section(h, lo: float, hi: float, tol: float) -> float:
    phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c, d = b - phi * (b - a), a + phi * (b - a)
    hc, hd = h(c), h(d)
    while b - a > tol:
        if hc <= hd:
            b, d, hd = d, c, hc
            c = b - phi * (b - a)
            hc = h(c)
        else:
            a, c, hc = c, d, hd
            d = a + phi * (b - a)
            hd = h(d)
    return 0.5 * (a + b)


def reference_bilevel(instance: BilevelInstance, tol: float = 1e-9, max_iters: int = 200_000) -> float:
    """Estimate of the optimal upper-level value over the lower-level
    solution set, which must be available as a vertex list (or derivable
    for a linear lower level over a small polytope)."""
    verts = _solution_face(instance)
    f = instance.upper
    if verts.shape[0] == 1:
        return f.value(verts[0])
    if verts.shape[0] == 2:
        a, b = verts

        def h(t):
            return f.value((1.0 - t) * a + t * b)

        # Coarse grid localizes the minimum, golden section refines it.
        grid = np.linspace(0.0, 1.0, 10_001)
        vals = np.array([h(t) for t in grid])
        i = int(np.argmin(vals))
        lo = grid[max(i - 1, 0)]
        hi = grid[min(i + 1, grid.size - 1)]
        seg_len = float(np.linalg.norm(b - a))
        t_star = _golden_section(h, lo, hi, tol / max(seg_len, 1e-12))
        return min(float(vals[i]), h(t_star))
    # More than two vertices.  Quadratic objectives are minimized exactly
    # over the hull by enumerating simplex supports in barycentric weights;
    # otherwise conditional gradient with line search runs to the tolerance.
    n = verts.shape[0]
    if f.quadratic is not None and n <= 16:
        quad = f.quadratic
        Qt = verts @ quad.Q @ verts.T
        qt = verts @ (quad.q)
        w = _minimize_quadratic_over_simplex(Qt, qt)
        return f.value(verts.T @ w)
    w = np.full(n, 1.0 / n)
    ls_state: dict = {}
    from .solvers import _cg_step_length

    def hull_oracle_eval(weights):
        x = verts.T @ weights
        val, grad = f(x)
        return val, verts @ grad

    hull_oracle = SmoothOracle(n, hull_oracle_eval)
    for _ in range(max_iters):
        val, grad = hull_oracle(w)
        j = int(np.argmin(grad))
        d = -w.copy()
        d[j] += 1.0
        gap = float(-(grad @ d))
        if gap <= tol:
            return val
        gamma = _cg_step_length(hull_oracle, w, val, grad, d, "backtracking", ls_state)
        if gamma <= 0.0:
            return val
        w = w + gamma * d
    raise RuntimeError("upper-level reference budget exhausted over the solution face")


def _minimize_quadratic_over_simplex(Qt: np.ndarray, qt: np.ndarray) -> np.ndarray:
    """Exact argmin of 0.5 w'Qt w + qt'w over the probability simplex,
    found by enumerating the support sets (Qt positive semidefinite)."""
    from itertools import combinations

    n = qt.shape[0]
    best_w, best_val = None, np.inf
    for size in range(1, n + 1):
        for support in combinations(range(n), size):
            idx = list(support)
            K = np.zeros((size + 1, size + 1))
            K[:size, :size] = Qt[np.ix_(idx, idx)]
            K[:size, size] = 1.0
            K[size, :size] = 1.0
            rhs = np.concatenate([-qt[idx], [1.0]])
            sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
            if np.linalg.norm(K @ sol - rhs) > 1e-9 * max(1.0, np.linalg.norm(rhs)):
                continue
            ws = sol[:size]
            if np.any(ws < -1e-10):
                continue
            w = np.zeros(n)
            w[idx] = np.clip(ws, 0.0, None)
            w /= w.sum()
            val = 0.5 * float(w @ Qt @ w) + float(qt @ w)
            if val < best_val - 1e-15:
                best_w, best_val = w, val
    if best_w is None:
        raise RuntimeError("simplex quadratic subproblem had no solvable support")
    return best_w


def true_fw_gap(instance: BilevelInstance, x: np.ndarray) -> float:
    """max over the lower-level solution face of <grad f(x), x - s>.  The
    inner objective is linear in s, so the max is attained at a vertex."""
    verts = _solution_face(instance)
    grad = instance.upper.gradient(np.asarray(x, dtype=float))
    return float(max(grad @ (x - s) for s in verts))


# ---------------------------------------------------------------------------
# Hoelder error-bound estimation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HoelderParams:
    """Error-bound parameters: (alpha / order) * dist(x, solution set)^order
    <= g(x) - g*; M bounds the upper-level gradient norm over the face."""

    alpha: float
    order: float
    M: float

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if self.M < 0:
            raise ValueError("M must be nonnegative")


def _face_points(verts: np.ndarray, count: int, seed: int = 0) -> np.ndarray:
    if verts.shape[0] == 1:
        return verts
    if verts.shape[0] == 2:
        t = np.linspace(0.0, 1.0, count)[:, None]
        return (1.0 - t) * verts[0] + t * verts[1]
    rng = np.random.default_rng(seed)
    w = rng.dirichlet(np.ones(verts.shape[0]), size=count)
    return np.vstack([verts, w @ verts])


def dist_to_hull(x: np.ndarray, verts: np.ndarray, iters: int = 500) -> float:
    """Euclidean distance from x to the convex hull of the vertex rows."""
    x = np.asarray(x, dtype=float)
    if verts.shape[0] == 1:
        return float(np.linalg.norm(x - verts[0]))
    if verts.shape[0] == 2:
        a, b = verts
        d = b - a
        denom = float(d @ d)
        t = 0.0 if denom == 0.0 else float(np.clip((x - a) @ d / denom, 0.0, 1.0))
        return float(np.linalg.norm(x - (a + t * d)))
    # Exact least-distance over the hull by simplex-support enumeration for
    # small vertex lists; conditional gradient fallback otherwise.
    n = verts.shape[0]
    if n <= 16:
        w = _minimize_quadratic_over_simplex(verts @ verts.T, -(verts @ x))
        return float(np.linalg.norm(verts.T @ w - x))
    w = np.full(n, 1.0 / n)
    for _ in range(iters):
        p = verts.T @ w
        grad = verts @ (p - x)
        j = int(np.argmin(grad))
        d = -w.copy()
        d[j] += 1.0
        gap = float(-(grad @ d))
        if gap <= 1e-16:
            break
        step_dir = verts.T @ d
        denom = float(step_dir @ step_dir)
        if denom <= 0.0:
            break
        gamma = float(np.clip(-((p - x) @ step_dir) / denom, 0.0, 1.0))
        if gamma == 0.0:
            break
        w = w + gamma * d
    return float(np.linalg.norm(verts.T @ w - x))


def _region_box(region) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(region, L1Ball):
        r = region.radius
        return -r * np.ones(region.dimension), r * np.ones(region.dimension)
    if isinstance(region, Polytope):
        verts = region.vertices()
        return verts.min(axis=0), verts.max(axis=0)
    raise ValueError("grid estimation supports l1 balls and small polytopes only")


def hoelder_estimate(
    instance: BilevelInstance,
    order: float = 1.0,
    grid_per_axis: int = 60,
    g_star: Optional[float] = None,
) -> HoelderParams:
    """Grid estimates of the error-bound modulus alpha and of M, the largest
    upper-level gradient norm over the lower-level solution face."""
    if instance.dimension > 3:
        raise ValueError("grid estimation is limited to dimension <= 3")
    verts = _solution_face(instance)
    if g_star is None:
        ref = instance.reference
        g_star = ref.g_star if (ref is not None and ref.g_star is not None) else reference_lower(instance)

    M = max(
        float(np.linalg.norm(instance.upper.gradient(p)))
        for p in _face_points(verts, 2000)
    )

    lo, hi = _region_box(instance.region)
    axes = [np.linspace(lo[i], hi[i], grid_per_axis) for i in range(instance.dimension)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, instance.dimension)
    alpha = np.inf
    found = False
    for x in mesh:
        if not instance.region.contains(x, tol=1e-12):
            continue
        dist = dist_to_hull(x, verts)
        if dist <= FACE_EXCLUSION_DIST:
            continue
        found = True
        ratio = order * (instance.lower.value(x) - g_star) / dist**order
        alpha = min(alpha, ratio)
    if not found:
        raise ValueError("no feasible grid points outside the solution face")
    if alpha <= 0:
        raise ValueError("estimated error-bound modulus is not positive")
    return HoelderParams(alpha=float(alpha), order=order, M=M)


# ---------------------------------------------------------------------------
# Region sampling
# ---------------------------------------------------------------------------

def sample_region(region, count: int, seed: int = 0) -> np.ndarray:
    """Uniform-ish feasible samples (rows).  Exact uniformity is not needed;
    coverage of the region is."""
    rng = np.random.default_rng(seed)
    return _sample(region, count, rng)


def _sample(region, count, rng) -> np.ndarray:
    if isinstance(region, L1Ball):
        d = region.dimension
        # Dirichlet magnitudes with random signs fill the l1 sphere; a radial
        # factor u^(1/d) fills the ball.
        mags = rng.dirichlet(np.ones(d), size=count)
        signs = rng.choice([-1.0, 1.0], size=(count, d))
        radial = rng.uniform(size=(count, 1)) ** (1.0 / d)
        return region.radius * radial * mags * signs
    if isinstance(region, Polytope):
        verts = region.vertices()
        lo, hi = verts.min(axis=0), verts.max(axis=0)
        out = np.empty((count, region.dimension))
        have = 0
        for _ in range(200):
            cand = rng.uniform(lo, hi, size=(4 * count, region.dimension))
            ok = np.array([region.contains(c) for c in cand])
            take = cand[ok][: count - have]
            out[have : have + take.shape[0]] = take
            have += take.shape[0]
            if have == count:
                return out
        raise RuntimeError("rejection sampling failed to fill the polytope sample")
    if isinstance(region, BallProduct):
        cols = np.empty((count, region.col_dim, region.num_cols))
        for j in range(region.num_cols):
            g = rng.standard_normal((count, region.col_dim))
            g /= np.linalg.norm(g, axis=1, keepdims=True)
            radial = rng.uniform(size=(count, 1)) ** (1.0 / region.col_dim)
            cols[:, :, j] = region.radii[j] * radial * g
        return np.stack([region.flatten(cols[i]) for i in range(count)])
    if isinstance(region, ProductRegion):
        parts = [_sample(b, count, rng) for b in region.blocks]
        return np.hstack(parts)
    raise TypeError(f"unsupported region {region!r}")


# ---------------------------------------------------------------------------
# Bound checks and metrics
# ---------------------------------------------------------------------------

def value_transfer_check(
    instance: BilevelInstance,
    params: HoelderParams,
    eps_g: float,
    samples: int = 1000,
    seed: int = 0,
    convex_upper: bool = True,
    slack: float = 1e-8,
) -> bool:
    """Verify the guaranteed lower bound on the upper-level value (or on the
    restricted FW gap, non-convex case) over sampled points that are
    eps_g-optimal for the lower level."""
    ref = instance.reference
    g_star = ref.g_star if (ref is not None and ref.g_star is not None) else reference_lower(instance)
    f_star = ref.f_star if (ref is not None and ref.f_star is not None) else reference_bilevel(instance)

    verts = _solution_face(instance)
    rng = np.random.default_rng(seed)
    face = _face_points(verts, samples, seed=seed)
    jittered = face + 0.01 * rng.standard_normal(face.shape)
    pool = np.vstack([_sample(instance.region, samples, rng), face, jittered])
    kept = [x for x in pool if instance.region.contains(x) and instance.lower.value(x) - g_star <= eps_g]
    if not kept:
        raise RuntimeError("no sampled points were eps_g-optimal for the lower level")

    r, alpha, M = params.order, params.alpha, params.M
    drift = (r * eps_g / alpha) ** (1.0 / r)
    for x in kept[:samples]:
        if convex_upper:
            if instance.upper.value(x) - f_star < -M * drift - slack:
                return False
        else:
            L_f = instance.upper.lipschitz_grad or 0.0
            if true_fw_gap(instance, x) < -M * drift - L_f * drift**2 - slack:
                return False
    return True


def fairness_metrics(beta: np.ndarray, dataset, subset: str = "test") -> dict:
    """p%-rule and accuracy of the linear logistic model on a dataset split
    carrying a binary sensitive attribute."""
    if dataset.sensitive is None:
        raise ValueError("dataset carries no sensitive attribute")
    idx = {"train": dataset.train_idx, "val": dataset.val_idx, "test": dataset.test_idx}[subset]
    X = dataset.features[idx]
    y = dataset.targets[idx]
    v = dataset.sensitive[idx]
    groups = np.unique(v)
    if groups.size != 2:
        raise ValueError("sensitive attribute must take exactly two values on the subset")
    preds = (X @ beta) > 0.0  # sigmoid(t) > 1/2 iff t > 0
    rate_a = float(np.mean(preds[v == groups[0]]))
    rate_b = float(np.mean(preds[v == groups[1]]))
    if rate_a == 0.0 and rate_b == 0.0:
        p_rule = 100.0
    elif rate_a == 0.0 or rate_b == 0.0:
        p_rule = 0.0
    else:
        p_rule = 100.0 * min(rate_a / rate_b, rate_b / rate_a)
    accuracy = float(np.mean(preds == (y > 0.5)))
    return {"p_rule": p_rule, "accuracy": accuracy}


def recovery_rate(learned: np.ndarray, truth: np.ndarray, threshold: float = 0.9) -> float:
    """Fraction of ground-truth dictionary columns matched (absolute inner
    product above threshold) by some learned column, after normalization."""

    def normalize(D):
        D = np.asarray(D, dtype=float)
        nrm = np.linalg.norm(D, axis=0)
        nrm[nrm == 0.0] = 1.0
        return D / nrm

    G = np.abs(normalize(truth).T @ normalize(learned))
    return float(np.mean(G.max(axis=1) > threshold))


# ---------------------------------------------------------------------------
# Experiment orchestration and persistence
# ---------------------------------------------------------------------------

TRACE_HEADER = "k,f_val,g_val,surrogate_f_gap,surrogate_g_gap,wall_nanos"


@dataclass(frozen=True)
class RunRecord:
    instance: str
    solver: str
    config: dict
    seed: int
    outcome: SolveOutcome

    @property
    def summary(self) -> dict:
        tail = self.outcome.trace[-1]
        return {
            "instance": self.instance,
            "solver": self.solver,
            "config": self.config,
            "stop_reason": self.outcome.stop_reason,
            "iterations": self.outcome.iterations,
            "final_f_gap": _none_if_nan(tail.surrogate_f_gap),
            "final_g_gap": _none_if_nan(tail.surrogate_g_gap),
            "wall_nanos_total": self.outcome.wall_nanos_total,
            "seed": self.seed,
        }


def _none_if_nan(x: float):
    return None if (x != x) else x


def schedule_to_string(schedule: Schedule) -> str:
    if isinstance(schedule, Harmonic):
        return f"harmonic:{schedule.shift}"
    if isinstance(schedule, ConstantStep):
        return f"constant:{schedule.gamma!r}"
    if isinstance(schedule, InvSqrt):
        return f"inv-sqrt:{schedule.scale!r}"
    raise TypeError(f"unknown schedule {schedule!r}")


def parse_schedule(text: str) -> Schedule:
    kind, _, arg = text.partition(":")
    if kind == "harmonic":
        return Harmonic(int(arg) if arg else 2)
    if kind == "constant":
        return ConstantStep(float(arg))
    if kind == "inv-sqrt":
        return InvSqrt(float(arg) if arg else 1.0)
    raise ValueError(f"unknown schedule {text!r}")


def config_to_dict(config: SolverConfig) -> dict:
    return {
        "eps_f": config.eps_f,
        "eps_g": config.eps_g,
        "max_iters": config.max_iters,
        "schedule": schedule_to_string(config.schedule),
        "rng_seed": config.rng_seed,
    }


def config_from_dict(data: dict) -> SolverConfig:
    cfg = SolverConfig()
    fields = {}
    for key in ("eps_f", "eps_g", "max_iters", "rng_seed"):
        if key in data:
            fields[key] = data[key]
    if "schedule" in data:
        fields["schedule"] = parse_schedule(data["schedule"])
    return replace(cfg, **fields)


def _strip_timing(outcome: SolveOutcome) -> SolveOutcome:
    rows = tuple(replace(r, wall_nanos=0) for r in outcome.trace)
    return SolveOutcome(final_point=outcome.final_point, stop_reason=outcome.stop_reason, trace=rows)


def write_trace_csv(path, trace, record_timing: bool = False) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(TRACE_HEADER + "\n")
        for row in trace:
            nanos = row.wall_nanos if record_timing else 0
            fh.write(
                f"{row.k},{row.f_val!r},{row.g_val!r},"
                f"{row.surrogate_f_gap!r},{row.surrogate_g_gap!r},{nanos}\n"
            )


def read_trace_csv(path) -> tuple[TraceRow, ...]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != TRACE_HEADER:
            raise ValueError(f"unexpected trace header {header!r}")
        for line in fh:
            k, f_val, g_val, fg, gg, nanos = line.strip().split(",")
            rows.append(
                TraceRow(
                    k=int(k),
                    f_val=float(f_val),
                    g_val=float(g_val),
                    surrogate_f_gap=float(fg),
                    surrogate_g_gap=float(gg),
                    wall_nanos=int(nanos),
                )
            )
    return tuple(rows)


def build_instance(name: str, seed: int = 0, options: Optional[dict] = None):
    """Construct a named experiment instance.  Returns (instance, start,
    extras) where ``start`` is a mandated initial point or None and
    ``extras`` carries family-specific artifacts."""
    from . import problems

    opts = dict(options or {})
    if name == "toy":
        return problems.toy_problem(), None, {}
    if name == "regression":
        data = None
        if opts.get("csv"):
            data = problems.load_csv(opts["csv"], opts["target"], seed=seed)
        inst, data = problems.regression_problem(
            data=data,
            n=int(opts.get("n", 60)), d=int(opts.get("d", 100)), seed=seed,
            l1_radius=float(opts.get("l1_radius", 1.0)),
        )
        return inst, None, {"data": data}
    if name == "fair":
        data = None
        if opts.get("csv"):
            data = problems.load_csv(
                opts["csv"], opts["target"], sensitive_column=opts.get("sensitive"), seed=seed
            )
        inst, data = problems.fair_classification_problem(
            data=data,
            n=int(opts.get("n", 200)), d=int(opts.get("d", 5)), seed=seed,
            l1_radius=float(opts.get("l1_radius", 100.0)),
        )
        return inst, None, {"data": data}
    if name == "dict":
        spec_kwargs = {k: opts[k] for k in opts if k in problems.DictLearnSpec.__dataclass_fields__}
        bundle = problems.dictionary_problem(problems.DictLearnSpec(seed=seed, **spec_kwargs))
        return bundle.bilevel, bundle.initial_point, {"bundle": bundle}
    raise ValueError(f"unknown instance {name!r}")


def run_solver(
    instance: BilevelInstance,
    solver: str,
    config: SolverConfig,
    start: Optional[np.ndarray] = None,
    options: Optional[dict] = None,
) -> SolveOutcome:
    """Dispatch a named solver on an instance."""
    opts = dict(options or {})
    if solver == "cg-bio":
        x0 = start
        if x0 is None:
            x0, _, _ = initialize_lower(instance, config.eps_g, max_iters=int(opts.get("init_iters", 10_000)))
        return cg_bio(instance, x0, config)
    if solver == "cg":
        return standard_cg(
            instance.upper, instance.region, config,
            line_search=opts.get("line_search"), start=start,
        )
    if solver == "big-sam":
        cfg = BigSamConfig(
            eta_f=opts.get("eta_f"), eta_g=opts.get("eta_g"), gamma=float(opts.get("gamma", 10.0))
        )
        return big_sam(instance, cfg, max_iters=config.max_iters, keep_iterates=config.keep_iterates, start=start)
    if solver == "a-irg":
        cfg = AIrgConfig(gamma0=float(opts.get("gamma0", 0.01)), eta0=float(opts.get("eta0", 1.0)))
        return a_irg(instance, cfg, max_iters=config.max_iters, keep_iterates=config.keep_iterates, start=start)
    if solver == "dbgd":
        cfg = DbgdConfig(
            alpha=float(opts.get("alpha", 1.0)), beta=float(opts.get("beta", 1.0)),
            g_hat=float(opts.get("g_hat", 0.0)), step=float(opts.get("step", 0.1)),
        )
        return dbgd(instance, cfg, max_iters=config.max_iters, keep_iterates=config.keep_iterates, start=start)
    if solver == "mng":
        M = opts.get("M", instance.lower.lipschitz_grad)
        if M is None:
            raise ValueError("MNG requires a smoothing constant M")
        return mng(instance, MngConfig(M=float(M)), max_iters=config.max_iters,
                   keep_iterates=config.keep_iterates, start=start)
    raise ValueError(f"unknown solver {solver!r}")


def _cell_stem(cell: dict, index: int) -> str:
    return f"{index:03d}_{cell['instance']}_{cell['solver']}_seed{cell.get('seed', 0)}"


def _run_cell(cell: dict, index: int, out_dir: str, record_timing: bool) -> dict:
    stem = _cell_stem(cell, index)
    trace_path = os.path.join(out_dir, stem + ".csv")
    summary_path = os.path.join(out_dir, stem + ".json")
    if os.path.exists(trace_path) and os.path.exists(summary_path):
        with open(summary_path, encoding="utf-8") as fh:
            return json.load(fh)
    seed = int(cell.get("seed", 0))
    config = config_from_dict(cell.get("config", {}))
    config = replace(config, rng_seed=seed)
    try:
        instance, start, _ = build_instance(cell["instance"], seed=seed, options=cell.get("options"))
        outcome = run_solver(instance, cell["solver"], config, start=start, options=cell.get("solver_options"))
        if not record_timing:
            outcome = _strip_timing(outcome)
        record = RunRecord(
            instance=cell["instance"], solver=cell["solver"],
            config=config_to_dict(config), seed=seed, outcome=outcome,
        )
        summary = record.summary
        write_trace_csv(trace_path, outcome.trace, record_timing=record_timing)
    except Exception as exc:  # record the failure, keep the suite going
        summary = {
            "instance": cell.get("instance"), "solver": cell.get("solver"),
            "config": config_to_dict(config), "stop_reason": f"error: {exc}",
            "iterations": 0, "final_f_gap": None, "final_g_gap": None,
            "wall_nanos_total": 0, "seed": seed,
        }
    tmp = summary_path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, summary_path)
    return summary


def run_experiment(
    suite: list[dict],
    out_dir: str,
    jobs: int = 1,
    record_timing: bool = False,
) -> list[dict]:
    """Execute a suite of cells {instance, solver, config, seed, ...},
    persisting one trace CSV and one summary JSON per cell.  Completed
    cells (both files present) are skipped, making reruns resumable, and
    fixed seeds reproduce output files byte-for-byte."""
    os.makedirs(out_dir, exist_ok=True)
    if jobs <= 1:
        return [_run_cell(c, i, out_dir, record_timing) for i, c in enumerate(suite)]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        futs = [pool.submit(_run_cell, c, i, out_dir, record_timing) for i, c in enumerate(suite)]
        return [f.result() for f in futs]
