"""Executable invariant suites: per-step and convergence-rate inequalities
of the cutting-plane conditional-gradient method, lower-bound guarantees,
oracle-vs-brute-force equivalence, and finite-difference gradient checks.

Each ``check_*`` function returns a list of (label, passed, detail) tuples;
``verify`` aggregates the requested groups.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Callable, Optional

import numpy as np

from .core import (
    BilevelInstance,
    ConstantStep,
    Halfspace,
    L1Ball,
    Polytope,
    BallProduct,
    ProductRegion,
    QuadraticForm,
    ReferenceData,
    SmoothOracle,
    SolverConfig,
    step_size,
)
from .harness import (
    _face_points,
    _solution_face,
    hoelder_estimate,
    value_transfer_check,
    reference_bilevel,
    reference_lower,
    sample_region,
)
from .oracles import (
    LpProblem,
    halfspace_lmo,
    lmo,
    project_ball_product,
    project_l1_ball,
    project_polytope,
    simplex_solve,
)
from .problems import (
    DictLearnSpec,
    dictionary_problem,
    fair_classification_problem,
    regression_problem,
    toy_problem,
)
from .solvers import cg_bio, initialize_lower, standard_cg


# ---------------------------------------------------------------------------
# Shared construction helpers
# ---------------------------------------------------------------------------

def random_convex_instance(seed: int, dim: int) -> BilevelInstance:
    """Random convex bilevel instance over the unit box: linear lower level
    whose optimal face is an edge, convex quadratic upper whose minimum over
    that edge is strictly interior (so the bilevel run takes many steps)."""
    for attempt in range(50):
        inst = _random_convex_candidate(seed + 1000 * attempt, dim)
        face = inst.reference.lower_solution_set
        endpoint_best = min(inst.upper.value(v) for v in face)
        if inst.reference.f_star < endpoint_best - 1e-10:
            return inst
    raise RuntimeError("failed to sample an instance with an interior face optimum")


def _random_convex_candidate(seed: int, dim: int) -> BilevelInstance:
    rng = np.random.default_rng(seed)
    region = Polytope(A=np.eye(dim), b=np.ones(dim))  # the unit box
    c = rng.standard_normal(dim)
    # Zero one coefficient so the optimal face is an edge, not a vertex;
    # singleton faces make the bilevel run converge in one step.
    c[int(rng.integers(dim))] = 0.0
    lower = SmoothOracle(
        dim,
        lambda x, c=c: (float(c @ x), c),
        lipschitz_grad=0.0,
        quadratic=QuadraticForm(np.zeros((dim, dim)), c, 0.0),
    )
    B = rng.standard_normal((dim, dim))
    Q = B.T @ B + 0.1 * np.eye(dim)
    q = rng.standard_normal(dim)
    upper = SmoothOracle(
        dim,
        lambda x, Q=Q, q=q: (0.5 * float(x @ Q @ x) + float(q @ x), Q @ x + q),
        lipschitz_grad=float(np.linalg.eigvalsh(Q).max()),
        quadratic=QuadraticForm(Q, q, 0.0),
    )
    verts = region.vertices()
    vals = np.array([lower.value(v) for v in verts])
    g_star = float(vals.min())
    face = verts[vals <= g_star + 1e-9]
    inst = BilevelInstance(
        upper, lower, region,
        ReferenceData(g_star=g_star, lower_solution_set=face),
        name=f"random-{dim}d-{seed}",
    )
    f_star = reference_bilevel(inst, tol=1e-10)
    return replace(inst, reference=replace(inst.reference, f_star=f_star))


def _cg_bio_trajectory(instance, eps_f, eps_g, max_iters, schedule=None):
    x0, _, certified = initialize_lower(instance, eps_g)
    cfg = SolverConfig(eps_f=eps_f, eps_g=eps_g, max_iters=max_iters, keep_iterates=True)
    if schedule is not None:
        cfg = replace(cfg, schedule=schedule)
    out = cg_bio(instance, x0, cfg)
    return x0, cfg, out, certified


def _cuts_from_trace(instance, x0, trace) -> list[Halfspace]:
    g0 = instance.lower.value(x0)
    cuts = []
    for row in trace:
        if row.iterate is None:
            continue
        g_val, g_grad = instance.lower(row.iterate)
        cuts.append(Halfspace(g_grad, float(g_grad @ row.iterate) + g0 - g_val))
    return cuts


# ---------------------------------------------------------------------------
# Cutting-plane validity (every lower-level optimum satisfies every cut)
# ---------------------------------------------------------------------------

def check_cut_retention(samples: int = 10_000, seed: int = 0, slack: float = 1e-10) -> list:
    results = []
    instances = [toy_problem()] + [random_convex_instance(100 + i, 2 + i % 2) for i in range(4)]
    per = max(samples // len(instances), 1)
    for inst in instances:
        x0, _, out, _ = _cg_bio_trajectory(inst, 1e-7, 1e-7, 200)
        cuts = _cuts_from_trace(inst, x0, out.trace)
        face = _solution_face(inst)
        pts = _face_points(face, per, seed=seed)
        worst = max(
            (cut.violation(p) for cut in cuts for p in pts), default=-np.inf
        )
        results.append(
            (f"cut-validity {inst.name}", worst <= slack, f"worst violation {worst:.3e}")
        )
    return results


# ---------------------------------------------------------------------------
# Per-step descent inequalities
# ---------------------------------------------------------------------------

def check_descent_steps(slack: float = 1e-8) -> list:
    results = []
    instances = [toy_problem()] + [random_convex_instance(200 + i, 2 + i % 2) for i in range(4)]
    for inst in instances:
        x0, cfg, out, _ = _cg_bio_trajectory(inst, 1e-13, 1e-13, 300)
        L_f = inst.upper.lipschitz_grad
        L_g = inst.lower.lipschitz_grad
        D = inst.region.diameter
        g0 = inst.lower.value(x0)
        worst = -np.inf
        pairs = 0
        rows = [r for r in out.trace if r.iterate is not None]
        for a, b in zip(rows, rows[1:]):
            if b.k != a.k + 1 or np.isnan(a.surrogate_f_gap):
                continue
            pairs += 1
            gamma = step_size(cfg.schedule, a.k)
            f_excess = b.f_val - (
                a.f_val - gamma * a.surrogate_f_gap + 0.5 * gamma**2 * L_f * D**2
            )
            g_excess = b.g_val - (
                (1.0 - gamma) * a.g_val + gamma * g0 + 0.5 * gamma**2 * L_g * D**2
            )
            worst = max(worst, f_excess, g_excess)
        ok = pairs > 0 and worst <= slack
        results.append(
            (f"per-step bounds {inst.name}", ok, f"{pairs} steps, worst excess {worst:.3e}")
        )
    return results


# ---------------------------------------------------------------------------
# Convergence rates, convex upper level
# ---------------------------------------------------------------------------

def check_convex_rates(max_k: int = 500, slack: float = 1e-8) -> list:
    results = []
    instances = [toy_problem()] + [
        random_convex_instance(300 + i, 2 + i % 2) for i in range(20)
    ]
    eps_g = 1e-9
    for inst in instances:
        x0, cfg, out, certified = _cg_bio_trajectory(inst, 1e-13, eps_g, max_k)
        if not certified:
            results.append((f"rate bounds {inst.name}", False, "initialization not certified"))
            continue
        L_f = inst.upper.lipschitz_grad
        L_g = inst.lower.lipschitz_grad
        D = inst.region.diameter
        f_star = inst.reference.f_star
        g_star = inst.reference.g_star
        worst = -np.inf
        for row in out.trace:
            if row.k == 0:
                continue
            f_bound = 2.0 * L_f * D**2 / (row.k + 1.0)
            g_bound = 2.0 * L_g * D**2 / (row.k + 1.0) + eps_g / 2.0
            worst = max(
                worst,
                (row.f_val - f_star) - f_bound,
                (row.g_val - g_star) - g_bound,
            )
        results.append(
            (f"rate bounds {inst.name}", worst <= slack, f"worst excess {worst:.3e}")
        )
    return results


# ---------------------------------------------------------------------------
# Convergence rates, non-convex upper level
# ---------------------------------------------------------------------------

def _grid_lower_bound(oracle: SmoothOracle, region: L1Ball, per_axis: int = 25) -> float:
    """Conservative lower bound on the objective over an l1 ball: grid
    minimum minus a gradient-based cell margin, floored at zero for
    objectives known to be nonnegative (squared covariance)."""
    d = region.dimension
    axes = [np.linspace(-region.radius, region.radius, per_axis)] * d
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    h = 2.0 * region.radius / (per_axis - 1.0)
    best, max_grad = np.inf, 0.0
    for x in mesh:
        if not region.contains(x, tol=1e-12):
            continue
        val, grad = oracle(x)
        best = min(best, val)
        max_grad = max(max_grad, float(np.linalg.norm(grad)))
    return max(best - max_grad * h * np.sqrt(d) / 2.0, 0.0)


def check_nonconvex_rates(eps_values=(1e-1, 1e-2), seed: int = 7, k_cap: int = 200_000) -> list:
    results = []
    inst, _ = fair_classification_problem(n=40, d=3, seed=seed, l1_radius=2.0)
    # The reference tolerance is folded into the bound slack below; it is
    # four orders of magnitude below the smallest eps checked.
    ref_tol = 1e-6
    g_star = reference_lower(inst, tol=ref_tol, max_iters=500_000)
    L_f = inst.upper.lipschitz_grad
    L_g = inst.lower.lipschitz_grad
    D = inst.region.diameter
    f_floor = _grid_lower_bound(inst.upper, inst.region)
    for eps in eps_values:
        gamma = min(eps / (L_f * D**2), eps / (L_g * D**2), 1.0)
        x0, _, certified = initialize_lower(inst, eps)
        f0 = inst.upper.value(x0)
        K = int(np.ceil(2.0 * (f0 - f_floor) * max(L_f * D**2 / eps**2, L_g * D**2 / (eps * eps))))
        K = min(max(K, 1), k_cap)
        cfg = SolverConfig(eps_f=eps, eps_g=eps, max_iters=K, schedule=ConstantStep(gamma))
        inst_certified = replace(inst, reference=ReferenceData(g_star=g_star))
        out = cg_bio(inst_certified, x0, cfg)
        best = out.trace[out.best_index]
        ok = (
            certified
            and best.surrogate_f_gap <= eps + 1e-12
            and best.g_val - g_star <= eps + 2.0 * ref_tol
        )
        results.append(
            (
                f"stationarity at eps={eps:g}",
                ok,
                f"K={K}, min f-gap {best.surrogate_f_gap:.3e}, g-gap {best.g_val - g_star:.3e}",
            )
        )
    return results


# ---------------------------------------------------------------------------
# Value lower bound and matched-tolerance schedule
# ---------------------------------------------------------------------------

def check_value_transfer(samples: int = 1000, slack: float = 1e-8) -> list:
    results = []
    inst = toy_problem()
    params = hoelder_estimate(inst, order=1.0)
    ok_m = abs(params.M - np.hypot(0.5, 0.1)) <= 1e-6
    results.append(("gradient bound over the optimal face", ok_m, f"M={params.M:.6f}"))
    ok_p = value_transfer_check(inst, params, eps_g=1e-3, samples=samples, slack=slack)
    results.append(("value lower bound on near-optimal points", ok_p, f"alpha={params.alpha:.4f}"))

    # Matched tolerances: eps_g = (alpha/r) (eps_f / M)^r gives |f - f*| <= eps_f.
    eps_f = 1e-3
    eps_g = params.alpha / params.order * (eps_f / params.M) ** params.order
    x0, _, certified = initialize_lower(inst, eps_g)
    cfg = SolverConfig(eps_f=eps_f, eps_g=eps_g, max_iters=10_000)
    out = cg_bio(inst, x0, cfg)
    dev = abs(inst.upper.value(out.final_point) - inst.reference.f_star)
    ok_c = certified and out.stop_reason == "criterion_met" and dev <= eps_f + slack
    results.append(("matched-tolerance schedule", ok_c, f"|f - f*| = {dev:.3e}"))
    return results


# ---------------------------------------------------------------------------
# Oracle equivalence against brute force
# ---------------------------------------------------------------------------

def brute_lmo_l1(radius: float, c: np.ndarray) -> np.ndarray:
    """l1-ball LMO by enumerating the 2d signed vertices, lowest index wins."""
    d = c.shape[0]
    best, best_val = None, np.inf
    for i in range(d):
        for sign in (1.0, -1.0):
            v = np.zeros(d)
            v[i] = sign * radius
            val = float(c @ v)
            if val < best_val - 1e-15:
                best, best_val = v, val
    return best

def brute_min_over_points(points: np.ndarray, c: np.ndarray) -> float:
    return float(np.min(points @ c))


def _grid_zoom_projection(objective: Callable[[np.ndarray], float], center, radius, dims, rounds=8, per_axis=11):
    """Nested zooming grid minimizer used as an independent projection oracle."""
    center = np.array(center, dtype=float)
    for _ in range(rounds):
        axes = [np.linspace(center[i] - radius, center[i] + radius, per_axis) for i in range(dims)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dims)
        vals = np.array([objective(x) for x in mesh])
        center = mesh[int(np.argmin(vals))]
        radius *= 2.5 / (per_axis - 1)
    return center


def _project_l1_reference(y: np.ndarray, radius: float) -> np.ndarray:
    """l1-ball projection via bisection on the soft-threshold level."""
    if np.abs(y).sum() <= radius:
        return y.copy()
    lo, hi = 0.0, float(np.abs(y).max())
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.maximum(np.abs(y) - mid, 0.0).sum() > radius:
            lo = mid
        else:
            hi = mid
    theta = 0.5 * (lo + hi)
    return np.sign(y) * np.maximum(np.abs(y) - theta, 0.0)


def _project_polytope_reference(region: Polytope, y: np.ndarray) -> np.ndarray:
    """Exact projection by enumerating active subsets of the defining
    halfspaces (equality-constrained least squares + feasibility filter)."""
    from itertools import combinations

    planes = region.halfspaces()
    d = region.dimension
    best, best_val = None, np.inf
    for r in range(0, min(len(planes), d) + 1):
        for idx in combinations(range(len(planes)), r):
            if r == 0:
                x = y.copy()
            else:
                A = np.array([planes[i][0] for i in idx])
                b = np.array([planes[i][1] for i in idx])
                # minimize |x - y|^2 s.t. Ax = b via KKT
                K = np.block([[np.eye(d), A.T], [A, np.zeros((r, r))]])
                rhs = np.concatenate([y, b])
                sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
                if np.linalg.norm(K @ sol - rhs) > 1e-8:
                    continue
                x = sol[:d]
            if region.contains(x, tol=1e-8):
                val = float(np.sum((x - y) ** 2))
                if val < best_val:
                    best, best_val = x, val
    return best


def check_oracles(count: int = 100, seed: int = 0) -> list:
    rng = np.random.default_rng(seed)
    results = []

    # l1-ball LMO against signed-vertex enumeration.
    worst = 0.0
    for _ in range(count):
        d = int(rng.integers(2, 7))
        radius = float(rng.uniform(0.5, 3.0))
        c = rng.standard_normal(d)
        worst = max(worst, float(np.linalg.norm(lmo(L1Ball(radius, d), c) - brute_lmo_l1(radius, c))))
    results.append(("l1 LMO vs vertex enumeration", worst <= 1e-8, f"worst {worst:.2e}"))

    # Ball-product LMO value against a random feasible cloud.
    worst = 0.0
    for _ in range(count):
        reg = BallProduct(int(rng.integers(1, 4)), int(rng.integers(2, 4)), float(rng.uniform(0.5, 2.0)))
        c = rng.standard_normal(reg.dimension)
        cloud = sample_region(reg, 1000, seed=int(rng.integers(1 << 30)))
        worst = max(worst, float(lmo(reg, c) @ c) - brute_min_over_points(cloud, c))
    results.append(("ball-product LMO vs sampled cloud", worst <= 1e-8, f"worst {worst:.2e}"))

    # Polytope LMO (simplex) against vertex enumeration.
    worst = 0.0
    for i in range(count):
        reg = _random_polytope(rng)
        c = rng.standard_normal(reg.dimension)
        verts = reg.vertices()
        gap = float(lmo(reg, c) @ c) - brute_min_over_points(verts, c)
        worst = max(worst, abs(gap))
    results.append(("polytope LMO vs vertex enumeration", worst <= 1e-8, f"worst {worst:.2e}"))

    # Halfspace-restricted LMOs against brute force on the restricted set.
    worst = 0.0
    for _ in range(count):
        d = int(rng.integers(2, 5))
        reg = L1Ball(float(rng.uniform(0.5, 2.0)), d)
        c = rng.standard_normal(d)
        interior = sample_region(reg, 200, seed=int(rng.integers(1 << 30)))
        anchor = interior[0]
        h = Halfspace(rng.standard_normal(d), 0.0)
        h = Halfspace(h.normal, float(h.normal @ anchor))  # guaranteed nonempty
        s = halfspace_lmo(reg, h, c)
        ok_feas = reg.contains(s, tol=1e-7) and h.contains(s, tol=1e-7)
        grid = np.vstack([interior, _l1_halfspace_boundary_grid(reg, h, rng)])
        feas = grid[[h.contains(x, tol=0.0) and reg.contains(x) for x in grid]]
        ref = brute_min_over_points(feas, c) if feas.size else np.inf
        gap = float(s @ c) - ref
        worst = max(worst, gap if ok_feas else np.inf)
    results.append(("restricted l1 LMO vs brute force", worst <= 1e-8, f"worst {worst:.2e}"))

    worst = 0.0
    for _ in range(count):
        reg = BallProduct(int(rng.integers(1, 3)), 2, float(rng.uniform(0.5, 2.0)))
        c = rng.standard_normal(reg.dimension)
        cloud = sample_region(reg, 3000, seed=int(rng.integers(1 << 30)))
        anchor = cloud[0]
        normal = rng.standard_normal(reg.dimension)
        h = Halfspace(normal, float(normal @ anchor))
        s = halfspace_lmo(reg, h, c)
        ok_feas = reg.contains(s, tol=1e-7) and h.contains(s, tol=1e-7)
        nrm2 = float(h.normal @ h.normal)
        t = np.maximum((cloud @ h.normal - h.offset) / nrm2, 0.0)
        slid = cloud - np.outer(t, h.normal)
        grid = np.vstack([cloud, slid])
        feas = grid[[h.contains(x, tol=0.0) and reg.contains(x) for x in grid]]
        ref = brute_min_over_points(feas, c) if feas.size else np.inf
        worst = max(worst, (float(s @ c) - ref) if ok_feas else np.inf)
    results.append(("restricted ball-product LMO vs brute force", worst <= 1e-8, f"worst {worst:.2e}"))

    worst = 0.0
    for _ in range(count):
        reg = _random_polytope(rng)
        c = rng.standard_normal(reg.dimension)
        verts = reg.vertices()
        anchor = verts.mean(axis=0)
        normal = rng.standard_normal(reg.dimension)
        h = Halfspace(normal, float(normal @ anchor))
        s = halfspace_lmo(reg, h, c)
        cut_poly = Polytope(
            A=np.vstack([reg.A, h.normal]), b=np.append(reg.b, h.offset),
            nonnegative=reg.nonnegative,
        )
        ref = brute_min_over_points(cut_poly.vertices(), c)
        ok_feas = reg.contains(s, tol=1e-7) and h.contains(s, tol=1e-7)
        worst = max(worst, (float(s @ c) - ref) if ok_feas else np.inf)
    results.append(("restricted polytope LMO vs vertex enumeration", worst <= 1e-8, f"worst {worst:.2e}"))

    # Simplex solver against vertex enumeration on random bounded LPs.
    worst = 0.0
    for _ in range(count):
        reg = _random_polytope(rng)
        c = rng.standard_normal(reg.dimension)
        sol = simplex_solve(LpProblem(c=c, A=reg.A, b=reg.b))
        ref = brute_min_over_points(reg.vertices(), c)
        worst = max(worst, abs(sol.value - ref))
    results.append(("simplex vs vertex enumeration", worst <= 1e-8, f"worst {worst:.2e}"))

    # Projections against independent oracles.
    worst = 0.0
    for _ in range(count):
        d = int(rng.integers(2, 7))
        radius = float(rng.uniform(0.5, 2.0))
        y = rng.standard_normal(d) * 2.0
        p = project_l1_ball(y, radius)
        ref = _project_l1_reference(y, radius)
        worst = max(worst, float(np.linalg.norm(p - ref)))
    results.append(("l1 projection vs threshold bisection", worst <= 1e-6, f"worst {worst:.2e}"))

    worst = 0.0
    for _ in range(count):
        reg = _random_polytope(rng)
        y = rng.standard_normal(reg.dimension) * 1.5
        p = project_polytope(reg, y)
        ref = _project_polytope_reference(reg, y)
        worst = max(worst, float(np.linalg.norm(p - ref)))
    results.append(("polytope projection vs active-set QP", worst <= 1e-6, f"worst {worst:.2e}"))

    worst = 0.0
    for _ in range(count):
        reg = BallProduct(2, 2, float(rng.uniform(0.5, 2.0)))
        y = rng.standard_normal(reg.dimension) * 2.0
        p = project_ball_product(reg, y)
        cols = reg.columns(y)
        for j in range(reg.num_cols):
            ref_col = _project_disk_reference(cols[:, j], float(reg.radii[j]))
            worst = max(worst, float(np.linalg.norm(reg.columns(p)[:, j] - ref_col)))
    results.append(("ball projection vs zooming grid", worst <= 1e-6, f"worst {worst:.2e}"))
    return results


def _project_disk_reference(y: np.ndarray, radius: float) -> np.ndarray:
    """Projection onto a 2-D disk by a zooming grid in polar coordinates,
    where every grid point is feasible by construction."""

    def point(params):
        rho, theta = params
        rho = min(max(rho, 0.0), radius)
        return np.array([rho * np.cos(theta), rho * np.sin(theta)])

    best = _grid_zoom_projection(
        lambda params: float(np.sum((point(params) - y) ** 2)),
        np.array([radius / 2.0, 0.0]), max(radius, np.pi), 2,
        rounds=12, per_axis=21,
    )
    return point(best)


def _random_polytope(rng) -> Polytope:
    """Random bounded polytope: the unit box in 2-3 dims plus extra cuts."""
    d = int(rng.integers(2, 4))
    rows = [np.eye(d)]
    rhs = [np.ones(d)]
    for _ in range(int(rng.integers(0, 3))):
        a = rng.uniform(0.2, 1.0, size=d)
        rows.append(a[None, :])
        rhs.append(np.array([float(rng.uniform(0.4 * a.sum(), a.sum()))]))
    return Polytope(A=np.vstack(rows), b=np.concatenate(rhs))


def _l1_halfspace_boundary_grid(reg: L1Ball, h: Halfspace, rng) -> np.ndarray:
    """Dense feasible cloud biased toward the l1 sphere and the cut boundary."""
    d = reg.dimension
    pts = sample_region(reg, 2000, seed=int(rng.integers(1 << 30)))
    sphere = np.sign(rng.standard_normal((2000, d))) * rng.dirichlet(np.ones(d), 2000) * reg.radius
    cloud = np.vstack([pts, sphere])
    # slide points onto the cut boundary along -normal where possible
    nrm2 = float(h.normal @ h.normal)
    if nrm2 > 0:
        t = (cloud @ h.normal - h.offset) / nrm2
        slid = cloud - np.outer(np.maximum(t, 0.0), h.normal)
        cloud = np.vstack([cloud, slid])
    return cloud


# ---------------------------------------------------------------------------
# Gradient checks
# ---------------------------------------------------------------------------

def finite_difference_gradient(oracle: SmoothOracle, x: np.ndarray, step: float = 1e-6) -> np.ndarray:
    g = np.empty(oracle.dimension)
    for i in range(oracle.dimension):
        e = np.zeros(oracle.dimension)
        e[i] = step
        g[i] = (oracle.value(x + e) - oracle.value(x - e)) / (2.0 * step)
    return g


def _gradient_check(oracle: SmoothOracle, points: np.ndarray, rel_tol: float = 1e-4) -> tuple[bool, float]:
    worst = 0.0
    for x in points:
        analytic = oracle.gradient(x)
        numeric = finite_difference_gradient(oracle, x)
        denom = max(float(np.linalg.norm(analytic)), 1.0)
        worst = max(worst, float(np.linalg.norm(analytic - numeric)) / denom)
    return worst <= rel_tol, worst


SMALL_DICT_SPEC = DictLearnSpec(
    signal_dim=4, true_dict_size=6, old_dict_size=5, new_dict_size=3, shared=2,
    n_old=8, n_new=6, sparsity=2, seed=3,
)


def check_gradients(points_per_family: int = 100, seed: int = 0) -> list:
    rng = np.random.default_rng(seed)
    results = []
    toy = toy_problem()
    reg, _ = regression_problem(n=30, d=20, seed=1)
    fair, _ = fair_classification_problem(n=40, d=4, seed=2, l1_radius=3.0)
    bundle = dictionary_problem(SMALL_DICT_SPEC, pretrain_iters=50, pretrain_polish_iters=50)
    cases = [
        ("toy", toy.upper, 2), ("toy lower", toy.lower, 2),
        ("regression", reg.upper, reg.dimension), ("regression lower", reg.lower, reg.dimension),
        ("fair", fair.upper, fair.dimension), ("fair lower", fair.lower, fair.dimension),
        ("dictionary", bundle.bilevel.upper, bundle.bilevel.dimension),
        ("dictionary lower", bundle.bilevel.lower, bundle.bilevel.dimension),
        ("pretraining", bundle.pretrain_oracle, bundle.pretrain_oracle.dimension),
    ]
    for label, oracle, dim in cases:
        n_pts = points_per_family if dim <= 50 else max(points_per_family // 10, 5)
        pts = rng.standard_normal((n_pts, dim))
        ok, worst = _gradient_check(oracle, pts)
        results.append((f"gradient {label}", ok, f"worst relative error {worst:.2e}"))
    return results


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------

GROUPS = {
    "cuts": check_cut_retention,
    "descent": check_descent_steps,
    "convex-rates": check_convex_rates,
    "nonconvex-rates": check_nonconvex_rates,
    "transfer": check_value_transfer,
    "oracles": check_oracles,
    "gradients": check_gradients,
}


def verify(groups: Optional[list[str]] = None) -> tuple[bool, list]:
    """Run the named verification groups (all by default).  Returns overall
    success plus the flat (label, passed, detail) list."""
    names = groups or list(GROUPS)
    results = []
    for name in names:
        if name not in GROUPS:
            raise ValueError(f"unknown verification group {name!r}")
        for label, ok, detail in GROUPS[name]():
            results.append((f"{name}: {label}", ok, detail))
    return all(ok for _, ok, _ in results), results
