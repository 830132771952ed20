"""
End-to-end construction: the stage loop and the final verification battery.

Stage 1 classifies the base field on Ω; every later stage refines the
constant leaves the previous stage left behind. The report pairs each
checked quantity with its bound.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.spatial.distance import cdist

from app.models.field import AffineBase, Base, FieldNode, FieldTree, Leaf, RegionTree
from app.models.geometry import Box, Domain, MatrixPair
from app.models.scenario import Scenario
from app.schemas.report import BoundRow, PersistenceRow, ProbeRow, RunReport, StageReport, WildnessReport
from app.services.field_service import base_values, field_divergence, field_leaves, l1_deviation, l1_distance
from app.services.measure_service import Z_99, mc_measure
from app.services.scenario_service import (
    compactness_fit,
    config_at,
    pi_lower_bound,
    set_gaps,
    sigma_one_diameter,
    zeta,
)
from app.services.stage_service import StageCube, StageResult, apply_stage, run_stage_on_leaves, stage_params
from app.utils.linalg import ball_samples
from app.utils.smooth import smooth_step, smooth_step_derivative
from core.config import config
from core.exceptions import DomainException, PreconditionException
from core.logging import get_logger

logger = get_logger(__name__)

GAUSS_POINTS = 4
PROBE_SAMPLES = 256
# tolerance when matching leaf labels to a stage's μ
LAM_MATCH = 1e-12
# relative tolerance when matching sampled values to leaf labels
LABEL_TOL = 1e-9


@dataclass(frozen=True)
class Schedule:
    """λ_ν, r_ν and ε_ν for ν = 1 … K + 1 (index ν − 1)."""

    delta: float
    lambdas: tuple[float, ...]
    radii: tuple[float, ...]
    eps: tuple[float, ...]
    K: int

    def eps_at(self, nu: int) -> float:
        """ε_ν = δ/3^ν, defined for every ν ≥ 0."""
        return self.delta / 3.0**nu

    def eps_sum(self, upto: int) -> float:
        return float(sum(self.eps_at(nu) for nu in range(1, upto + 1)))


def make_schedule(delta: float, lambda1: float, r1: float, r0: float, K: int) -> Schedule:
    """λ_{ν+1} = (1 + λ_ν)/2, r_{ν+1} = (r₀ + r_ν)/2 and ε_ν = δ/3^ν."""
    if not 0.0 < delta < 1.0:
        raise DomainException(f"δ = {delta} is outside (0, 1)")
    if not 0.0 < lambda1 < 1.0:
        raise DomainException(f"λ₁ = {lambda1} is outside (0, 1)")
    if not 0.0 < r1 < r0:
        raise DomainException(f"Need 0 < r₁ < r₀, got r₁ = {r1}, r₀ = {r0}")
    if K < 0:
        raise DomainException(f"K = {K} must be nonnegative")
    lambdas, radii = [lambda1], [r1]
    for _ in range(K):
        lambdas.append(0.5 * (1.0 + lambdas[-1]))
        radii.append(0.5 * (r0 + radii[-1]))
    eps = [delta / 3.0**nu for nu in range(1, K + 2)]
    return Schedule(delta, tuple(lambdas), tuple(radii), tuple(eps), K)


def default_base(s: Scenario) -> AffineBase:
    """ū with Dū = ζ_1¹(λ, 0) and V̄ ≡ ζ_1²(λ, 0), λ = 0.7 (or midway to 1 above δ₂)."""
    lam = 0.7 if s.delta2 < 0.7 else 0.5 * (s.delta2 + 1.0)
    return AffineBase.from_value(zeta(s, 1, lam, MatrixPair.zeros(s.m, s.n)))


# --------------------------------------------------------------------------
# Residuals and probes
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GraphResidual:
    """∫_Ω |σ(Du) − V| by Monte Carlo, and the empirical constant Ĉ."""

    value: float
    half_width: float
    C_hat: float


def graph_l1(s: Scenario, tree: FieldTree, Omega: Domain, samples: Optional[int] = None, seed: Optional[int] = None) -> GraphResidual:
    """
    Monte Carlo estimate of ∫_Ω |σ(Du) − V| with a 99% half-width.

    Ĉ is the largest |σ(A) − B|/(1 − λ) over the pinned leaves, read off
    their exact labels.
    """
    samples = config.MC_SAMPLES if samples is None else samples
    rng = np.random.default_rng(config.DEFAULT_SEED if seed is None else seed)
    X = Omega.sample(rng, samples)
    _, Du, V = tree.evaluate(X)
    gaps = np.linalg.norm((s.sigma_of(Du) - V).reshape(samples, -1), axis=1)
    volume = Omega.volume
    value = volume * float(np.mean(gaps))
    half_width = volume * Z_99 * float(np.std(gaps)) / np.sqrt(samples)

    C_hat = 0.0
    for leaf in field_leaves(tree):
        label = leaf.label
        if not label.pinned or label.lam is None or label.lam >= 1.0:
            continue
        A, B = label.value.first, label.value.second
        residual = float(np.linalg.norm(s.sigma_of(A) - B))
        C_hat = max(C_hat, residual / (1.0 - label.lam))
    return GraphResidual(value, half_width, C_hat)


def essential_oscillation(
    tree: FieldTree, x0, radius: float, samples: int = PROBE_SAMPLES, seed: Optional[int] = None,
    Omega: Optional[Domain] = None,
) -> float:
    """Largest ‖Du(y) − Du(y′)‖ over sampled y, y′ in the cube of the given radius around x0."""
    rng = np.random.default_rng(config.DEFAULT_SEED if seed is None else seed)
    X = Box.cube(x0, radius).sample(rng, samples)
    if Omega is not None:
        X = X[Omega.contains(X)]
    if len(X) < 2:
        return 0.0
    _, Du, _ = tree.evaluate(X)
    flat = Du.reshape(len(X), -1)
    return float(np.max(cdist(flat, flat)))


def wildness_probe(
    tree: FieldTree,
    Omega: Domain,
    probes: int,
    seed: Optional[int],
    d0: float,
    radius: float,
    finest_scale: float = 0.0,
    samples: int = PROBE_SAMPLES,
) -> WildnessReport:
    """
    Sample `probes` cubes of the given radius centered in Ω and check that Du
    oscillates by at least d0 on each. Probes smaller than `finest_scale`
    are marked scale limited.
    """
    seed = config.DEFAULT_SEED if seed is None else seed
    rng = np.random.default_rng(seed)
    rows = []
    for index, center in enumerate(Omega.sample(rng, probes) if probes > 0 else []):
        oscillation = essential_oscillation(tree, center, radius, samples, seed + index + 1, Omega)
        rows.append(
            ProbeRow(
                center=center.tolist(),
                radius=radius,
                oscillation=oscillation,
                passed=oscillation >= d0,
                scale_limited=radius < finest_scale,
            )
        )
    fraction = float(np.mean([row.passed for row in rows])) if rows else 1.0
    return WildnessReport(probes=rows, d0=d0, pass_fraction=fraction)


def _bump(t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # β(t) = S(2(1 − |t|)): 1 on |t| ≤ 1/2, 0 outside (−1, 1)
    arg = 2.0 * (1.0 - np.abs(t))
    return smooth_step(arg), -2.0 * np.sign(t) * smooth_step_derivative(arg)


def _quadrature(box: Box, depth: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss–Legendre nodes and weights on 2^depth panels per axis."""
    nodes, weights = leggauss(GAUSS_POINTS)
    panels = 2**depth
    axes, axis_weights = [], []
    for j in range(box.n):
        edges = np.linspace(box.lo[j], box.hi[j], panels + 1)
        half = 0.5 * np.diff(edges)
        middle = 0.5 * (edges[:-1] + edges[1:])
        axes.append((middle[:, None] + half[:, None] * nodes[None, :]).ravel())
        axis_weights.append((half[:, None] * weights[None, :]).ravel())
    grid = np.array(np.meshgrid(*axes, indexing="ij")).reshape(box.n, -1).T
    mesh = np.array(np.meshgrid(*axis_weights, indexing="ij")).reshape(box.n, -1).T
    return grid, np.prod(mesh, axis=1)


def _test_functions(Omega: Domain, tests: int, m: int, rng: np.random.Generator):
    """Random bumps compactly supported in Ω: (support box, coefficient vector)."""
    for _ in range(tests):
        box = Omega.boxes[int(rng.integers(len(Omega.boxes)))]
        radii = box.radii * rng.uniform(0.1, 0.5, size=box.n)
        slack = box.radii - radii
        center = box.center + slack * rng.uniform(-1.0, 1.0, size=box.n)
        yield Box(center, radii), rng.normal(size=m)


def _bump_gradient(support: Box, X: np.ndarray) -> np.ndarray:
    t = (X - support.center) / support.radii
    values, slopes = _bump(t)
    k, n = X.shape
    gradient = np.empty((k, n))
    for j in range(n):
        others = np.prod(np.delete(values, j, axis=1), axis=1)
        gradient[:, j] = slopes[:, j] / support.radii[j] * others
    return gradient


@dataclass(frozen=True)
class WeakResiduals:
    """Largest normalized pairings over the test functions, and the gap bound of the last."""

    divergence: float
    solution: float
    solution_bound: float


def weak_residuals(
    s: Optional[Scenario], tree: FieldTree, Omega: Domain, tests: int = 8, quad_depth: int = 6,
    seed: Optional[int] = None,
) -> WeakResiduals:
    """
    |∫⟨V, Dφ⟩| and |∫⟨σ(Du), Dφ⟩|, each over ‖Dφ‖_{L¹}, by composite quadrature.

    Since V is divergence free, the second pairing is at most the largest
    |σ(Du) − V| at the nodes plus the first; that sum is the solution bound.
    """
    if tests < 1:
        raise DomainException(f"Need at least one test function, got {tests}")
    rng = np.random.default_rng(config.DEFAULT_SEED if seed is None else seed)
    m, _ = tree.shape
    divergence = solution = bound = 0.0
    for support, coeffs in _test_functions(Omega, tests, m, rng):
        X, weights = _quadrature(support, quad_depth)
        gradient = _bump_gradient(support, X)
        total = float(np.sum(weights * np.linalg.norm(coeffs) * np.linalg.norm(gradient, axis=1)))
        if total <= 0.0:
            continue
        _, Du, V = tree.evaluate(X)
        # ⟨F, c ⊗ ∇β⟩ = cᵀ F ∇β
        div_ratio = abs(float(np.sum(weights * np.einsum("a,kaj,kj->k", coeffs, V, gradient)))) / total
        divergence = max(divergence, div_ratio)
        if s is None:
            continue
        flux = s.sigma_of(Du)
        sol_ratio = abs(float(np.sum(weights * np.einsum("a,kaj,kj->k", coeffs, flux, gradient)))) / total
        gap = float(np.max(np.linalg.norm((flux - V).reshape(len(X), -1), axis=1)))
        solution = max(solution, sol_ratio)
        bound = max(bound, gap + div_ratio)
    return WeakResiduals(divergence, solution, bound)


def weak_div_residual(
    tree: FieldTree, Omega: Domain, tests: int = 8, quad_depth: int = 6, seed: Optional[int] = None
) -> float:
    """Largest |∫⟨V, Dφ⟩|/‖Dφ‖_{L¹} over random bump test functions φ."""
    return weak_residuals(None, tree, Omega, tests, quad_depth, seed).divergence


def weak_solution_residual(
    s: Scenario, tree: FieldTree, Omega: Domain, tests: int = 8, quad_depth: int = 6, seed: Optional[int] = None
) -> float:
    """Largest |∫⟨σ(Du), Dφ⟩|/‖Dφ‖_{L¹}: how far u is from a weak solution."""
    return weak_residuals(s, tree, Omega, tests, quad_depth, seed).solution


def gradient_bound(s: Scenario, samples: int = 256, seed: Optional[int] = None) -> float:
    """Sampled sup{|A| : (A, B) ∈ Σ(1)}, attained at corners and anchors."""
    rng = np.random.default_rng(config.DEFAULT_SEED if seed is None else seed)
    best = 0.0
    for row in ball_samples(rng, s.rho_dim, s.r0, samples):
        cfg = config_at(s, s.rho_from_flat(row))
        best = max(best, max(float(np.linalg.norm(point.first)) for point in cfg.xis + cfg.pis))
    return best


def lipschitz_report(
    s: Scenario, tree: FieldTree, Omega: Domain, samples: Optional[int] = None, slack: float = 0.0,
    seed: Optional[int] = None,
) -> BoundRow:
    """Sampled sup|Du| against the largest gradient in Σ(1), plus `slack`."""
    samples = config.MC_SAMPLES if samples is None else samples
    rng = np.random.default_rng(config.DEFAULT_SEED if seed is None else seed)
    _, Du, _ = tree.evaluate(Omega.sample(rng, samples))
    sup = float(np.max(np.linalg.norm(Du.reshape(samples, -1), axis=1)))
    return BoundRow.check("lipschitz", sup, gradient_bound(s, seed=seed) + slack, "<=", "sampled")


def _collar_samples(Omega: Domain, collar: float, count: int, rng: np.random.Generator) -> np.ndarray:
    X = Omega.sample(rng, count)
    for index, x in enumerate(X):
        box = next(box for box in Omega.boxes if box.contains(x[None, :], closed=True)[0])
        j = int(rng.integers(box.n))
        depth = collar * rng.random()
        X[index, j] = box.lo[j] + depth if rng.random() < 0.5 else box.hi[j] - depth
    return X


def boundary_check(
    tree: FieldTree, Omega: Domain, samples: int = 512, collar: Optional[float] = None, seed: Optional[int] = None
) -> float:
    """Largest |u − ū| + |Du − Dū| + |V − V̄| within a thin collar of ∂Ω."""
    collar = 1e-9 * Omega.diameter if collar is None else collar
    rng = np.random.default_rng(config.DEFAULT_SEED if seed is None else seed)
    X = _collar_samples(Omega, collar, samples, rng)
    u, Du, V = tree.evaluate(X)
    u0, Du0, V0 = tree.base.evaluate(X)
    deviation = (
        np.linalg.norm(u - u0, axis=1)
        + np.linalg.norm((Du - Du0).reshape(samples, -1), axis=1)
        + np.linalg.norm((V - V0).reshape(samples, -1), axis=1)
    )
    return float(np.max(deviation))


def sup_drift(tree: FieldTree, Omega: Domain, samples: Optional[int] = None, seed: Optional[int] = None) -> float:
    """Sampled max |u − ū| on the points `graph_l1` draws for the same seed."""
    samples = config.MC_SAMPLES if samples is None else samples
    rng = np.random.default_rng(config.DEFAULT_SEED if seed is None else seed)
    X = Omega.sample(rng, samples)
    u, _, _ = tree.evaluate(X)
    u0, _, _ = tree.base.evaluate(X)
    return float(np.max(np.linalg.norm(u - u0, axis=1)))


# --------------------------------------------------------------------------
# Persistence
# --------------------------------------------------------------------------


def _persistence_bound(s: Scenario, schedule: Schedule, q: int, p: int) -> float:
    lam = schedule.lambdas
    top, low, far = lam[q + 1], lam[q], lam[p]
    return 0.5 * (top / far) * (top - low) * (top - s.delta2) ** (s.N - 1) * s.delta1


def _branch_leaves(leaves: tuple[Leaf, ...], k: int, lam: float) -> list[Leaf]:
    return [
        leaf
        for leaf in leaves
        if leaf.label.corner == k and leaf.label.lam is not None and abs(leaf.label.lam - lam) <= LAM_MATCH
    ]


def _branch_indicator(node: FieldNode, leaves: list[Leaf]):
    """Points of the node frame whose value is one of the leaf labels."""
    targets = np.array([leaf.label.value.flat() for leaf in leaves])
    scale = 1.0 + float(np.max(np.abs(targets))) if len(targets) else 1.0

    def indicator(X: np.ndarray) -> np.ndarray:
        if not len(targets):
            return np.zeros(len(X), dtype=bool)
        _, Dphi, Psi = node.evaluate(X)
        values = node.base_value.flat()[None, :] + np.concatenate(
            [Dphi.reshape(len(X), -1), Psi.reshape(len(X), -1)], axis=1
        )
        return np.min(cdist(values, targets), axis=1) <= LABEL_TOL * scale

    return indicator


def _persistence_rows(
    s: Scenario, schedule: Schedule, cubes_by_stage: dict[int, list[FieldNode]], p: int, seed: int,
    samples: Optional[int] = None,
) -> list[PersistenceRow]:
    """
    Rows for every q < p over the cubes Q^q produced by stage q.

    The exact measure comes from the leaves; a Monte Carlo estimate over the
    cube must agree with it within three half-widths.
    """
    samples = config.VERIFY_SAMPLES if samples is None else samples
    rows = []
    lam = schedule.lambdas[p]
    for q in range(1, p):
        factor = _persistence_bound(s, schedule, q, p)
        for index, node in enumerate(cubes_by_stage[q]):
            volume = node.box.volume
            below = RegionTree(node.box, node).leaves
            for k in range(1, s.N + 1):
                leaves = _branch_leaves(below, k, lam)
                measure = float(sum(leaf.measure for leaf in leaves))
                mc = mc_measure(_branch_indicator(node, leaves), node.box, samples, seed + 97 * index + k)
                rows.append(
                    PersistenceRow(
                        q=q, p=p, cube=index, k=k, cube_measure=volume,
                        bound=BoundRow.check(f"persistence_{q}_{p}_{index}_{k}", measure, factor * volume),
                        mc_estimate=mc.estimate,
                        mc_half_width=mc.half_width,
                        mc_consistent=abs(mc.estimate - measure) <= 3.0 * (mc.half_width + volume / samples),
                    )
                )
    return rows


def persistence_check(report: RunReport, q: int, j: int, p: int, k: int) -> PersistenceRow:
    """The recorded persistence row for cube j of level q at stage p and branch k."""
    if not 1 <= q < p:
        raise DomainException(f"Need 1 ≤ q < p, got q = {q}, p = {p}")
    for row in report.persistence:
        if (row.q, row.cube, row.p, row.k) == (q, j, p, k):
            return row
    raise DomainException(f"No cube {j} at level {q} with a stage-{p} record for branch {k}")


# --------------------------------------------------------------------------
# Stage loop
# --------------------------------------------------------------------------


def _step_tolerances(s: Scenario, tree: FieldTree, Omega: Domain, schedule: Schedule, seed: int) -> list[float]:
    """τ_ν = min(ε′_ν, ε′_{ν+1}·θ_ν), so each stage's free bands fit the next stage's budget."""
    lam, rad = schedule.lambdas, schedule.radii
    eps_primes = []
    for nu in range(1, schedule.K + 1):
        params = stage_params(
            s, tree, Omega, lam[nu - 1], lam[nu], rad[nu - 1], rad[nu], schedule.eps_at(nu), lipschitz=0.0, seed=seed
        )
        eps_primes.append(params.eps_prime)
    taus = []
    for nu in range(1, schedule.K + 1):
        mu, low = lam[nu], lam[nu - 1]
        theta = 0.5 * (mu - low) * pi_lower_bound(s, mu)
        following = eps_primes[nu] * theta if nu < schedule.K else eps_primes[nu - 1]
        taus.append(min(eps_primes[nu - 1], following))
    return taus


def run_construction(
    s: Scenario,
    base: Base,
    Omega: Domain,
    delta: float,
    K: int,
    seed: Optional[int] = None,
    grid: int = 4,
    mc_samples: Optional[int] = None,
    probes: int = 16,
    quad_depth: int = 6,
) -> tuple[FieldTree, RunReport]:
    """
    Run K stages from the base field and verify the result.

    Stage ν maps Σ^{r_ν}(λ_ν) into Σ^{r_{ν+1}}(λ_{ν+1}) with accuracy ε_ν.
    Stage bounds are recorded rather than raised, so the report lists every
    failure; precondition failures abort before any stage runs.
    """
    seed = config.DEFAULT_SEED if seed is None else seed
    tree = FieldTree(base, Omega)
    if base.A.shape != (s.m, s.n):
        raise PreconditionException(f"Base gradient has shape {base.A.shape}, scenario needs {(s.m, s.n)}")
    r1, lambda1 = compactness_fit(s, base_values(base, Omega, seed=seed))
    schedule = make_schedule(delta, lambda1, r1, s.r0, K)
    logger.info(
        f"Construction on {s.name}: K = {K}, δ = {delta}, λ = {[round(v, 4) for v in schedule.lambdas]}, "
        f"r = {[round(v, 4) for v in schedule.radii]}"
    )

    rows: list[BoundRow] = []
    rng = np.random.default_rng(seed)
    divergence = field_divergence(tree, Omega.sample(rng, 16), step=1e-6 * Omega.diameter)
    rows.append(BoundRow.check("base_divergence", float(np.max(np.abs(divergence))), 1e-8, "<=", "sampled"))

    stages: list[StageReport] = []
    graph = [graph_l1(s, tree, Omega, mc_samples, seed)]
    cubes_by_stage: dict[int, list[FieldNode]] = {}
    persistence: list[PersistenceRow] = []
    diameter = sigma_one_diameter(s, seed=seed)
    drift = 0.0

    if K > 0:
        taus = _step_tolerances(s, tree, Omega, schedule, seed)
    for nu in range(1, K + 1):
        lam, mu = schedule.lambdas[nu - 1], schedule.lambdas[nu]
        r, s_rad = schedule.radii[nu - 1], schedule.radii[nu]
        eps = schedule.eps_at(nu)
        previous = tree
        result: StageResult
        if nu == 1:
            result = apply_stage(s, tree, Omega, lam, mu, r, s_rad, eps, grid, nu, strict=False, tau=taus[0], seed=seed)
        else:
            result = run_stage_on_leaves(s, tree, lam, mu, r, s_rad, eps, nu, strict=False, tau=taus[nu - 1], seed=seed)
            for level, nodes in cubes_by_stage.items():
                cubes_by_stage[level] = [result.renamed.get(id(node), node) for node in nodes]
        tree = result.tree
        cubes_by_stage[nu] = [cube.node for cube in result.cubes]
        stages.append(result.report)

        increment = _increment(result.cubes, result.params.tau)
        bound = diameter * (2.0 * schedule.eps_at(nu - 1) + eps + (mu - lam)) * Omega.volume
        rows.append(BoundRow.check(f"increment_l1_{nu}", increment, bound, "<=", "analytic"))
        sampled, half_width = l1_distance(tree, previous, Omega, mc_samples, seed + nu)
        rows.append(
            BoundRow.check(
                f"increment_l1_{nu}_sampled", sampled, increment + half_width, "<=", "mc", half_width=half_width
            )
        )
        drift += max(cube.node.sup_phi_bound for cube in result.cubes)

        current = graph_l1(s, tree, Omega, mc_samples, seed + nu)
        bound = current.C_hat * ((1.0 - mu) + eps) * Omega.volume
        rows.append(
            BoundRow.check(
                f"graph_l1_{nu}", current.value, bound + current.half_width, "<=", "mc",
                half_width=current.half_width, detail=f"C_hat = {current.C_hat:.6g}",
            )
        )
        rows.append(
            BoundRow.check(
                f"graph_decrease_{nu}", current.value, graph[-1].value, "<", "mc", half_width=current.half_width
            )
        )
        graph.append(current)
        persistence.extend(_persistence_rows(s, schedule, cubes_by_stage, nu, seed + nu))

    rows.append(BoundRow.check("linf_drift", drift, 0.5 * delta, "<", "analytic"))
    # same points as the last graph residual
    sampled_drift = sup_drift(tree, Omega, mc_samples, seed + K)
    rows.append(BoundRow.check("linf_drift_sampled", sampled_drift, 0.5 * delta, "<", "sampled"))
    rows.append(BoundRow.check("boundary", boundary_check(tree, Omega, seed=seed), 1e-12, "<=", "sampled"))
    rows.append(lipschitz_report(s, tree, Omega, mc_samples, slack=delta, seed=seed))
    weak = weak_residuals(s, tree, Omega, quad_depth=quad_depth, seed=seed)
    rows.append(BoundRow.check("weak_divergence", weak.divergence, 1e-4, "<", "sampled"))
    rows.append(BoundRow.check("weak_solution", weak.solution, weak.solution_bound, "<=", "sampled"))

    wildness = None
    if K > 0:
        gaps = set_gaps(s, schedule.radii[0], schedule.lambdas[0], schedule.lambdas[1], schedule.radii[1], seed=seed)
        radius = max(stages[0].cubes, key=lambda cube: max(cube.radii)).radii
        finest = min(min(cube.radii) for cube in stages[-1].cubes)
        wildness = wildness_probe(tree, Omega, probes, seed, gaps.d0_raw, float(max(radius)), finest)

    report = RunReport(
        scenario=s.name,
        K=K,
        delta=delta,
        seed=seed,
        lambdas=list(schedule.lambdas),
        radii=list(schedule.radii),
        eps=list(schedule.eps),
        stages=stages,
        rows=rows,
        graph_l1=[entry.value for entry in graph],
        persistence=persistence,
        wildness=wildness,
    )
    status = "passed" if report.passed else f"failed: {', '.join(report.failures())}"
    logger.info(f"Construction {status}")
    return tree, report


def _increment(cubes: tuple[StageCube, ...], slack: float) -> float:
    return float(sum(cube.multiplicity * l1_deviation(cube.node, cube.value, slack) for cube in cubes))
