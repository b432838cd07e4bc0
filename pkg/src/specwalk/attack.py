"""Hard-label attack engine: boundary cloud generation and joint walking.

The pipeline never sees a score.  A boundary cloud is manufactured by
fusing the source's spectrum with a differently-labeled target's spectrum,
projected onto the decision boundary by bisection, then iteratively tightened
toward the source: Monte Carlo sign probes estimate a direction, a step is
taken, and a fresh bisection drops the stepped cloud back onto the boundary.
When coordinate steps stop paying off, the same machinery runs in spectrum
space, whose large smooth jumps can leave local optima that trap pointwise
moves.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .geometry import (
    PointCloud,
    chamfer_distance,
    combined_distance,
    hausdorff_distance,
    l2_norm_distance,
    max_pointwise_deviation,
    normalize_unit_ball,
)
from .oracle import BudgetExhaustedError, HardLabelOracle, indicator
from .spectral import SpectralBasis, Spectrum, cloud_basis, gft, igft

_ZERO_GRAD_TOL = 1e-300


class AttackError(RuntimeError):
    """Base class for attack-level failures."""


class SourceMisclassifiedError(AttackError):
    """The oracle already mislabels the source; there is nothing to attack."""


class AttackInfeasibleError(AttackError):
    """No fusion weight produced an adversarial candidate for any target."""


@dataclass(frozen=True)
class AttackConfig:
    """Attack hyperparameters.

    Defaults reproduce the reference operating point: 10-NN graphs, fusion
    weights (0.85, 0.2) decayed by 0.05 on failure, ranking weights
    gamma1=2.0 / gamma2=0.5, 50 Monte Carlo probes, 200 walking rounds, and
    a spectrum step of 5.0.  ``epsilon`` bounds the per-point displacement a
    candidate may have from the source (unit-ball units); ``mc_sigma_scale``
    scales the probe sigma, which is the current boundary-to-source distance
    spread over all 3n coordinates.
    """

    k_neighbors: int = 10
    band_cutoff: int = 32
    alpha_low: float = 0.85
    alpha_high: float = 0.2
    alpha_step: float = 0.05
    alpha_floor: float = 0.0
    gamma1: float = 2.0
    gamma2: float = 0.5
    epsilon: float = 0.16
    mc_samples: int = 50
    mc_sigma_scale: float = 1.0
    rounds: int = 200
    xi_spe: float = 5.0
    binary_search_tol: float = 1e-3
    walk_retry_limit: int = 10
    stall_rel_tol: float = 1e-6
    target_count: int = 10
    rng_seed: int = 0

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be at least 1")
        if self.band_cutoff < 1:
            raise ValueError("band_cutoff must be at least 1")
        for name in ("alpha_low", "alpha_high"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.alpha_step <= 0:
            raise ValueError("alpha_step must be positive")
        if not 0.0 <= self.alpha_floor <= min(self.alpha_low, self.alpha_high):
            raise ValueError("alpha_floor must lie in [0, min(alpha_low, alpha_high)]")
        if self.gamma1 < 0 or self.gamma2 < 0:
            raise ValueError("gamma weights must be non-negative")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.mc_samples < 1:
            raise ValueError("mc_samples must be at least 1")
        if self.mc_sigma_scale <= 0:
            raise ValueError("mc_sigma_scale must be positive")
        if self.rounds < 1:
            raise ValueError("rounds must be at least 1")
        if self.xi_spe <= 0:
            raise ValueError("xi_spe must be positive")
        if not 0.0 < self.binary_search_tol < 1.0:
            raise ValueError("binary_search_tol must lie strictly between 0 and 1")
        if self.walk_retry_limit < 0:
            raise ValueError("walk_retry_limit must be non-negative")
        if not 0.0 <= self.stall_rel_tol < 1.0:
            raise ValueError("stall_rel_tol must lie in [0, 1)")
        if self.target_count < 1:
            raise ValueError("target_count must be at least 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Candidate:
    """An adversarial fusion product and the weights that produced it."""

    cloud: PointCloud
    alpha_low: float
    alpha_high: float
    target_label: int


@dataclass(frozen=True)
class ProjectionResult:
    cloud: PointCloud
    beta: float
    queries: int


@dataclass(frozen=True)
class WalkRecord:
    """One trace row; stalled coordinate rounds add a second row for the
    spectrum attempt under the same iteration index."""

    iteration: int
    walk_kind: str
    distance: float
    accepted: bool
    queries: int


@dataclass(frozen=True)
class WalkState:
    boundary: PointCloud
    source: PointCloud
    y_true: int
    t: int
    distance: float
    rng: np.random.Generator


@dataclass(frozen=True)
class WalkOutcome:
    cloud: PointCloud
    accepted: bool
    distance: float
    queries: int
    retries: int


@dataclass(frozen=True)
class AttackResult:
    adversarial_cloud: PointCloud
    success: bool
    adv_label: int
    metrics: dict[str, float]
    initial_metrics: dict[str, float]
    queries_used: int
    query_breakdown: dict[str, int]
    trace: list[WalkRecord]
    rounds_executed: int
    truncated: bool
    epsilon_violated: bool
    selected_target_label: int
    selected_alphas: tuple[float, float]


def cloud_metrics(cloud: PointCloud, source: PointCloud, cfg: AttackConfig) -> dict[str, float]:
    """Perceptibility metrics of a cloud against the source."""
    return {
        "chamfer": chamfer_distance(cloud, source),
        "hausdorff": hausdorff_distance(cloud, source),
        "l2_norm": l2_norm_distance(cloud, source),
        "max_deviation": max_pointwise_deviation(cloud, source),
        "combined": combined_distance(cloud, source, cfg.gamma1, cfg.gamma2),
    }


def spectrum_fuse(source: PointCloud, target: PointCloud,
                  basis_source: SpectralBasis, basis_target: SpectralBasis,
                  alpha_low: float, alpha_high: float, cutoff: int) -> PointCloud:
    """Blend two clouds band-wise in the spectral domain.

    Low band: alpha_low * source + (1 - alpha_low) * target coefficients;
    high band the same with alpha_high.  Coefficients are aligned by
    frequency rank and the fused spectrum is synthesized with the source
    basis, so alpha_low = alpha_high = 1 reproduces the source exactly.
    """
    if source.n != target.n:
        raise ValueError("source and target must have equal point counts")
    for name, alpha in (("alpha_low", alpha_low), ("alpha_high", alpha_high)):
        if not 0.0 <= alpha <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1], got {alpha}")
    if not 0 < cutoff < source.n:
        raise ValueError(f"cutoff must lie strictly inside (0, {source.n}), got {cutoff}")
    spec_s = gft(source, basis_source)
    spec_t = gft(target, basis_target)
    fused = spec_s.coeffs.copy()
    fused[:cutoff] = alpha_low * spec_s.coeffs[:cutoff] + (1.0 - alpha_low) * spec_t.coeffs[:cutoff]
    fused[cutoff:] = alpha_high * spec_s.coeffs[cutoff:] + (1.0 - alpha_high) * spec_t.coeffs[cutoff:]
    return igft(Spectrum(coeffs=fused, basis_id=basis_source.basis_id), basis_source)


def generate_candidates(source: PointCloud, targets: list[tuple[PointCloud, int]],
                        oracle: HardLabelOracle, y_true: int, cfg: AttackConfig,
                        basis_source: SpectralBasis | None = None,
                        ) -> tuple[list[Candidate], int]:
    """Produce one adversarial fusion candidate per feasible target.

    For each target the fusion starts at (alpha_low, alpha_high) and both
    weights decay by alpha_step (clamped at alpha_floor) until the fusion
    flips the oracle's label; the first adversarial cloud per target is
    kept.  A target whose schedule bottoms out without flipping is skipped.

    Returns the candidate list and the number of oracle queries spent.

    Raises:
        AttackInfeasibleError: no target produced an adversarial candidate.
    """
    if not targets:
        raise ValueError("need at least one target")
    if basis_source is None:
        basis_source = cloud_basis(source, cfg.k_neighbors)
    candidates: list[Candidate] = []
    queries = 0
    for target, label in targets:
        basis_target = cloud_basis(target, cfg.k_neighbors)
        a_low, a_high = cfg.alpha_low, cfg.alpha_high
        while True:
            fused = spectrum_fuse(source, target, basis_source, basis_target,
                                  a_low, a_high, cfg.band_cutoff)
            queries += 1
            if indicator(oracle, fused, y_true) == 1:
                candidates.append(Candidate(fused, a_low, a_high, label))
                break
            if a_low <= cfg.alpha_floor and a_high <= cfg.alpha_floor:
                break
            a_low = max(cfg.alpha_floor, a_low - cfg.alpha_step)
            a_high = max(cfg.alpha_floor, a_high - cfg.alpha_step)
    if not candidates:
        raise AttackInfeasibleError(
            f"no adversarial fusion found across {len(targets)} targets"
        )
    return candidates, queries


def select_best_candidate(candidates: list[Candidate], source: PointCloud,
                          cfg: AttackConfig) -> tuple[Candidate, bool]:
    """Pick the candidate minimizing the combined distance to the source.

    Candidates whose per-point deviation exceeds cfg.epsilon are excluded;
    when every candidate violates the bound, the minimum-distance one is
    returned anyway with the second element False so callers can flag it.
    """
    if not candidates:
        raise ValueError("candidate list is empty")
    scored = [(combined_distance(c.cloud, source, cfg.gamma1, cfg.gamma2), i)
              for i, c in enumerate(candidates)]
    feasible = [(d, i) for d, i in scored
                if max_pointwise_deviation(candidates[i].cloud, source) <= cfg.epsilon]
    if feasible:
        _, idx = min(feasible)
        return candidates[idx], True
    _, idx = min(scored)
    return candidates[idx], False


def binary_search_projection(source: PointCloud, adversarial: PointCloud,
                             y_true: int, oracle: HardLabelOracle,
                             tol: float = 1e-3) -> ProjectionResult:
    """Bisect the segment between an adversarial cloud and the source.

    The blend beta * source + (1 - beta) * adversarial is adversarial at
    beta = 0 and benign at beta = 1 (caller-established preconditions; no
    queries are spent re-checking them).  Bisection maintains that invariant
    and stops once the bracket is narrower than tol, returning the
    adversarial end, so the result sits within tol of the boundary on the
    adversarial side.  Costs exactly ceil(log2(1 / tol)) queries.
    """
    if source.n != adversarial.n:
        raise ValueError("source and adversarial clouds must have equal point counts")
    if not 0.0 < tol < 1.0:
        raise ValueError("tol must lie strictly between 0 and 1")
    src, adv = source.points, adversarial.points
    lo, hi = 0.0, 1.0  # lo side adversarial, hi side benign
    queries = 0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        blend = PointCloud(mid * src + (1.0 - mid) * adv)
        queries += 1
        if indicator(oracle, blend, y_true) == 1:
            lo = mid
        else:
            hi = mid
    return ProjectionResult(cloud=PointCloud(lo * src + (1.0 - lo) * adv),
                            beta=lo, queries=queries)


def estimate_gradient_coordinate(boundary: PointCloud, y_true: int,
                                 oracle: HardLabelOracle, samples: int,
                                 sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Monte Carlo direction estimate from hard-label probes.

    Averages phi(boundary + v_i) * v_i over i.i.d. Gaussian perturbations
    v_i with per-coordinate standard deviation sigma.  The result points
    into the adversarial region; only its direction is meaningful.
    """
    if samples < 1:
        raise ValueError("samples must be at least 1")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    probes = rng.normal(0.0, sigma, size=(samples, boundary.n, 3))
    acc = np.zeros((boundary.n, 3))
    for i in range(samples):
        phi = indicator(oracle, PointCloud(boundary.points + probes[i]), y_true)
        acc += phi * probes[i]
    return acc / samples


def coordinate_step(boundary: PointCloud, grad: np.ndarray, source: PointCloud,
                    t: int) -> PointCloud:
    """Step along the normalized gradient with the decaying schedule
    xi = ||boundary - source||_2 / sqrt(t)."""
    if t < 1:
        raise ValueError("t must be at least 1")
    norm = float(np.linalg.norm(grad))
    if norm < _ZERO_GRAD_TOL:
        raise ValueError("gradient estimate is zero; nothing to step along")
    xi = l2_norm_distance(boundary, source) / np.sqrt(t)
    return PointCloud(boundary.points + xi * (grad / norm))


def estimate_gradient_spectrum(boundary: PointCloud, basis: SpectralBasis,
                               y_true: int, oracle: HardLabelOracle, samples: int,
                               sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Monte Carlo direction estimate with probes drawn in spectrum space.

    Each probe u_i perturbs the boundary's spectral coefficients; the probe
    cloud is the inverse transform of the perturbed spectrum.  The returned
    array lives in spectrum space (one row per frequency).
    """
    if samples < 1:
        raise ValueError("samples must be at least 1")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    base = gft(boundary, basis).coeffs
    probes = rng.normal(0.0, sigma, size=(samples, basis.n, 3))
    acc = np.zeros((basis.n, 3))
    for i in range(samples):
        probe_cloud = igft(Spectrum(coeffs=base + probes[i], basis_id=basis.basis_id), basis)
        phi = indicator(oracle, probe_cloud, y_true)
        acc += phi * probes[i]
    return acc / samples


def spectrum_step(boundary: PointCloud, spec_grad: np.ndarray,
                  basis: SpectralBasis, xi: float) -> PointCloud:
    """Apply a fixed-size step along the normalized spectral gradient.

    The step adds xi * unit-gradient to the coefficients and inverse
    transforms; as the transform is linear this equals a coordinate-space
    displacement of the same Frobenius norm, deliberately large and smooth.
    """
    if xi <= 0:
        raise ValueError("xi must be positive")
    norm = float(np.linalg.norm(spec_grad))
    if norm < _ZERO_GRAD_TOL:
        raise ValueError("gradient estimate is zero; nothing to step along")
    coeffs = gft(boundary, basis).coeffs + xi * (spec_grad / norm)
    return igft(Spectrum(coeffs=coeffs, basis_id=basis.basis_id), basis)


def walk_iteration(state: WalkState, kind: str, oracle: HardLabelOracle,
                   cfg: AttackConfig) -> WalkOutcome:
    """One gradient-estimate / step / re-project cycle.

    Estimates a direction (coordinate or spectrum probes), steps, and checks
    the stepped cloud; a benign step halves the step size and retries up to
    cfg.walk_retry_limit times.  A surviving step is bisected back onto the
    boundary and accepted only when the combined distance improved by at
    least the relative stall tolerance; a rejected iteration returns the
    input boundary cloud unchanged.
    """
    if kind not in ("coordinate", "spectrum"):
        raise ValueError(f"unknown walk kind {kind!r}")
    boundary, source = state.boundary, state.source
    dist_to_src = l2_norm_distance(boundary, source)
    if dist_to_src < 1e-300:
        return WalkOutcome(boundary, False, state.distance, 0, 0)
    sigma = cfg.mc_sigma_scale * dist_to_src / (3.0 * boundary.n)
    queries = 0
    if kind == "coordinate":
        grad = estimate_gradient_coordinate(boundary, state.y_true, oracle,
                                            cfg.mc_samples, sigma, state.rng)
        queries += cfg.mc_samples
        norm = float(np.linalg.norm(grad))
        if norm < _ZERO_GRAD_TOL:
            return WalkOutcome(boundary, False, state.distance, queries, 0)
        direction = grad / norm
        xi = dist_to_src / np.sqrt(state.t)

        def step_at(step_size: float) -> PointCloud:
            return PointCloud(boundary.points + step_size * direction)
    else:
        basis = cloud_basis(boundary, cfg.k_neighbors)
        grad = estimate_gradient_spectrum(boundary, basis, state.y_true, oracle,
                                          cfg.mc_samples, sigma, state.rng)
        queries += cfg.mc_samples
        norm = float(np.linalg.norm(grad))
        if norm < _ZERO_GRAD_TOL:
            return WalkOutcome(boundary, False, state.distance, queries, 0)
        direction = grad / norm
        base_coeffs = gft(boundary, basis).coeffs
        xi = cfg.xi_spe

        def step_at(step_size: float) -> PointCloud:
            return igft(Spectrum(coeffs=base_coeffs + step_size * direction,
                                 basis_id=basis.basis_id), basis)

    stepped: PointCloud | None = None
    retries = 0
    while True:
        candidate = step_at(xi)
        queries += 1
        if indicator(oracle, candidate, state.y_true) == 1:
            stepped = candidate
            break
        if retries >= cfg.walk_retry_limit:
            break
        xi *= 0.5
        retries += 1
    if stepped is None:
        return WalkOutcome(boundary, False, state.distance, queries, retries)
    proj = binary_search_projection(source, stepped, state.y_true, oracle,
                                    cfg.binary_search_tol)
    queries += proj.queries
    new_dist = combined_distance(proj.cloud, source, cfg.gamma1, cfg.gamma2)
    if new_dist < state.distance * (1.0 - cfg.stall_rel_tol):
        return WalkOutcome(proj.cloud, True, new_dist, queries, retries)
    return WalkOutcome(boundary, False, state.distance, queries, retries)


def joint_walk(initial: PointCloud, source: PointCloud, y_true: int,
               oracle: HardLabelOracle, cfg: AttackConfig,
               rng: np.random.Generator,
               ) -> tuple[PointCloud, list[WalkRecord], bool, int]:
    """Alternate coordinate walks with spectrum walks on stalls.

    Every accepted coordinate result is appended to the kept list; a stalled
    round instead runs one spectrum iteration whose result, when accepted,
    replaces the working boundary in place without being appended (it enters
    the kept list through the next accepted coordinate round).  Returns the
    kept cloud with minimum combined distance, the trace, a flag set when
    the query budget ran out mid-walk, and the number of completed rounds.
    """
    d0 = combined_distance(initial, source, cfg.gamma1, cfg.gamma2)
    best: list[tuple[PointCloud, float]] = [(initial, d0)]
    current, d_cur = initial, d0
    trace: list[WalkRecord] = []
    truncated = False
    rounds = 0
    try:
        for t in range(1, cfg.rounds + 1):
            state = WalkState(current, source, y_true, t, d_cur, rng)
            out = walk_iteration(state, "coordinate", oracle, cfg)
            if out.accepted:
                current, d_cur = out.cloud, out.distance
                best.append((current, d_cur))
                trace.append(WalkRecord(t, "coordinate", d_cur, True, out.queries))
            else:
                trace.append(WalkRecord(t, "coordinate", d_cur, False, out.queries))
                sstate = WalkState(current, source, y_true, t, d_cur, rng)
                sout = walk_iteration(sstate, "spectrum", oracle, cfg)
                trace.append(WalkRecord(t, "spectrum",
                                        sout.distance if sout.accepted else d_cur,
                                        sout.accepted, sout.queries))
                if sout.accepted:
                    current, d_cur = sout.cloud, sout.distance
            rounds = t
    except BudgetExhaustedError:
        truncated = True
    idx = int(np.argmin([d for _, d in best]))
    return best[idx][0], trace, truncated, rounds


def run_attack(source: PointCloud, y_true: int,
               targets: list[tuple[PointCloud, int]],
               oracle: HardLabelOracle, cfg: AttackConfig) -> AttackResult:
    """Full attack pipeline against one source cloud.

    Normalizes inputs to the unit ball, verifies the source label (one
    query), fuses spectra against the targets until an adversarial candidate
    exists, projects it onto the boundary, runs the joint walk, and
    re-verifies the returned cloud (one query).  Query accounting comes from
    the oracle's ledger, broken down by stage.

    Raises:
        SourceMisclassifiedError: the oracle mislabels the source already.
        AttackInfeasibleError: candidate generation found nothing.
        BudgetExhaustedError: the budget died before any boundary cloud
            existed; later exhaustion instead returns a truncated result.
    """
    if not 0 <= y_true < oracle.class_count:
        raise ValueError(f"y_true {y_true} outside [0, {oracle.class_count})")
    src = normalize_unit_ball(source)
    n = src.n
    if not 0 < cfg.band_cutoff < n:
        raise ValueError(f"band_cutoff {cfg.band_cutoff} must lie strictly inside (0, {n})")
    if not 1 <= cfg.k_neighbors < n:
        raise ValueError(f"k_neighbors {cfg.k_neighbors} must lie in [1, {n})")
    if not targets:
        raise ValueError("need at least one target")
    norm_targets: list[tuple[PointCloud, int]] = []
    for cloud, label in targets:
        label = int(label)
        if label == y_true:
            raise ValueError("target label equals the true label")
        if not 0 <= label < oracle.class_count:
            raise ValueError(f"target label {label} outside [0, {oracle.class_count})")
        if cloud.n != n:
            raise ValueError("target point count differs from source")
        norm_targets.append((normalize_unit_ball(cloud), label))

    rng = np.random.default_rng(cfg.rng_seed)
    ledger = oracle.ledger
    start_total = ledger.total_queries
    breakdown: dict[str, int] = {}

    observed = oracle.classify(src)
    breakdown["source_check"] = ledger.total_queries - start_total
    if observed != y_true:
        raise SourceMisclassifiedError(
            f"oracle labels the source {observed}, expected {y_true}"
        )

    basis_source = cloud_basis(src, cfg.k_neighbors)
    mark = ledger.total_queries
    candidates, _ = generate_candidates(src, norm_targets, oracle, y_true, cfg,
                                        basis_source=basis_source)
    breakdown["fusion"] = ledger.total_queries - mark

    chosen, epsilon_ok = select_best_candidate(candidates, src, cfg)

    mark = ledger.total_queries
    projection = binary_search_projection(src, chosen.cloud, y_true, oracle,
                                          cfg.binary_search_tol)
    breakdown["initial_projection"] = ledger.total_queries - mark
    initial_metrics = cloud_metrics(projection.cloud, src, cfg)

    mark = ledger.total_queries
    final_cloud, trace, truncated, rounds = joint_walk(
        projection.cloud, src, y_true, oracle, cfg, rng
    )
    breakdown["walk"] = ledger.total_queries - mark

    adv_label = -1
    success = False
    mark = ledger.total_queries
    if not truncated:
        try:
            adv_label = oracle.classify(final_cloud)
            success = adv_label != y_true
        except BudgetExhaustedError:
            truncated = True
    breakdown["final_verify"] = ledger.total_queries - mark

    return AttackResult(
        adversarial_cloud=final_cloud,
        success=success,
        adv_label=adv_label,
        metrics=cloud_metrics(final_cloud, src, cfg),
        initial_metrics=initial_metrics,
        queries_used=ledger.total_queries - start_total,
        query_breakdown=breakdown,
        trace=trace,
        rounds_executed=rounds,
        truncated=truncated,
        epsilon_violated=not epsilon_ok,
        selected_target_label=chosen.target_label,
        selected_alphas=(chosen.alpha_low, chosen.alpha_high),
    )
