"""Pruning-error bound calculators and their Monte Carlo validation.

The closed forms: with observation-noise deviation

    sigma(e_t) = beta * (e_star - e_t) + gamma

and pruning threshold

    delta(|O|) = zeta * exp(|O| - |O|_max),

a single pruning decision made from estimates at epoch ``e_t`` errs with
probability at most (sigma/delta)^2 (a Chebyshev step), and a full run that
starts from K alive operations errs with probability at most

    (2 - 1/K) * (sigma/delta)^2  <  2 * (sigma/delta)^2.

The factor uses the partial sum of inverse squares, which telescopes below
2 - 1/K.  Bounds of 1 or more are reported as-is and flagged vacuous, never
clamped, so it stays visible where the theory is informative.

The Monte Carlo harness runs many independent seeded searches on a
synthetic landscape with a known unique optimum and counts a trial as an
error when any prune event removes a component of that optimum.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterator, Optional, Sequence, TextIO

from .engine import SearchConfig, run_search
from .oracles import NoiseParams, SyntheticEvaluator, SyntheticLandscape
from .rng import derive_seed, substream
from .space import Architecture, SearchSpaceSpec, enumerate_architectures

# Two-sided 95% normal quantile, to full double precision.
_Z_95 = 1.959963984540054

THEORY_CSV_COLUMNS = (
    "e_t",
    "K",
    "sigma",
    "delta",
    "bound_exact",
    "bound_simplified",
    "empirical_rate",
    "ci_low",
    "ci_high",
)


class TheoryError(ValueError):
    """Invalid bound parameters or validation setup."""


@dataclass(frozen=True)
class BoundParams:
    """Inputs of the error-bound calculators.

    Attributes:
        noise: deviation schedule of the performance estimates.
        zeta: threshold scale (> 0).
        ops_count: alive operations per edge when the bound is evaluated.
        ops_count_max: the initial (maximal) alive count.
    """

    noise: NoiseParams
    zeta: float
    ops_count: int
    ops_count_max: int

    def __post_init__(self) -> None:
        if not self.zeta > 0.0:
            raise TheoryError(f"zeta must be > 0, got {self.zeta}")
        if self.ops_count < 2:
            raise TheoryError(f"ops_count must be >= 2, got {self.ops_count}")
        if self.ops_count > self.ops_count_max:
            raise TheoryError(
                f"ops_count {self.ops_count} exceeds ops_count_max {self.ops_count_max}"
            )


def sigma(params: BoundParams, e_t: int) -> float:
    """Estimation-noise deviation at epoch ``e_t`` (in [1, e_star])."""
    return params.noise.sigma(e_t)


def delta_threshold(params: BoundParams) -> float:
    """Error-magnitude threshold: zeta * exp(ops_count - ops_count_max)."""
    return params.zeta * math.exp(params.ops_count - params.ops_count_max)


def single_round_bound(params: BoundParams, e_t: int) -> float:
    """Chebyshev bound (sigma/delta)^2 on one pruning decision.

    Values >= 1 are returned untouched; they carry no information but show
    where the noise overwhelms the threshold.
    """
    ratio = sigma(params, e_t) / delta_threshold(params)
    return ratio * ratio


def total_error_bound(params: BoundParams, e_t: int, num_alive: int) -> tuple[float, float]:
    """Whole-run error bound for a search over ``num_alive`` operations.

    Returns:
        (exact, simplified) = ((2 - 1/K) * (sigma/delta)^2, 2 * (sigma/delta)^2);
        the exact form is always strictly below the simplified one.
    """
    if num_alive < 1:
        raise TheoryError(f"num_alive must be >= 1, got {num_alive}")
    step = single_round_bound(params, e_t)
    return (2.0 - 1.0 / num_alive) * step, 2.0 * step


def partial_sum_inverse_squares(limit: int) -> float:
    """Sum of 1/n^2 for n = 1..limit.

    The sum stays strictly below 2 - 1/limit for every limit >= 2, which is
    the step that turns per-round Chebyshev bounds into the total bound.
    """
    if limit < 1:
        raise TheoryError(f"limit must be >= 1, got {limit}")
    return math.fsum(1.0 / (n * n) for n in range(1, limit + 1))


def partial_sums_inverse_squares(limit: int) -> Iterator[tuple[int, float]]:
    """Yield (n, sum of 1/k^2 for k=1..n) for n = 1..limit, incrementally."""
    if limit < 1:
        raise TheoryError(f"limit must be >= 1, got {limit}")
    total = 0.0
    for n in range(1, limit + 1):
        total += 1.0 / (n * n)
        yield n, total


def wilson_interval(successes: int, trials: int, z: float = _Z_95) -> tuple[float, float]:
    """Wilson score confidence interval for a binomial proportion."""
    if trials < 1:
        raise TheoryError(f"trials must be >= 1, got {trials}")
    if not 0 <= successes <= trials:
        raise TheoryError(f"successes {successes} outside [0, {trials}]")
    p = successes / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    center = (p + z2 / (2.0 * trials)) / denom
    half = (z / denom) * math.sqrt(p * (1.0 - p) / trials + z2 / (4.0 * trials * trials))
    return max(0.0, center - half), min(1.0, center + half)


def brute_force_optimum(
    landscape: SyntheticLandscape, cap: int = 1_000_000
) -> Architecture:
    """Exhaustive argmax of the landscape's true quality.

    Raises:
        TheoryError: if the maximum is not unique (ties make "the optimum"
            ill-defined and the error count meaningless).
        SpaceError: if the space exceeds ``cap``.
    """
    best: Optional[Architecture] = None
    best_q = -math.inf
    tied = False
    for arch in enumerate_architectures(landscape.spec, cap):
        q = landscape.quality(arch)
        if q > best_q:
            best, best_q, tied = arch, q, False
        elif q == best_q:
            tied = True
    assert best is not None
    if tied:
        raise TheoryError(
            f"landscape optimum is not unique (quality {best_q} attained more than once)"
        )
    return best


@dataclass(frozen=True)
class MonteCarloResult:
    """Aggregated outcome of repeated seeded searches.

    ``per_round_mistakes[r]`` counts trials whose round-(r+1) prune removed a
    component of the optimum; ``per_round_e_t[r]`` is the (capped) epoch
    count at which that round's estimates were made.
    """

    trials: int
    errors: int
    empirical_rate: float
    ci_low: float
    ci_high: float
    per_round_mistakes: tuple[int, ...]
    per_round_e_t: tuple[int, ...]


def _mc_trial(payload: tuple) -> tuple[bool, tuple[bool, ...]]:
    (spec, landscape, config, seed, index, clamp, initial_epoch, optimal_ops) = payload
    evaluator = SyntheticEvaluator(
        landscape,
        seed=derive_seed(seed, "mc", index, "oracle"),
        clamp=clamp,
        initial_epoch=initial_epoch,
    )
    result = run_search(spec, evaluator, config, derive_seed(seed, "mc", index, "engine"))
    rounds = result.rounds
    flags = [False] * rounds
    for event in result.prune_log:
        slot = spec.flat_edges.index(event.edge)
        if event.pruned_op.index == optimal_ops[slot]:
            flags[event.round_index - 1] = True
    return any(flags), tuple(flags)


def monte_carlo_error_rate(
    spec: SearchSpaceSpec,
    landscape: SyntheticLandscape,
    config: SearchConfig,
    trials: int,
    seed: int,
    jobs: int = 1,
    clamp: bool = True,
    initial_epoch: int = 0,
    enumeration_cap: int = 1_000_000,
) -> MonteCarloResult:
    """Empirical pruning-error rate over independent seeded searches.

    A trial errs when any of its prune events removes an operation belonging
    to the landscape's unique brute-force optimum.  Results are deterministic
    for a given (seed, trials) regardless of worker count: every trial draws
    from its own derived streams and aggregation is order-independent.

    Raises:
        TheoryError: non-separable landscape or non-unique optimum.
    """
    if trials < 1:
        raise TheoryError(f"trials must be >= 1, got {trials}")
    if not landscape.is_separable():
        raise TheoryError("bound validation needs a separable landscape")
    optimum = brute_force_optimum(landscape, cap=enumeration_cap)
    trial_config = dataclasses.replace(config, jobs=1)
    payloads = [
        (spec, landscape, trial_config, seed, index, clamp, initial_epoch, optimum.ops)
        for index in range(trials)
    ]
    if jobs > 1:
        chunk = max(1, trials // (jobs * 4))
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_mc_trial, payloads, chunksize=chunk))
    else:
        outcomes = [_mc_trial(p) for p in payloads]

    rounds = spec.num_operations - 1
    errors = sum(1 for error, _ in outcomes if error)
    per_round = [0] * rounds
    for _, flags in outcomes:
        for r, flag in enumerate(flags):
            if flag:
                per_round[r] += 1
    ci_low, ci_high = wilson_interval(errors, trials)
    e_star = landscape.noise.e_star
    per_round_e_t = tuple(
        min(initial_epoch + (r + 1) * config.epochs_per_round, e_star)
        for r in range(rounds)
    )
    return MonteCarloResult(
        trials=trials,
        errors=errors,
        empirical_rate=errors / trials,
        ci_low=ci_low,
        ci_high=ci_high,
        per_round_mistakes=tuple(per_round),
        per_round_e_t=per_round_e_t,
    )


def measure_noise_deviation(
    landscape: SyntheticLandscape, e_t: int, draws: int, seed: int
) -> float:
    """Sample deviation of the oracle's observation noise at epoch ``e_t``.

    Draws one unclamped metric at exactly epoch ``e_t`` from ``draws``
    uniformly sampled architectures and returns the standard deviation of
    the residuals against the true qualities.  Comparing this against a
    bound's configured sigma(e_t) exposes a landscape/bound mismatch.
    """
    if draws < 2:
        raise TheoryError(f"draws must be >= 2, got {draws}")
    spec = landscape.spec
    rng = substream(seed, "probe", "arch")
    residuals = []
    for index in range(draws):
        ops = tuple(int(rng.integers(spec.num_operations)) for _ in spec.flat_edges)
        arch = Architecture(ops=ops)
        # A fresh evaluator per draw keeps every observation at exactly
        # epoch e_t even when an architecture is sampled more than once.
        evaluator = SyntheticEvaluator(
            landscape, seed=derive_seed(seed, "probe", "noise", index), clamp=False,
            initial_epoch=e_t - 1,
        )
        residuals.append(evaluator.train_epoch(arch) - landscape.quality(arch))
    mean = sum(residuals) / len(residuals)
    var = sum((r - mean) ** 2 for r in residuals) / (len(residuals) - 1)
    return math.sqrt(var)


@dataclass(frozen=True)
class TheoryRow:
    """One CSV row: bound values, optionally paired with empirical rates."""

    e_t: int
    num_alive: int
    sigma: float
    delta: float
    bound_exact: float
    bound_simplified: float
    empirical_rate: Optional[float] = None
    ci_low: Optional[float] = None
    ci_high: Optional[float] = None

    @property
    def vacuous(self) -> bool:
        return self.bound_simplified >= 1.0


def bound_rows(params: BoundParams, e_t_values: Sequence[int], num_alive: int) -> list[TheoryRow]:
    """Closed-form bound rows over a range of epochs (no empirical columns)."""
    rows = []
    for e_t in e_t_values:
        exact, simplified = total_error_bound(params, e_t, num_alive)
        rows.append(
            TheoryRow(
                e_t=e_t,
                num_alive=num_alive,
                sigma=sigma(params, e_t),
                delta=delta_threshold(params),
                bound_exact=exact,
                bound_simplified=simplified,
            )
        )
    return rows


def write_theory_csv(rows: Sequence[TheoryRow], stream: TextIO) -> None:
    """Write rows in the fixed nine-column schema (floats via repr)."""
    writer = csv.writer(stream)
    writer.writerow(THEORY_CSV_COLUMNS)
    for row in rows:
        writer.writerow(
            [
                row.e_t,
                row.num_alive,
                repr(row.sigma),
                repr(row.delta),
                repr(row.bound_exact),
                repr(row.bound_simplified),
                "" if row.empirical_rate is None else repr(row.empirical_rate),
                "" if row.ci_low is None else repr(row.ci_low),
                "" if row.ci_high is None else repr(row.ci_high),
            ]
        )


@dataclass(frozen=True)
class GridCellResult:
    """One validation cell: its noise point, bound row, and trial stats."""

    beta: float
    gamma: float
    row: TheoryRow
    monte_carlo: MonteCarloResult
    measured_deviation: float
    configured_deviation: float

    @property
    def deviation_mismatch(self) -> bool:
        reference = max(self.configured_deviation, 1e-12)
        return abs(self.measured_deviation - self.configured_deviation) / reference > 0.25

    @property
    def violates_bound(self) -> bool:
        return (not self.row.vacuous) and self.monte_carlo.ci_low > self.row.bound_simplified


@dataclass(frozen=True)
class GridValidation:
    """Outcome of a full validation grid."""

    cells: tuple[GridCellResult, ...]

    @property
    def rows(self) -> list[TheoryRow]:
        return [cell.row for cell in self.cells]

    @property
    def violations(self) -> list[GridCellResult]:
        return [cell for cell in self.cells if cell.violates_bound]

    @property
    def mismatches(self) -> list[GridCellResult]:
        return [cell for cell in self.cells if cell.deviation_mismatch]


def auto_zeta(landscape: SyntheticLandscape, factor: float = 4.0) -> float:
    """Threshold scale calibrated to the landscape: factor x min utility gap."""
    return factor * landscape.min_utility_gap()


def validate_bound_grid(
    landscape_for: Callable[[NoiseParams], SyntheticLandscape],
    betas: Sequence[float],
    gammas: Sequence[float],
    e_star: int,
    config: SearchConfig,
    trials: int,
    seed: int,
    zeta: Optional[float] = None,
    e_t: Optional[int] = None,
    bound_noise_override: Optional[tuple[float, float]] = None,
    jobs: int = 1,
    clamp: bool = True,
    initial_epoch: int = 0,
    probe_draws: int = 2000,
) -> GridValidation:
    """Run the Monte Carlo validation over a (beta, gamma) grid.

    Args:
        landscape_for: callable (noise: NoiseParams) -> SyntheticLandscape;
            each cell evaluates the same utilities under its own noise.
        betas, gammas: grid axes of the landscape noise.
        e_star: convergence epoch shared by all cells.
        config: search configuration used for every trial.
        trials: Monte Carlo trials per cell.
        seed: root seed (each cell and trial derives its own streams).
        zeta: threshold scale; None calibrates 4x the minimum utility gap.
        e_t: epoch at which the bound is evaluated; None uses the epoch of
            the first pruning decision (initial_epoch + epochs per round).
        bound_noise_override: optional (beta, gamma) used for the *bound*
            side only, for probing landscape/bound mismatches.
        jobs: concurrent trial workers.
        clamp: clamp oracle metrics into [0, 1] (the live-training behavior).
        initial_epoch: warm-start epoch count for every architecture.
        probe_draws: sample size of the deviation probe.

    Returns:
        Per-cell bound rows, empirical rates, and diagnostic flags.
    """
    if e_t is None:
        e_t = initial_epoch + config.epochs_per_round
    cells = []
    for beta in betas:
        for gamma in gammas:
            noise = NoiseParams(beta=beta, gamma=gamma, e_star=e_star)
            landscape = landscape_for(noise)
            if landscape.noise != noise:
                raise TheoryError("landscape_for must install the requested noise")
            cell_zeta = auto_zeta(landscape) if zeta is None else zeta
            k0 = landscape.spec.num_operations
            if bound_noise_override is None:
                bound_noise = noise
            else:
                bound_noise = NoiseParams(
                    beta=bound_noise_override[0],
                    gamma=bound_noise_override[1],
                    e_star=e_star,
                )
            params = BoundParams(
                noise=bound_noise, zeta=cell_zeta, ops_count=k0, ops_count_max=k0
            )
            exact, simplified = total_error_bound(params, e_t, k0)
            mc = monte_carlo_error_rate(
                landscape.spec,
                landscape,
                config,
                trials,
                derive_seed(seed, "grid", repr(beta), repr(gamma)),
                jobs=jobs,
                clamp=clamp,
                initial_epoch=initial_epoch,
            )
            row = TheoryRow(
                e_t=e_t,
                num_alive=k0,
                sigma=sigma(params, e_t),
                delta=delta_threshold(params),
                bound_exact=exact,
                bound_simplified=simplified,
                empirical_rate=mc.empirical_rate,
                ci_low=mc.ci_low,
                ci_high=mc.ci_high,
            )
            measured = measure_noise_deviation(
                landscape, e_t, probe_draws, derive_seed(seed, "probe", repr(beta), repr(gamma))
            )
            cells.append(
                GridCellResult(
                    beta=beta,
                    gamma=gamma,
                    row=row,
                    monte_carlo=mc,
                    measured_deviation=measured,
                    configured_deviation=sigma(params, e_t),
                )
            )
    return GridValidation(cells=tuple(cells))
