"""Multilevel Monte Carlo driver over coupled path-functional samplers.

The estimator telescopes E[P_L] = E[P_0] + sum_l E[P_l - P_{l-1}], where each
correction sample evaluates fine and coarse discretisations on the same
Brownian path.  Sample counts follow the variance-optimal allocation
N_l ~ sqrt(V_l/C_l), targeting an eps^2/2 + eps^2/2 split of the mean-square
error between estimator variance and squared bias.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .paths import BrownianPath, SeedSpec, coarsen_draws, generate_fine_path, \
    coarsen_path

__all__ = [
    "LevelStats",
    "MlmcConfig",
    "MlmcResult",
    "MlmcConvergenceError",
    "ComplexityRegime",
    "level_sample",
    "optimal_allocation",
    "complexity_regime",
    "run_mlmc",
    "fit_rates",
    "PathFunctionalEstimator",
]


@dataclass
class LevelStats:
    """Running sums for one level's correction samples."""

    level: int
    n_samples: int = 0
    sum_y: float = 0.0
    sum_y2: float = 0.0
    cost_units: float = 0.0
    wall_time: float = 0.0
    aux_sum: np.ndarray | None = None

    @property
    def mean(self):
        return self.sum_y / self.n_samples if self.n_samples else math.nan

    @property
    def variance(self):
        """Unbiased sample variance; defined only for n >= 2."""
        if self.n_samples < 2:
            return math.nan
        n = self.n_samples
        var = (self.sum_y2 - n * self.mean**2) / (n - 1)
        return max(var, 0.0)

    @property
    def cost_per_sample(self):
        return self.cost_units / self.n_samples if self.n_samples else math.nan

    @property
    def aux_mean(self):
        return None if self.aux_sum is None else self.aux_sum / self.n_samples

    def add(self, y, cost, aux=None, wall=0.0):
        y = np.asarray(y, dtype=float)
        self.n_samples += y.size
        self.sum_y += float(y.sum())
        self.sum_y2 += float((y * y).sum())
        self.cost_units += float(cost)
        self.wall_time += wall
        if aux is not None:
            col = np.asarray(aux, dtype=float).sum(axis=0)
            self.aux_sum = col if self.aux_sum is None else self.aux_sum + col


@dataclass
class MlmcConfig:
    """Driver knobs: warm-up size, level range, bias rate, batching, seed."""

    seed: int = 0
    warmup: int = 100
    L_min: int = 2
    L_max: int = 8
    alpha: float = 2.0
    batch_size: int = 65536

    def __post_init__(self):
        if self.warmup < 2:
            raise ValueError("warm-up needs at least 2 samples per level")
        if not 0 <= self.L_min <= self.L_max:
            raise ValueError("need 0 <= L_min <= L_max")


@dataclass
class MlmcResult:
    """Combined estimate with per-level statistics and fitted decay rates."""

    estimate: float
    levels: list
    epsilon: float
    total_cost: float
    alpha: float
    beta: float
    gamma: float
    bias_estimate: float
    estimator_variance: float
    aux_estimate: np.ndarray | None = None

    @property
    def n_levels(self):
        return len(self.levels)


class MlmcConvergenceError(RuntimeError):
    """Bias failed to converge before L_max; carries the partial level stats."""

    def __init__(self, message, levels):
        super().__init__(message)
        self.levels = levels


def level_sample(sampler, level, seed):
    """One correction sample: P_0 at level 0, else P_l - P_{l-1} on a shared path.

    The coarse discretisation re-uses the fine Brownian path through block sums
    of its increments (ratio n_steps(l)/n_steps(l-1), 4 on the standard ladder).
    """
    n_fine = sampler.n_steps(level)
    path = generate_fine_path(seed, n_fine, sampler.timestep(level))
    if level == 0:
        return float(sampler.payoff(0, path))
    ratio = n_fine // sampler.n_steps(level - 1)
    coarse = coarsen_path(path, ratio)
    return float(sampler.payoff(level, path) - sampler.payoff(level - 1, coarse))


def optimal_allocation(variances, costs, epsilon, n_min=100):
    """Variance-optimal sample counts N_l = ceil(2 eps^-2 sqrt(V/C) sum sqrt(VC)).

    Guarantees sum(V_l/N_l) <= eps^2/2.  Levels with zero variance fall back to
    the warm-up floor n_min.
    """
    v = np.asarray(variances, dtype=float)
    c = np.asarray(costs, dtype=float)
    if v.size == 0:
        raise ValueError("allocation needs at least one level")
    if np.any(v < 0) or np.any(c <= 0) or not epsilon > 0:
        raise ValueError("need variances >= 0, costs > 0 and epsilon > 0")
    total = np.sum(np.sqrt(v * c))
    n = np.ceil(2.0 * epsilon**-2 * np.sqrt(v / c) * total)
    return np.maximum(n, n_min).astype(int)


@dataclass(frozen=True)
class ComplexityRegime:
    """Cost regime of the multilevel theorem for given decay rates."""

    tag: str
    cost_exponent: float
    log_squared: bool = False


def complexity_regime(alpha, beta, gamma):
    """Classify the eps-cost of the multilevel estimator.

    beta > gamma: O(eps^-2); beta = gamma: O(eps^-2 log^2 eps);
    beta < gamma: O(eps^-(2 + (gamma-beta)/alpha)).  Requires alpha >= gamma/2.
    """
    if min(alpha, beta, gamma) <= 0:
        raise ValueError("rates must be positive")
    if alpha < 0.5 * gamma:
        raise ValueError(f"alpha={alpha} < gamma/2={0.5 * gamma}: outside the "
                         "theorem hypothesis")
    if beta > gamma:
        return ComplexityRegime(tag="coarse-dominated", cost_exponent=-2.0)
    if beta == gamma:
        return ComplexityRegime(tag="balanced", cost_exponent=-2.0, log_squared=True)
    return ComplexityRegime(tag="fine-dominated",
                            cost_exponent=-2.0 - (gamma - beta) / alpha)


def fit_rates(levels):
    """Least-squares decay rates over levels >= 1: mean ~ 2^-alpha l,
    variance ~ 2^-beta l, cost ~ 2^gamma l.  Returns nan where not estimable."""
    usable = [s for s in levels if s.level >= 1 and s.n_samples >= 2]

    def slope(xs, ys):
        if len(xs) < 2:
            return math.nan
        return float(np.polyfit(xs, ys, 1)[0])

    mean_pts = [(s.level, math.log2(abs(s.mean))) for s in usable if s.mean != 0.0]
    var_pts = [(s.level, math.log2(s.variance)) for s in usable if s.variance > 0.0]
    cost_pts = [(s.level, math.log2(s.cost_per_sample)) for s in usable
                if s.cost_per_sample > 0.0]
    alpha = -slope(*zip(*mean_pts)) if len(mean_pts) >= 2 else math.nan
    beta = -slope(*zip(*var_pts)) if len(var_pts) >= 2 else math.nan
    gamma = slope(*zip(*cost_pts)) if len(cost_pts) >= 2 else math.nan
    return alpha, beta, gamma


class PathFunctionalEstimator:
    """Adapts a payoff-of-one-path sampler to the coupled level-sample contract.

    The sampler provides n_steps(l), timestep(l) and payoff(l, path); an
    optional payoff_batch(l, z_matrix) -> (values, cost, aux) enables vectorised
    sampling.  Without reported costs, a sample is charged its step count
    relative to level 0.
    """

    def __init__(self, sampler):
        self.sampler = sampler

    def _eval(self, level, z):
        sampler = self.sampler
        if hasattr(sampler, "payoff_batch"):
            return sampler.payoff_batch(level, z)
        k = sampler.timestep(level)
        values = np.empty(z.shape[0])
        for i in range(z.shape[0]):
            path_i = BrownianPath(level=level, n_steps=z.shape[1], z=z[i], k=k)
            values[i] = sampler.payoff(level, path_i)
        cost = z.shape[0] * z.shape[1] / self.sampler.n_steps(0)
        return values, cost, None

    def sample_batch(self, level, seeds):
        """Evaluate coupled correction samples for the given seeds.

        Returns (values, cost_units, aux) with aux either None or one row per
        sample (vector payoffs accumulated alongside the scalar target).
        """
        n_fine = self.sampler.n_steps(level)
        k_fine = self.sampler.timestep(level)
        z = np.empty((len(seeds), n_fine))
        for i, seed in enumerate(seeds):
            z[i] = seed.generator().standard_normal(n_fine)
        fine, cost_f, aux_f = self._eval(level, z)
        if level == 0:
            return np.asarray(fine, dtype=float), cost_f, aux_f
        ratio = n_fine // self.sampler.n_steps(level - 1)
        zc = coarsen_draws(z, ratio)
        coarse, cost_c, aux_c = self._eval(level - 1, zc)
        y = np.asarray(fine, dtype=float) - np.asarray(coarse, dtype=float)
        aux = None
        if aux_f is not None and aux_c is not None:
            aux = np.asarray(aux_f) - np.asarray(aux_c)
        return y, cost_f + cost_c, aux


def _sample_level(estimator, stats, level, start, count, config):
    """Draw `count` new samples with indices start..start+count-1, batched."""
    done = 0
    while done < count:
        m = min(config.batch_size, count - done)
        seeds = [SeedSpec(config.seed, level, start + done + i) for i in range(m)]
        t0 = time.perf_counter()
        y, cost, aux = estimator.sample_batch(level, seeds)
        stats.add(y, cost, aux, wall=time.perf_counter() - t0)
        done += m


def _bias_proxy(levels, alpha):
    """Rate-extrapolated remaining bias max(|Y_L|, |Y_{L-1}|/2^a) / (2^a - 1)."""
    last = abs(levels[-1].mean)
    prev = abs(levels[-2].mean) / 2.0**alpha if len(levels) >= 2 else 0.0
    return max(last, prev) / (2.0**alpha - 1.0)


def _effective_alpha(levels, config):
    """Fixed rate, unless consecutive level means oscillate upward; then fall
    back to a regression estimate floored at 0.5."""
    means = [abs(s.mean) for s in levels if s.level >= 1]
    if len(means) >= 3 and any(means[i] > means[i - 1] for i in range(1, len(means))) \
            and all(m > 0 for m in means):
        fitted, _, _ = fit_rates(levels)
        if not math.isnan(fitted):
            return max(0.5, fitted)
    return config.alpha


def run_mlmc(estimator, epsilon, config=None):
    """Adaptive multilevel run targeting mean-square error epsilon^2.

    Starts with levels 0..L_min, re-solves the optimal allocation until the
    estimator variance budget eps^2/2 is met, then extends the level ladder
    until the extrapolated bias is below eps/sqrt(2).

    Raises:
        MlmcConvergenceError: bias still above target at L_max.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    config = config or MlmcConfig()
    levels = []

    def add_level(l):
        stats = LevelStats(level=l)
        levels.append(stats)
        _sample_level(estimator, stats, l, 0, config.warmup, config)

    for l in range(config.L_min + 1):
        add_level(l)

    while True:
        # Variance stage: top up until the current estimates satisfy the target.
        for _ in range(100):
            v = [s.variance for s in levels]
            c = [s.cost_per_sample for s in levels]
            alloc = optimal_allocation(v, c, epsilon, n_min=config.warmup)
            extra = [int(a) - s.n_samples for a, s in zip(alloc, levels)]
            if all(e <= 0 for e in extra):
                break
            for s, e in zip(levels, extra):
                if e > 0:
                    _sample_level(estimator, s, s.level, s.n_samples, e, config)
        else:
            raise MlmcConvergenceError("allocation failed to stabilise", levels)

        alpha_eff = _effective_alpha(levels, config)
        bias = _bias_proxy(levels, alpha_eff)
        if bias <= epsilon / math.sqrt(2.0):
            break
        if levels[-1].level >= config.L_max:
            raise MlmcConvergenceError(
                f"bias {bias:.3e} > {epsilon / math.sqrt(2.0):.3e} at "
                f"L_max={config.L_max}; level means "
                f"{[s.mean for s in levels]}", levels)
        add_level(levels[-1].level + 1)

    estimate = sum(s.mean for s in levels)
    est_var = sum(s.variance / s.n_samples for s in levels)
    alpha, beta, gamma = fit_rates(levels)
    aux = None
    if all(s.aux_mean is not None for s in levels):
        aux = sum(s.aux_mean for s in levels)
    return MlmcResult(estimate=estimate, levels=levels, epsilon=epsilon,
                      total_cost=sum(s.cost_units for s in levels),
                      alpha=alpha, beta=beta, gamma=gamma,
                      bias_estimate=_bias_proxy(levels, _effective_alpha(levels, config)),
                      estimator_variance=est_var, aux_estimate=aux)
