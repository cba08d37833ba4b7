"""Direct simulation of the exchangeable N-firm distance-to-default system.

Each firm follows X_{n+1} = X_n + mu k + sqrt((1-rho) k) zeta_n
+ sqrt(rho k) Z_n with idiosyncratic draws zeta and the market draws Z shared
across the basket.  A firm defaults the first time X <= 0 is observed, either
at every timestep or only at scheduled monitoring dates; the basket loss is
the absorbed fraction.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import mlmc
from .fdcore import steps_for_dates
from .paths import BrownianPath, coarsen_draws

__all__ = ["BasketSpec", "LossPath", "simulate_basket", "sde_timestep_mlmc",
           "SdeBasketEstimator"]

_IDIO_STREAM = 1


@dataclass(frozen=True)
class BasketSpec:
    """Exchangeable basket: n_firms starting at the common value x0 > 0."""

    n_firms: int
    x0: float
    params: object

    def __post_init__(self):
        if self.n_firms < 1:
            raise ValueError("need at least one firm")
        if not self.x0 > 0:
            raise ValueError("initial distance-to-default must be positive")


@dataclass
class LossPath:
    """Absorbed fraction at each observation date; non-decreasing in time."""

    times: np.ndarray
    losses: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.losses = np.asarray(self.losses, dtype=float)


def simulate_basket(spec, k, common_path, seed=None, idiosyncratic=None,
                    monitoring_dates=None, observation_dates=None):
    """Evolve the basket along one market path and record the loss fraction.

    Args:
        common_path: BrownianPath of shared market draws (length sets the horizon).
        seed: SeedSpec whose sub-stream supplies idiosyncratic draws; ignored
            when `idiosyncratic` (an (n_steps, n_firms) matrix) is given.
        monitoring_dates: default checked only at these dates; None checks at
            every timestep.
        observation_dates: dates at which the loss is recorded (default: the
            monitoring dates, or just the terminal time).

    Returns:
        LossPath over the observation dates.
    """
    n_steps = common_path.n_steps
    horizon = n_steps * k
    if abs(common_path.k - k) > 1e-12 * max(k, common_path.k):
        raise ValueError("market path timestep does not match k")
    if idiosyncratic is None:
        if seed is None:
            raise ValueError("need either a seed or an idiosyncratic draw matrix")
        idiosyncratic = seed.generator(_IDIO_STREAM).standard_normal(
            (n_steps, spec.n_firms))
    elif idiosyncratic.shape != (n_steps, spec.n_firms):
        raise ValueError(f"idiosyncratic draws must have shape "
                         f"({n_steps}, {spec.n_firms})")

    check_all = monitoring_dates is None
    monitor_steps = set()
    if not check_all:
        monitor_steps = set(steps_for_dates(monitoring_dates, k, n_steps))
        monitor_steps.discard(0)
    if observation_dates is None:
        observation_dates = tuple(monitoring_dates) if monitoring_dates is not None \
            else (horizon,)
    observe_steps = steps_for_dates(observation_dates, k, n_steps)
    wanted = {s: i for i, s in enumerate(observe_steps)}

    params = spec.params
    drift = params.mu * k
    idio_scale = math.sqrt((1.0 - params.rho) * k)
    market = math.sqrt(params.rho * k) * common_path.z

    x = np.full(spec.n_firms, float(spec.x0))
    alive = np.ones(spec.n_firms, dtype=bool)
    losses = np.empty(len(observe_steps))
    if 0 in wanted:
        losses[wanted[0]] = 0.0
    for n in range(n_steps):
        x[alive] += drift + idio_scale * idiosyncratic[n, alive] + market[n]
        if check_all or (n + 1) in monitor_steps:
            defaulted = alive & (x <= 0.0)
            x[defaulted] = 0.0
            alive &= ~defaulted
        if (n + 1) in wanted:
            losses[wanted[n + 1]] = 1.0 - alive.mean()
    return LossPath(times=np.asarray(observation_dates, dtype=float), losses=losses)


class SdeBasketEstimator:
    """Coupled timestep-refinement samples of a basket loss functional.

    Levels halve the timestep (k_l = k0 / 2^l); the coarse member of a
    correction sample re-uses the fine market and idiosyncratic draws through
    block sums.  Costs are firm-steps relative to one level-0 basket.
    """

    def __init__(self, spec, payoff, k0, horizon, monitoring_dates=None,
                 observation_dates=None, time_ratio=2):
        self.spec = spec
        self.payoff = payoff
        self.k0 = k0
        self.horizon = horizon
        self.monitoring_dates = monitoring_dates
        self.observation_dates = observation_dates
        self.time_ratio = time_ratio
        self._n0 = int(round(horizon / k0))
        if abs(self._n0 * k0 - horizon) > 1e-9:
            raise ValueError("horizon must be a whole number of base timesteps")

    def n_steps(self, level):
        return self._n0 * self.time_ratio**level

    def timestep(self, level):
        return self.k0 / self.time_ratio**level

    def _one(self, level, z_market, idio, k):
        path = BrownianPath(level=level, n_steps=z_market.shape[0],
                            z=z_market, k=k)
        lp = simulate_basket(self.spec, k, path, idiosyncratic=idio,
                             monitoring_dates=self.monitoring_dates,
                             observation_dates=self.observation_dates)
        return self.payoff(lp)

    def sample_batch(self, level, seeds):
        n_fine = self.n_steps(level)
        k_fine = self.timestep(level)
        y = np.empty(len(seeds))
        cost = 0.0
        unit = self._n0 * self.spec.n_firms
        for i, seed in enumerate(seeds):
            z = seed.generator().standard_normal(n_fine)
            idio = seed.generator(_IDIO_STREAM).standard_normal(
                (n_fine, self.spec.n_firms))
            fine = self._one(level, z, idio, k_fine)
            if level == 0:
                y[i] = fine
                cost += n_fine * self.spec.n_firms / unit
                continue
            r = self.time_ratio
            zc = coarsen_draws(z, r)
            idio_c = coarsen_draws(idio.T, r).T
            coarse = self._one(level - 1, zc, idio_c, k_fine * r)
            y[i] = fine - coarse
            cost += (n_fine + n_fine // r) * self.spec.n_firms / unit
        return y, cost, None


def sde_timestep_mlmc(spec, payoff, epsilon, k0, horizon, monitoring_dates=None,
                      observation_dates=None, config=None):
    """Multilevel estimate of E[payoff(LossPath)] by refining the SDE timestep."""
    estimator = SdeBasketEstimator(spec, payoff, k0, horizon,
                                   monitoring_dates=monitoring_dates,
                                   observation_dates=observation_dates)
    return mlmc.run_mlmc(estimator, epsilon, config)
