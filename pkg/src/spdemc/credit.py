"""Loss functional, tranche notional and spread for basket credit derivatives.

The basket loss is read off the surviving density as L = (1-R)(1 - h sum v_j);
a tranche [a, d] carries outstanding notional P(L) = max(d-L,0) - max(a-L,0).
The protection leg discounts the notional decrements across payment dates, and
the running spread is the ratio of that leg to the discounted notional annuity.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .fdcore import SolverState

__all__ = [
    "TrancheSpec",
    "PaymentSchedule",
    "loss_from_state",
    "tranche_notional",
    "protection_leg",
    "tranche_spread",
]

#: Standard tranche partition used in the pricing experiments.
STANDARD_TRANCHES = ((0.0, 0.03), (0.03, 0.06), (0.06, 0.09),
                     (0.09, 0.12), (0.12, 0.22), (0.22, 1.0))


@dataclass(frozen=True)
class TrancheSpec:
    """Loss layer [attach, detach) with recovery fraction on defaulted notional."""

    attach: float
    detach: float
    recovery: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.attach < self.detach <= 1.0:
            raise ValueError(f"need 0 <= attach < detach <= 1, "
                             f"got [{self.attach}, {self.detach}]")
        if not 0.0 <= self.recovery <= 1.0:
            raise ValueError("recovery must lie in [0, 1]")

    @property
    def width(self):
        return self.detach - self.attach


@dataclass(frozen=True)
class PaymentSchedule:
    """Spread payment dates T_1..T_n with accrual interval delta and rate r."""

    dates: tuple
    delta: float = 0.25
    r: float = 0.0

    def __post_init__(self):
        dates = tuple(float(t) for t in self.dates)
        object.__setattr__(self, "dates", dates)
        if len(dates) == 0:
            raise ValueError("schedule needs at least one payment date")
        if any(b <= a for a, b in zip((0.0,) + dates, dates)):
            raise ValueError("payment dates must be positive and strictly increasing")

    @classmethod
    def quarterly(cls, maturity, delta=0.25, r=0.0):
        n = int(round(maturity / delta))
        if abs(n * delta - maturity) > 1e-9:
            raise ValueError("maturity must be a whole number of accrual periods")
        return cls(dates=tuple(delta * i for i in range(1, n + 1)), delta=delta, r=r)

    @property
    def discounts(self):
        return np.exp(-self.r * np.asarray(self.dates))


def loss_from_state(state, grid, recovery):
    """Basket loss implied by the surviving density: (1-R)(1 - h sum v_j).

    Clamped to [0, 1-R]; Monte Carlo and discretisation noise can push the
    discrete mass marginally past 1.
    """
    values = state.values if isinstance(state, SolverState) else np.asarray(state)
    mass = grid.h * np.sum(values, axis=-1)
    return np.clip((1.0 - recovery) * (1.0 - mass), 0.0, 1.0 - recovery)


def tranche_notional(loss, tranche):
    """Outstanding notional max(d-L,0) - max(a-L,0); 1-Lipschitz, in [0, d-a]."""
    loss_arr = np.asarray(loss, dtype=float)
    if np.any(loss_arr < 0.0) or np.any(loss_arr > 1.0):
        raise ValueError("loss must lie in [0, 1]")
    out = np.maximum(tranche.detach - loss_arr, 0.0) \
        - np.maximum(tranche.attach - loss_arr, 0.0)
    return float(out) if out.ndim == 0 else out


def protection_leg(losses, schedule, tranche):
    """Discounted expected notional decrements along one loss path.

    Args:
        losses: loss at T_0 = 0, T_1, ..., T_n (length n+1); the leading entry
            anchors the telescoping sum.  Trailing axes may batch paths with
            dates on the last axis.

    Returns:
        sum_i exp(-r T_i) [P(L_{T_{i-1}}) - P(L_{T_i})], the per-path payoff.
    """
    losses = np.asarray(losses, dtype=float)
    n = len(schedule.dates)
    if losses.shape[-1] != n + 1:
        raise ValueError(f"expected {n + 1} losses (T_0..T_n), got {losses.shape[-1]}")
    if np.any(np.diff(losses, axis=-1) < -1e-12):
        warnings.warn("loss path is not non-decreasing", stacklevel=2)
    notionals = tranche_notional(losses, tranche)
    decrements = notionals[..., :-1] - notionals[..., 1:]
    out = np.sum(schedule.discounts * decrements, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def tranche_spread(expected_notionals, schedule):
    """Annualised running spread from per-date expected outstanding notionals.

    Args:
        expected_notionals: E[P(L_{T_i})] for i = 0..n (T_0 = 0 first).

    Returns:
        (sum_i e^{-r T_i} (E[P_{i-1}] - E[P_i])) / (delta sum_i e^{-r T_i} E[P_i]),
        quoted as a fraction of notional per year.
    """
    en = np.asarray(expected_notionals, dtype=float)
    n = len(schedule.dates)
    if en.shape != (n + 1,):
        raise ValueError(f"expected {n + 1} notionals (T_0..T_n), got {en.shape}")
    disc = schedule.discounts
    annuity = schedule.delta * float(np.sum(disc * en[1:]))
    if annuity <= 0.0:
        raise ValueError("tranche wiped out at all payment dates: spread undefined")
    numerator = float(np.sum(disc * (en[:-1] - en[1:])))
    return numerator / annuity
