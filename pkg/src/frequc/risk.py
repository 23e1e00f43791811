"""Wind-sufficiency chance constraints under a Wasserstein ambiguity set.

Every strategy reduces the chance constraint to the scalar rule

    P_w + R_w <= mu - c_p * sigma

and differs only in how ``c_p`` is chosen.
"""

import logging
from dataclasses import dataclass

from scipy.stats import norm

from .errors import ConfigError, DomainError

log = logging.getLogger(__name__)

STRATEGIES = ("gaussian", "wasserstein_cvar", "fixed")


@dataclass(frozen=True)
class WassersteinBall:
    """Type-1 Wasserstein ball of radius ``radius`` (MW) around N(mu, sigma^2)."""

    mu: float
    sigma: float
    radius: float = 0.0
    epsilon: float = 0.1

    def __post_init__(self):
        if self.radius < 0:
            raise DomainError("Wasserstein radius must be non-negative")
        if self.sigma < 0:
            raise DomainError("sigma must be non-negative")
        _check_epsilon(self.epsilon)

    def coefficient(self, strategy="gaussian", fixed=None):
        return risk_coefficient(self.epsilon, self.radius, self.sigma, strategy, fixed)

    def threshold(self, strategy="gaussian", fixed=None):
        return drcc_threshold(self.mu, self.sigma, self.coefficient(strategy, fixed))


def _check_epsilon(eps):
    if not 0 < eps <= 0.5:
        raise DomainError(f"risk level must lie in (0, 0.5], got {eps}")


def risk_coefficient(epsilon, radius, sigma, strategy="gaussian", fixed=None):
    """Standardized quantile multiplier ``c_p``.

    ``gaussian`` is the exact chance constraint for the nominal distribution
    (radius ignored).  ``wasserstein_cvar`` replaces the quantile with the
    nominal CVaR, ``phi(z)/eps``, and adds the worst-case mean shift
    ``radius/eps`` that a type-1 Wasserstein ball can produce in the
    conditional tail; it is a sufficient (conservative) coefficient.
    ``fixed`` passes ``fixed`` through unchanged.
    """
    _check_epsilon(epsilon)
    if radius < 0:
        raise DomainError("Wasserstein radius must be non-negative")
    if strategy == "gaussian":
        return float(norm.isf(epsilon))
    if strategy == "wasserstein_cvar":
        z = norm.isf(epsilon)
        cvar = float(norm.pdf(z) / epsilon)
        if radius == 0:
            return cvar
        if not sigma > 0:
            raise DomainError("wasserstein_cvar with a positive radius needs sigma > 0")
        return cvar + radius / (epsilon * sigma)
    if strategy == "fixed":
        if fixed is None:
            raise ConfigError("strategy 'fixed' needs an explicit coefficient")
        return float(fixed)
    raise ConfigError(f"unknown DRCC strategy {strategy!r}; choose from {STRATEGIES}")


def drcc_threshold(mu, sigma, cp):
    """Right-hand side ``mu - cp*sigma``, floored at zero."""
    if mu < 0:
        raise DomainError("forecast mean must be non-negative")
    thr = mu - cp * sigma
    if thr < 0:
        log.warning("DRCC threshold %.6g MW clipped to 0 (mu=%.6g, sigma=%.6g, c_p=%.6g)", thr, mu, sigma, cp)
        return 0.0
    return thr


def policy_coefficient(policy, sigma):
    """``c_p`` from a :class:`~frequc.grid.FrequencyPolicy`'s DRCC settings."""
    return risk_coefficient(policy.drcc_epsilon, policy.drcc_radius, sigma,
                            policy.drcc_strategy, policy.drcc_cp_fixed)
