"""Link and variance functions for the marginal mean model."""
from __future__ import annotations

import numpy as np
from scipy.special import expit

from .core import DomainError, NumericError

MU_CLAMP = 1e-10


def _check(eta):
    eta = np.asarray(eta, dtype=float)
    if not np.all(np.isfinite(eta)):
        raise NumericError("non-finite linear predictor")
    return eta


class Family:
    """Base class. Subclasses supply the inverse link and variance with derivatives.

    The scale parameter is fixed at 1; it cancels in the QIF objective.
    """

    name = ""

    def mu(self, eta):
        raise NotImplementedError

    def mu_dot(self, eta):
        raise NotImplementedError

    def mu_ddot(self, eta):
        raise NotImplementedError

    def variance(self, mu):
        raise NotImplementedError

    def variance_dot(self, mu):
        """dV/dmu."""
        raise NotImplementedError

    def link(self, mu):
        raise NotImplementedError

    def saturated(self, mu):
        """True when every fitted mean sits on a boundary of the mean space."""
        return False

    def __repr__(self):
        return f"{type(self).__name__}()"


class Gaussian(Family):
    name = "gaussian"

    def mu(self, eta):
        return _check(eta).copy()

    def mu_dot(self, eta):
        return np.ones_like(_check(eta))

    def mu_ddot(self, eta):
        return np.zeros_like(_check(eta))

    def variance(self, mu):
        return np.ones_like(np.asarray(mu, dtype=float))

    def variance_dot(self, mu):
        return np.zeros_like(np.asarray(mu, dtype=float))

    def link(self, mu):
        return np.asarray(mu, dtype=float)


class Binomial(Family):
    """Bernoulli responses with the logit link."""

    name = "binomial"

    def mu(self, eta):
        return expit(_check(eta))

    def mu_dot(self, eta):
        # expit(eta) expit(-eta) avoids cancellation in 1 - mu for large eta
        eta = _check(eta)
        return expit(eta) * expit(-eta)

    def mu_ddot(self, eta):
        eta = _check(eta)
        m, q = expit(eta), expit(-eta)
        return m * q * (q - m)

    def variance(self, mu):
        # clamped so A_i^{-1/2} stays finite for degenerate fitted probabilities
        m = np.clip(np.asarray(mu, dtype=float), MU_CLAMP, 1.0 - MU_CLAMP)
        return m * (1.0 - m)

    def variance_dot(self, mu):
        mu = np.asarray(mu, dtype=float)
        inside = (mu > MU_CLAMP) & (mu < 1.0 - MU_CLAMP)
        return np.where(inside, 1.0 - 2.0 * mu, 0.0)

    def saturated(self, mu):
        # all scores vanish together there, and Q_n degenerates to 0/0
        mu = np.asarray(mu, dtype=float)
        return bool(np.all((mu <= MU_CLAMP) | (mu >= 1.0 - MU_CLAMP)))

    def link(self, mu):
        m = np.clip(np.asarray(mu, dtype=float), MU_CLAMP, 1.0 - MU_CLAMP)
        return np.log(m / (1.0 - m))


_FAMILIES = {"gaussian": Gaussian, "binomial": Binomial}


def get_family(name) -> Family:
    if isinstance(name, Family):
        return name
    try:
        return _FAMILIES[name]()
    except KeyError:
        raise DomainError(f"unknown family {name!r}; choose from {sorted(_FAMILIES)}") from None
