"""BPR link performance function and its integrals."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ValidationError
from .network import Network

POWER = 4


@dataclass(frozen=True, eq=False)
class BprModel:
    """Separable cost ``c(X) = c0 * (1 + (X / kappa)**4)`` per link.

    A multiplier ``b`` on the power term, as in ``c0 * (1 + b (X / kappa)**4)``,
    is the same function with capacity ``kappa * b**(-1/4)``; see
    :meth:`from_network`.
    """

    free_flow_cost: np.ndarray
    capacity: np.ndarray

    @classmethod
    def from_network(cls, network: Network, coefficient: float = 1.0) -> "BprModel":
        if not coefficient > 0:
            raise ValidationError("BPR coefficient must be positive")
        return cls(network.free_flow_cost, network.capacity * coefficient ** (-1.0 / POWER))

    def _flows(self, X):
        X = np.asarray(X, dtype=float)
        if np.any(X < 0):
            raise ValidationError("link flows must be non-negative")
        return X

    def _excess(self, c, tol=0.0):
        c = np.asarray(c, dtype=float)
        rel = (c - self.free_flow_cost) / self.free_flow_cost
        if np.any(rel < -tol):
            raise DomainError("link cost below free-flow cost")
        return np.maximum(rel, 0.0)

    def cost(self, X) -> np.ndarray:
        X = self._flows(X)
        return self.free_flow_cost * (1.0 + (X / self.capacity) ** POWER)

    def inverse_cost(self, c) -> np.ndarray:
        return self.capacity * self._excess(c) ** (1.0 / POWER)

    def cost_integral(self, X) -> float:
        """Sum over links of the integral of c from 0 to X."""
        X = self._flows(X)
        return float(np.sum(self.free_flow_cost * (X + X ** (POWER + 1) / ((POWER + 1) * self.capacity ** POWER))))

    def conjugate_integral(self, c) -> float:
        """Sum over links of the integral of the inverse cost from c0 to c."""
        rel = self._excess(c)
        k = POWER / (POWER + 1.0)
        return float(np.sum(k * self.capacity * self.free_flow_cost * rel ** (1.0 + 1.0 / POWER)))
