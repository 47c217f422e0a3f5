"""Joint iterates, the saddle-problem interface and the gradient operator.

A point of the minimax problem ``min_x max_y f(x, y)`` is stored as the
stacked vector ``z = (x, y)`` together with the block size ``m`` of ``x``.
The operator ``phi(z) = (grad_x f, -grad_y f)`` turns the saddle problem into
a strongly monotone root-finding problem whose unique zero is the saddle.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .errors import CapabilityError, InputError


def _as_vector(values, name):
    arr = np.array(values, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise InputError(f"{name} must be a 1-d vector, got shape {arr.shape}")
    return arr


class JointPoint:
    """Immutable concatenated iterate ``z = (x, y)`` in R^(m+n)."""

    __slots__ = ("_z", "_m")

    def __init__(self, x, y):
        x = _as_vector(x, "x")
        y = _as_vector(y, "y")
        if x.size < 1 or y.size < 1:
            raise InputError("both blocks need at least one coordinate")
        z = np.concatenate([x, y])
        if not np.all(np.isfinite(z)):
            raise InputError("joint point has non-finite entries")
        z.flags.writeable = False
        self._z = z
        self._m = x.size

    @classmethod
    def from_stacked(cls, z, m):
        z = _as_vector(z, "z")
        if not 1 <= m < z.size:
            raise InputError(f"cannot split a vector of length {z.size} at m={m}")
        return cls(z[:m], z[m:])

    @classmethod
    def zeros(cls, m, n):
        return cls(np.zeros(m), np.zeros(n))

    @property
    def m(self):
        return self._m

    @property
    def n(self):
        return self._z.size - self._m

    @property
    def dim(self):
        return self._z.size

    @property
    def x(self):
        return self._z[: self._m]

    @property
    def y(self):
        return self._z[self._m :]

    @property
    def stacked(self):
        """Read-only view of the stacked vector."""
        return self._z

    def same_shape(self, other):
        return self._m == other.m and self.dim == other.dim

    def to_list(self):
        return self._z.tolist()

    def __eq__(self, other):
        if not isinstance(other, JointPoint):
            return NotImplemented
        return self.same_shape(other) and np.array_equal(self._z, other._z)

    def __hash__(self):
        return hash((self._m, self._z.tobytes()))

    def __repr__(self):
        return f"JointPoint(x={self.x.tolist()}, y={self.y.tolist()})"


def _check_pair(z, zhat):
    if not z.same_shape(zhat):
        raise InputError(
            f"dimension mismatch: (m={z.m}, n={z.n}) vs (m={zhat.m}, n={zhat.n})"
        )


def squared_distance(z, zhat):
    """``||x - xhat||^2 + ||y - yhat||^2``."""
    _check_pair(z, zhat)
    d = z.stacked - zhat.stacked
    return float(np.dot(d, d))


@dataclass(frozen=True)
class RegularityConstants:
    """Block strong-convexity/smoothness constants of a saddle function.

    ``mu`` and ``L`` aggregate the blocks as min and max respectively.  The
    cross-Lipschitz constants may be zero for uncoupled problems.
    """

    mu_x: float
    mu_y: float
    L_x: float
    L_y: float
    L_xy: float
    L_yx: float

    def __post_init__(self):
        for name in ("mu_x", "mu_y", "L_x", "L_y", "L_xy", "L_yx"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise InputError(f"{name} must be finite, got {value}")
            object.__setattr__(self, name, float(value))
        if min(self.mu_x, self.mu_y, self.L_x, self.L_y) <= 0:
            raise InputError("mu_x, mu_y, L_x, L_y must be positive")
        if min(self.L_xy, self.L_yx) < 0:
            raise InputError("cross-Lipschitz constants must be nonnegative")
        if self.mu_x > self.L_x or self.mu_y > self.L_y:
            raise InputError("strong-convexity constant exceeds smoothness constant")

    @classmethod
    def uniform(cls, mu, L):
        """All block constants equal: ``mu`` for curvature, ``L`` elsewhere."""
        return cls(mu_x=mu, mu_y=mu, L_x=L, L_y=L, L_xy=L, L_yx=L)

    @property
    def mu(self):
        return min(self.mu_x, self.mu_y)

    @property
    def L(self):
        return max(self.L_x, self.L_y, self.L_xy, self.L_yx)

    @property
    def kappa(self):
        return self.L / self.mu

    def to_dict(self):
        return {
            "mu_x": self.mu_x,
            "mu_y": self.mu_y,
            "L_x": self.L_x,
            "L_y": self.L_y,
            "L_xy": self.L_xy,
            "L_yx": self.L_yx,
        }

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(**{k: float(data[k]) for k in ("mu_x", "mu_y", "L_x", "L_y", "L_xy", "L_yx")})
        except KeyError as exc:
            raise InputError(f"missing regularity constant {exc}") from None


class SaddleProblem(ABC):
    """A smooth strongly-convex/strongly-concave function ``f(x, y)``.

    Gradients accept arrays with arbitrary leading batch axes (the last axis
    holds the block coordinates), which lets the solvers advance many
    replications at once.  Implementations hold no mutable state.
    """

    m: int
    n: int
    constants: RegularityConstants

    has_closed_form_value = True

    @property
    def dim(self):
        return self.m + self.n

    @property
    def has_known_saddle(self):
        return self.saddle_point() is not None

    def saddle_point(self):
        """The saddle point as a :class:`JointPoint`, or ``None`` if unknown."""
        return None

    def require_saddle(self):
        saddle = self.saddle_point()
        if saddle is None:
            raise CapabilityError(f"{type(self).__name__} has no known saddle point")
        return saddle

    @abstractmethod
    def value(self, x, y):
        ...

    @abstractmethod
    def grad_x(self, x, y):
        ...

    @abstractmethod
    def grad_y(self, x, y):
        ...

    def operator(self, z):
        """``phi`` on raw stacked arrays of shape ``(..., m + n)``."""
        x = z[..., : self.m]
        y = z[..., self.m :]
        return np.concatenate([self.grad_x(x, y), -self.grad_y(x, y)], axis=-1)


def check_dimensions(problem, z):
    if z.m != problem.m or z.n != problem.n:
        raise InputError(
            f"point has (m={z.m}, n={z.n}) but problem expects (m={problem.m}, n={problem.n})"
        )


def phi(problem, z):
    """Stacked operator ``(grad_x f(x, y), -grad_y f(x, y))`` at ``z``."""
    check_dimensions(problem, z)
    return problem.operator(z.stacked)
