"""Seeded noisy gradient oracles.

Random numbers come from numpy's Philox-4x64 bit generator, a counter-based
cipher keyed by ``(base_seed, replication_index)``.  Every replication owns an
independent key, so results do not depend on the order in which replications
are executed.

Variate ``i`` of a stream is built from raw 64-bit outputs ``2i`` and
``2i + 1``:

* Gaussian: Box-Muller cosine branch,
  ``sqrt(-2 log u1) * cos(2 pi u2)`` with ``u1`` in (0, 1] and ``u2`` in [0, 1);
* uniform: ``2 u1 - 1`` in [-1, 1) (the second word is discarded).

Raw words are turned into floats by keeping their top 53 bits.  Variates are
generated in fixed blocks of ``BLOCK`` so the values seen by a consumer do not
depend on how many it asks for at a time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import check_dimensions
from .errors import InputError

BLOCK = 4096
NOISE_KINDS = ("block_isotropic_gaussian", "per_coordinate_gaussian", "bounded_uniform")

_TWO_53 = 2.0**-53
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class NoiseModel:
    """Additive zero-mean gradient noise with per-block second moment tied to ``sigma``.

    ``block_isotropic_gaussian`` and ``bounded_uniform`` give each block an
    expected squared norm of exactly ``sigma**2``; ``per_coordinate_gaussian``
    uses variance ``sigma**2`` on every coordinate.
    """

    kind: str = "block_isotropic_gaussian"
    sigma: float = 0.0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise InputError(f"unknown noise kind {self.kind!r}; expected one of {NOISE_KINDS}")
        sigma = float(self.sigma)
        if not (sigma >= 0 and math.isfinite(sigma)):
            raise InputError(f"sigma must be a finite nonnegative number, got {self.sigma}")
        object.__setattr__(self, "sigma", sigma)

    @property
    def gaussian(self):
        return self.kind != "bounded_uniform"

    def block_scales(self, m, n):
        """Per-coordinate multipliers applied to unit variates (x block, y block)."""
        s = self.sigma
        if self.kind == "per_coordinate_gaussian":
            return s, s
        if self.kind == "block_isotropic_gaussian":
            return s / math.sqrt(m), s / math.sqrt(n)
        # uniform on [-c, c] has variance c^2 / 3
        return s * math.sqrt(3.0 / m), s * math.sqrt(3.0 / n)

    def coordinate_std(self, m, n):
        """Standard deviation of each noise coordinate, x block then y block."""
        sx, sy = self.block_scales(m, n)
        if self.kind == "bounded_uniform":
            sx, sy = sx / math.sqrt(3.0), sy / math.sqrt(3.0)
        return np.concatenate([np.full(m, sx), np.full(n, sy)])


class _VariateStream:
    """Sequential unit variates from one Philox key, generated block-wise."""

    def __init__(self, base_seed, index, gaussian):
        self._bitgen = np.random.Philox(key=[base_seed & _MASK64, index & _MASK64])
        self._gaussian = gaussian
        self._buffer = np.empty(0)
        self._pos = 0
        self.consumed = 0

    def _refill(self):
        raw = self._bitgen.random_raw(2 * BLOCK).reshape(BLOCK, 2)
        u1 = (raw[:, 0] >> np.uint64(11)).astype(np.float64)
        if self._gaussian:
            u2 = (raw[:, 1] >> np.uint64(11)).astype(np.float64) * _TWO_53
            radius = np.sqrt(-2.0 * np.log((u1 + 1.0) * _TWO_53))
            block = radius * np.cos(2.0 * np.pi * u2)
        else:
            block = 2.0 * (u1 * _TWO_53) - 1.0
        self._buffer = block
        self._pos = 0

    def take(self, count):
        out = np.empty(count)
        filled = 0
        while filled < count:
            if self._pos == self._buffer.size:
                self._refill()
            k = min(count - filled, self._buffer.size - self._pos)
            out[filled : filled + k] = self._buffer[self._pos : self._pos + k]
            self._pos += k
            filled += k
        self.consumed += count
        return out


class NoisyOracle:
    """Unbiased stochastic operator ``phi(z) + noise`` for a saddle problem.

    Each call draws ``m + n`` fresh variates: the first ``m`` perturb
    ``grad_x``, the remaining ``n`` perturb ``grad_y`` (and therefore enter the
    operator with a minus sign).  With ``sigma == 0`` no variates are drawn and
    the exact operator is returned.
    """

    def __init__(self, problem, noise=None, base_seed=0, replication_index=0):
        if replication_index < 0:
            raise InputError("replication_index must be nonnegative")
        self.problem = problem
        self.noise = noise if noise is not None else NoiseModel()
        self.base_seed = int(base_seed)
        self.replication_index = int(replication_index)
        self._stream = _VariateStream(self.base_seed, self.replication_index, self.noise.gaussian)
        sx, sy = self.noise.block_scales(problem.m, problem.n)
        # y noise is flipped because phi carries -grad_y
        self._scale = np.concatenate([np.full(problem.m, sx), np.full(problem.n, -sy)])

    @property
    def sigma(self):
        return self.noise.sigma

    @property
    def calls(self):
        """Number of noisy evaluations drawn so far."""
        return self._stream.consumed // self.problem.dim

    def next_noise(self, count):
        """Noise rows for the next ``count`` oracle calls, shape ``(count, m + n)``.

        Consumes the stream exactly as ``count`` calls to :meth:`sample_phi`
        would.  Returns zeros without drawing when ``sigma == 0``.
        """
        d = self.problem.dim
        if self.noise.sigma == 0:
            return np.zeros((count, d))
        return self._stream.take(count * d).reshape(count, d) * self._scale

    def sample_phi(self, z):
        check_dimensions(self.problem, z)
        value = self.problem.operator(z.stacked)
        if self.noise.sigma == 0:
            return value
        return value + self.next_noise(1)[0]

    def fork_stream(self, replication_index):
        """Fresh oracle on the substream keyed by ``(base_seed, replication_index)``."""
        return NoisyOracle(self.problem, self.noise, self.base_seed, replication_index)

    def with_noise(self, noise):
        return NoisyOracle(self.problem, noise, self.base_seed, self.replication_index)

    def __repr__(self):
        return (
            f"NoisyOracle({self.problem!r}, {self.noise}, base_seed={self.base_seed}, "
            f"replication_index={self.replication_index})"
        )
