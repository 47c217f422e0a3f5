"""Quadratic saddle problems with certified constants and closed-form saddles."""

from __future__ import annotations

import numpy as np

from .core import JointPoint, RegularityConstants, SaddleProblem
from .errors import CertificationError, InputError


def _matrix(values, shape, name):
    arr = np.array(values, dtype=np.float64)
    if arr.ndim == 1 and len(shape) == 2 and shape[0] == 1:
        arr = arr.reshape(1, -1)
    if arr.shape != shape:
        raise InputError(f"{name} must have shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} has non-finite entries")
    return arr


class GeneralQuadraticSaddle(SaddleProblem):
    """``f(x, y) = x'Ax/2 + x'By - y'Cy/2 + a'x + b'y``.

    When ``constants`` is omitted they are read off the spectra of ``A``, ``C``
    and the largest singular value of ``B``.  Passing explicit constants
    declares them as-is (they are not re-checked here; see
    :func:`msgda.analysis.certify_constants`).
    """

    def __init__(self, A, B, C, a=None, b=None, constants=None):
        A = np.array(A, dtype=np.float64, ndmin=2)
        C = np.array(C, dtype=np.float64, ndmin=2)
        m, n = A.shape[0], C.shape[0]
        if m < 1 or n < 1:
            raise InputError("problem dimensions must be at least 1")
        self.A = _matrix(A, (m, m), "A")
        self.C = _matrix(C, (n, n), "C")
        self.B = _matrix(B, (m, n), "B")
        self.a = np.zeros(m) if a is None else _matrix(a, (m,), "a")
        self.b = np.zeros(n) if b is None else _matrix(b, (n,), "b")
        if not np.allclose(self.A, self.A.T, rtol=0, atol=1e-12):
            raise InputError("A must be symmetric")
        if not np.allclose(self.C, self.C.T, rtol=0, atol=1e-12):
            raise InputError("C must be symmetric")
        self.m, self.n = m, n
        if constants is None:
            constants = self._spectral_constants()
        self.constants = constants

        # operator(z) = M z + c with the y rows negated
        self._M = np.block([[self.A, self.B], [-self.B.T, self.C]])
        self._c = np.concatenate([self.a, -self.b])
        for arr in (self.A, self.B, self.C, self.a, self.b, self._M, self._c):
            arr.flags.writeable = False
        self._saddle = solve_saddle(self)

    def _spectral_constants(self):
        eig_a = np.linalg.eigvalsh(self.A)
        eig_c = np.linalg.eigvalsh(self.C)
        coupling = float(np.linalg.norm(self.B, 2))
        try:
            return RegularityConstants(
                mu_x=eig_a[0], mu_y=eig_c[0], L_x=eig_a[-1], L_y=eig_c[-1],
                L_xy=coupling, L_yx=coupling,
            )
        except InputError as exc:
            raise CertificationError(f"matrices are not strongly convex-concave: {exc}") from None

    def saddle_point(self):
        return self._saddle

    def operator(self, z):
        # Column-by-column accumulation keeps each row's arithmetic independent
        # of the batch shape, so batched and single runs agree bit for bit.
        out = np.broadcast_to(self._c, z.shape).copy()
        for j in range(self._M.shape[1]):
            out += z[..., j : j + 1] * self._M[:, j]
        return out

    def grad_x(self, x, y):
        return self.operator(np.concatenate([x, y], axis=-1))[..., : self.m]

    def grad_y(self, x, y):
        return -self.operator(np.concatenate([x, y], axis=-1))[..., self.m :]

    def value(self, x, y):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        return (
            0.5 * np.einsum("...i,ij,...j->...", x, self.A, x)
            + np.einsum("...i,ij,...j->...", x, self.B, y)
            - 0.5 * np.einsum("...i,ij,...j->...", y, self.C, y)
            + x @ self.a
            + y @ self.b
        )

    def to_dict(self):
        return {
            "kind": "quadratic",
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "C": self.C.tolist(),
            "a": self.a.tolist(),
            "b": self.b.tolist(),
            "constants": self.constants.to_dict(),
        }


class ScalarBilinearQuadratic(GeneralQuadraticSaddle):
    """``f(x, y) = (mu/2) x^2 + L x y - (mu/2) y^2`` on R x R.

    The saddle is the origin and GDA contracts at best by ``1 - 1/(1 + kappa^2)``
    per step on it, which makes it the standard lower-bound instance.
    """

    def __init__(self, mu, L):
        mu, L = float(mu), float(L)
        if not 0 < mu <= L:
            raise InputError(f"need 0 < mu <= L, got mu={mu}, L={L}")
        self.mu, self.L = mu, L
        super().__init__([[mu]], [[L]], [[mu]], constants=RegularityConstants.uniform(mu, L))

    def operator(self, z):
        x = z[..., 0:1]
        y = z[..., 1:2]
        return np.concatenate([self.mu * x + self.L * y, -self.L * x + self.mu * y], axis=-1)

    def to_dict(self):
        return {"kind": "bilinear_scalar", "mu": self.mu, "L": self.L}

    def __repr__(self):
        return f"ScalarBilinearQuadratic(mu={self.mu}, L={self.L})"


def solve_saddle(problem):
    """Unique zero of the operator of a quadratic saddle problem.

    Solves ``[[A, B], [-B', C]] z = (-a, b)``.
    """
    rhs = np.concatenate([-problem.a, problem.b])
    M = np.block([[problem.A, problem.B], [-problem.B.T, problem.C]])
    try:
        z = np.linalg.solve(M, rhs) + 0.0  # no negative zeros
    except np.linalg.LinAlgError:
        raise CertificationError("saddle system is singular; constants cannot be valid") from None
    if not np.all(np.isfinite(z)):
        raise CertificationError("saddle system is numerically singular")
    return JointPoint.from_stacked(z, problem.m)


def _orthogonal(rng, k):
    q, r = np.linalg.qr(rng.standard_normal((k, k)))
    return q * np.sign(np.diag(r))


def _spd_with_spectrum(rng, eigs):
    q = _orthogonal(rng, eigs.size)
    mat = (q * eigs) @ q.T
    return 0.5 * (mat + mat.T)


def random_quadratic(seed, m, n, mu, L, offset_scale=0.0):
    """Random quadratic instance with eigenvalues of ``A``, ``C`` in ``[mu, L]``.

    The coupling ``B`` gets singular values in ``(0, L]``.  Declared constants
    are the sampled spectral extremes.  ``offset_scale > 0`` adds Gaussian
    linear terms so the saddle moves away from the origin.
    """
    mu, L = float(mu), float(L)
    if not 0 < mu <= L:
        raise InputError(f"need 0 < mu <= L, got mu={mu}, L={L}")
    if m < 1 or n < 1:
        raise InputError("m and n must be at least 1")
    rng = np.random.default_rng(seed)

    eig_a = np.sort(rng.uniform(mu, L, size=m))
    eig_c = np.sort(rng.uniform(mu, L, size=n))
    if mu == L:
        A, C = mu * np.eye(m), mu * np.eye(n)
    else:
        A = _spd_with_spectrum(rng, eig_a)
        C = _spd_with_spectrum(rng, eig_c)

    r = min(m, n)
    sing = L * (1.0 - rng.uniform(0.0, 1.0, size=r))
    U, V = _orthogonal(rng, m), _orthogonal(rng, n)
    B = (U[:, :r] * sing) @ V[:, :r].T

    a = b = None
    if offset_scale:
        a = offset_scale * rng.standard_normal(m)
        b = offset_scale * rng.standard_normal(n)

    coupling = float(sing.max())
    constants = RegularityConstants(
        mu_x=eig_a[0], mu_y=eig_c[0], L_x=eig_a[-1], L_y=eig_c[-1], L_xy=coupling, L_yx=coupling
    )
    return GeneralQuadraticSaddle(A, B, C, a, b, constants=constants)


def problem_to_dict(problem):
    try:
        return problem.to_dict()
    except AttributeError:
        raise InputError(f"{type(problem).__name__} is not serializable") from None


def problem_from_dict(spec):
    """Build a problem from its config representation.

    Recognised kinds: ``bilinear_scalar`` (mu, L), ``random_quadratic``
    (seed, m, n, mu, L, optional offset_scale) and ``quadratic`` (row-major
    A, B, C, optional a, b and declared constants).
    """
    if not isinstance(spec, dict) or "kind" not in spec:
        raise InputError("problem spec must be a mapping with a 'kind' key")
    kind = spec["kind"]
    try:
        if kind == "bilinear_scalar":
            return ScalarBilinearQuadratic(spec["mu"], spec["L"])
        if kind == "random_quadratic":
            return random_quadratic(
                int(spec["seed"]), int(spec["m"]), int(spec["n"]), spec["mu"], spec["L"],
                offset_scale=spec.get("offset_scale", 0.0),
            )
        if kind == "quadratic":
            constants = spec.get("constants")
            if constants is not None:
                constants = RegularityConstants.from_dict(constants)
            return GeneralQuadraticSaddle(
                spec["A"], spec["B"], spec["C"], spec.get("a"), spec.get("b"), constants=constants
            )
    except KeyError as exc:
        raise InputError(f"problem spec of kind {kind!r} is missing {exc}") from None
    raise InputError(f"unknown problem kind {kind!r}")
