"""Stochastic estimators of div(A grad u) from pointwise field access.

All five schemes probe the field on a sphere of radius r around x* with k
directions and need no second-order differentiation:

* q1_sphere_ad      uses exact gradients of u (one reverse pass per batch).
* q2_sphere_diff    replaces each gradient by a central difference along A n.
* q3_sphere_onesided scalar A only; one-sided probes at double radius.
* q4_constant_alpha constant-coefficient Laplacian probe; reduces to the
                    classic centered second difference (d=1, k=2) and the
                    five-point stencil (d=2, axis directions).
* q5_split          scalar A: alpha(x*) * q4 plus a transport correction
                    along grad(alpha).

brute_divergence is the slow reference oracle: every term of
sum_i d_i(sum_j a_ij d_j u) by nested central differences, O(d^2) field
evaluations for a full matrix A.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np


@dataclass
class CoefficientField:
    """Diffusion matrix A(x) plus optional transport b(x) and reaction c(x).

    Exactly one of the A representations should be set; fast paths are used
    in the order const, scalar, diag, matrix. `as_matrix` always materializes
    the full (n, d, d) array so fast paths can be validated against it.
    """

    a_const: Optional[float] = None
    a_scalar: Optional[Callable] = None      # alpha(x): (n,d) -> (n,)
    a_diag: Optional[Callable] = None        # diag entries: (n,d) -> (n,d)
    a_matrix: Optional[Callable] = None      # full: (n,d) -> (n,d,d)
    grad_a: Optional[Callable] = None        # grad alpha: (n,d) -> (n,d)
    b: Optional[Callable] = None             # transport: (n,d) -> (n,d)
    c: Optional[Callable] = None             # reaction: (n,d) -> (n,)

    def __post_init__(self):
        if all(v is None for v in (self.a_const, self.a_scalar, self.a_diag, self.a_matrix)):
            raise ValueError("CoefficientField needs one A representation")

    @property
    def is_scalar(self) -> bool:
        return self.a_const is not None or self.a_scalar is not None

    def alpha(self, x: np.ndarray) -> np.ndarray:
        if self.a_const is not None:
            return np.full(x.shape[:-1], self.a_const)
        if self.a_scalar is not None:
            return np.asarray(self.a_scalar(x))
        raise TypeError("A is not a scalar field")

    def matvec(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        """A(x_i) v_i row by row."""
        if self.a_const is not None:
            return self.a_const * v
        if self.a_scalar is not None:
            return np.asarray(self.a_scalar(x))[..., None] * v
        if self.a_diag is not None:
            return np.asarray(self.a_diag(x)) * v
        return np.einsum("nij,nj->ni", self.a_matrix(x), v)

    def row(self, x: np.ndarray, i: int) -> np.ndarray:
        """Row i of A at each point, shape (n, d)."""
        n, d = x.shape
        if self.a_const is not None:
            out = np.zeros((n, d))
            out[:, i] = self.a_const
            return out
        if self.a_scalar is not None:
            out = np.zeros((n, d))
            out[:, i] = np.asarray(self.a_scalar(x))
            return out
        if self.a_diag is not None:
            out = np.zeros((n, d))
            out[:, i] = np.asarray(self.a_diag(x))[:, i]
            return out
        return np.asarray(self.a_matrix(x))[:, i, :]

    def as_matrix(self, x: np.ndarray) -> np.ndarray:
        n, d = x.shape
        if self.a_matrix is not None:
            return np.asarray(self.a_matrix(x))
        out = np.zeros((n, d, d))
        idx = np.arange(d)
        if self.a_const is not None:
            out[:, idx, idx] = self.a_const
        elif self.a_scalar is not None:
            out[:, idx, idx] = np.asarray(self.a_scalar(x))[:, None]
        else:
            out[:, idx, idx] = np.asarray(self.a_diag(x))
        return out


def identity_coefficients() -> CoefficientField:
    return CoefficientField(a_const=1.0)


@dataclass
class AnalyticField:
    """Closed-form scalar field with its gradient."""

    value: Callable   # (n,d) -> (n,)
    gradient: Optional[Callable] = None


def _probe_points(x_star: np.ndarray, r: float, dirs: np.ndarray) -> np.ndarray:
    return x_star[None, :] + r * dirs


def _check(x_star, r, dirs):
    x_star = np.asarray(x_star, dtype=float)
    dirs = np.asarray(dirs, dtype=float)
    if r <= 0:
        raise ValueError("radius r must be positive")
    if dirs.ndim != 2 or dirs.shape[1] != x_star.shape[0]:
        raise ValueError(f"direction set shape {dirs.shape} does not match point "
                         f"dimension {x_star.shape[0]}")
    return x_star, dirs


def q1_sphere_ad(field, A: CoefficientField, x_star, r: float, dirs) -> float:
    """(d / (k r)) sum_j (A grad u)(x* + r n_j) . n_j"""
    x_star, dirs = _check(x_star, r, dirs)
    d = x_star.shape[0]
    k = dirs.shape[0]
    pts = _probe_points(x_star, r, dirs)
    g = np.asarray(field.gradient(pts))
    flux = np.sum(A.matvec(pts, g) * dirs, axis=1)
    return d / (k * r) * np.sum(flux)


def q2_sphere_diff(field, A: CoefficientField, x_star, r: float, dirs,
                   eps_fd: Optional[float] = None) -> float:
    """Like q1 but each normal derivative is a central difference of u along A n."""
    x_star, dirs = _check(x_star, r, dirs)
    d = x_star.shape[0]
    k = dirs.shape[0]
    if eps_fd is None:
        eps_fd = r
    if eps_fd <= 0:
        raise ValueError("eps_fd must be positive")
    pts = _probe_points(x_star, r, dirs)
    an = A.matvec(pts, dirs)
    up = np.asarray(field.value(pts + eps_fd * an))
    um = np.asarray(field.value(pts - eps_fd * an))
    return d / (2.0 * k * r * eps_fd) * np.sum(up - um)


def q3_sphere_onesided(field, A: CoefficientField, x_star, r: float, dirs) -> float:
    """(d / (2 k r^2)) sum_j alpha(x* + r n_j) [u(x* + 2 r n_j) - u(x*)]"""
    x_star, dirs = _check(x_star, r, dirs)
    if not A.is_scalar:
        raise TypeError("q3_sphere_onesided needs scalar A = alpha(x) I")
    d = x_star.shape[0]
    k = dirs.shape[0]
    alpha = A.alpha(_probe_points(x_star, r, dirs))
    u2 = np.asarray(field.value(_probe_points(x_star, 2.0 * r, dirs)))
    u0 = float(np.asarray(field.value(x_star[None, :]))[0])
    return d / (2.0 * k * r * r) * np.sum(alpha * (u2 - u0))


def q4_constant_alpha(field, x_star, r: float, dirs) -> float:
    """(2 d / (k r^2)) [sum_j u(x* + r n_j) - k u(x*)]; Laplacian probe."""
    x_star, dirs = _check(x_star, r, dirs)
    d = x_star.shape[0]
    k = dirs.shape[0]
    u = np.asarray(field.value(_probe_points(x_star, r, dirs)))
    u0 = float(np.asarray(field.value(x_star[None, :]))[0])
    return 2.0 * d / (k * r * r) * (np.sum(u) - k * u0)


def q5_split(field, A: CoefficientField, x_star, r: float, dirs) -> float:
    """alpha(x*) q4 + [u(x* + r grad_a) - u(x* - r grad_a)] / (2 r).

    Splits div(alpha grad u) = alpha Lap u + grad(alpha) . grad u; needs the
    analytic gradient of alpha on the coefficient field.
    """
    x_star, dirs = _check(x_star, r, dirs)
    if not A.is_scalar:
        raise TypeError("q5_split needs scalar A = alpha(x) I")
    if A.a_const is None and A.grad_a is None:
        raise TypeError("q5_split needs grad_a on the coefficient field")
    alpha0 = float(A.alpha(x_star[None, :])[0])
    lap = q4_constant_alpha(field, x_star, r, dirs)
    if A.a_const is not None:
        return alpha0 * lap
    ga = np.asarray(A.grad_a(x_star[None, :]))[0]
    up = float(np.asarray(field.value((x_star + r * ga)[None, :]))[0])
    um = float(np.asarray(field.value((x_star - r * ga)[None, :]))[0])
    return alpha0 * lap + (up - um) / (2.0 * r)


def brute_divergence(field, A: CoefficientField, x_star, h: float = 1e-4) -> float:
    """Reference value of div(A grad u)(x*) by nested central differences.

    Expands sum_i d_i[(A grad u)_i] term by term; for a full matrix this costs
    O(d^2) field evaluations, which is the point: it is the honest second-order
    oracle the cheap estimators are judged against.
    """
    x_star = np.asarray(x_star, dtype=float)
    d = x_star.shape[0]
    if h <= 0:
        raise ValueError("step h must be positive")
    eye = np.eye(d)
    outer = np.concatenate([x_star + h * eye, x_star - h * eye])  # (2d, d)

    if A.a_matrix is None:
        # A diagonal in some form: (A grad u)_i depends on d_i u only
        inner = np.concatenate([outer + h * np.tile(eye, (2, 1)),
                                outer - h * np.tile(eye, (2, 1))])
        vals = np.asarray(field.value(inner))
        du = (vals[:2 * d] - vals[2 * d:]) / (2.0 * h)  # d_i u at each outer point
        if A.a_const is not None:
            coef = np.full(2 * d, A.a_const)
        elif A.a_scalar is not None:
            coef = A.alpha(outer)
        else:
            diag = np.asarray(A.a_diag(outer))            # (2d, d)
            coef = diag[np.arange(2 * d), np.tile(np.arange(d), 2)]
        flux = coef * du                                  # (A grad u)_i at x +- h e_i
        return float(np.sum((flux[:d] - flux[d:]) / (2.0 * h)))

    # full matrix: every component of grad u at every outer point
    reps = np.repeat(outer, d, axis=0)                    # (2d*d, d)
    steps = np.tile(eye, (2 * d, 1))
    vals_p = np.asarray(field.value(reps + h * steps))
    vals_m = np.asarray(field.value(reps - h * steps))
    grads = ((vals_p - vals_m) / (2.0 * h)).reshape(2 * d, d)
    amat = np.asarray(A.a_matrix(outer))                  # (2d, d, d)
    rows = np.tile(np.arange(d), 2)
    flux = np.einsum("nj,nj->n", amat[np.arange(2 * d), rows, :], grads)
    return float(np.sum((flux[:d] - flux[d:]) / (2.0 * h)))


def brute_divergence_batch(field, A: CoefficientField, xs, h: float = 1e-4) -> np.ndarray:
    """brute_divergence for a batch of points with batched field evaluations.

    Same nested central differences as brute_divergence, but the field is
    called on one big probe array per difference layer, so the wall-clock
    cost scales with the true work instead of per-point call overhead.
    """
    xs = np.asarray(xs, dtype=float)
    if xs.ndim != 2:
        raise ValueError("brute_divergence_batch expects an (n, d) point array")
    n, d = xs.shape
    if h <= 0:
        raise ValueError("step h must be positive")
    eye = np.eye(d)
    pm = np.concatenate([eye, -eye])                       # (2d, d)
    outer = xs[:, None, :] + h * pm[None, :, :]            # (n, 2d, d)
    outer_flat = outer.reshape(n * 2 * d, d)

    if A.a_matrix is None:
        steps = np.tile(eye, (2, 1))                       # (2d, d), e_{i mod d}
        inner_p = (outer + h * steps[None, :, :]).reshape(n * 2 * d, d)
        inner_m = (outer - h * steps[None, :, :]).reshape(n * 2 * d, d)
        du = ((np.asarray(field.value(inner_p)) - np.asarray(field.value(inner_m)))
              / (2.0 * h)).reshape(n, 2 * d)
        if A.a_const is not None:
            coef = np.full((n, 2 * d), A.a_const)
        elif A.a_scalar is not None:
            coef = A.alpha(outer_flat).reshape(n, 2 * d)
        else:
            diag = np.asarray(A.a_diag(outer_flat)).reshape(n, 2 * d, d)
            cols = np.tile(np.arange(d), 2)
            coef = diag[:, np.arange(2 * d), cols]
        flux = coef * du
        return np.sum((flux[:, :d] - flux[:, d:]) / (2.0 * h), axis=1)

    reps = np.repeat(outer_flat, d, axis=0)                # (n*2d*d, d)
    steps = np.tile(eye, (n * 2 * d, 1))
    vals_p = np.asarray(field.value(reps + h * steps))
    vals_m = np.asarray(field.value(reps - h * steps))
    grads = ((vals_p - vals_m) / (2.0 * h)).reshape(n * 2 * d, d)
    amat = np.asarray(A.a_matrix(outer_flat))              # (n*2d, d, d)
    rows = np.tile(np.tile(np.arange(d), 2), n)
    flux = np.einsum("nj,nj->n", amat[np.arange(n * 2 * d), rows, :],
                     grads).reshape(n, 2 * d)
    return np.sum((flux[:, :d] - flux[:, d:]) / (2.0 * h), axis=1)


ESTIMATORS = {
    "q1": q1_sphere_ad,
    "q2": q2_sphere_diff,
    "q3": q3_sphere_onesided,
    "q4": q4_constant_alpha,
    "q5": q5_split,
}


def _sumsq(x):
    return np.sum(x * x, axis=-1)


def _sumsq_grad(x):
    return 2.0 * x


def _sinsum(x):
    return np.sin(np.mean(x, axis=-1))


def _sinsum_grad(x):
    d = x.shape[-1]
    return (np.cos(np.mean(x, axis=-1)) / d)[..., None] * np.ones_like(x)


def _gauss(x):
    return np.exp(-0.5 * np.sum(x * x, axis=-1))


def _gauss_grad(x):
    return -x * _gauss(x)[..., None]


def _linear(x):
    return np.sum(x, axis=-1)


def _linear_grad(x):
    return np.ones_like(x)


ANALYTIC_FIELDS = {
    "sumsq": AnalyticField(_sumsq, _sumsq_grad),
    "sinsum": AnalyticField(_sinsum, _sinsum_grad),
    "gauss": AnalyticField(_gauss, _gauss_grad),
    "linear": AnalyticField(_linear, _linear_grad),
}
