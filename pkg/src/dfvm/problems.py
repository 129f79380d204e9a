"""Built-in PDE problem definitions.

Each problem bundles a domain, diffusion/advection/reaction coefficients,
source and boundary data, and a known exact solution used for error
reporting.  The divergence of the exact flux is supplied in closed form so
tests can check the strong residual without any numerical differentiation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .divest import CoefficientField, identity_coefficients
from .sampling import Hypercube, LShape, SpaceTime

Array = np.ndarray


@dataclass(frozen=True)
class PdeProblem:
    """A second-order PDE in divergence form with Dirichlet-type data.

    The interior residual is assembled as

        flux_sign * flux(u) + lower_order(u) - f

    where flux(u) estimates -div(A grad u) over a control volume and the
    lower-order part collects time derivative, drift, reaction and any
    nonlinear term.  flux_sign is +1 for elliptic problems written as
    -div(A grad u) + ... = f and -1 when the diffusion enters with a plus
    sign (the backward-in-time pricing equation).
    """

    name: str
    kind: str                       # "elliptic" or "parabolic"
    domain: object
    coeff: CoefficientField
    g: Callable[[Array], Array]     # boundary / terminal data
    exact: Callable[[Array], Array]
    exact_grad: Callable[[Array], Array]
    exact_div_flux: Callable[[Array], Array]   # div(A grad u*) pointwise
    f: Optional[Callable[[Array], Array]] = None
    nonlinear_emit: Optional[Callable] = None  # (tape, u_node, g_node) -> node
    nonlinear_value: Optional[Callable[[Array, Array], Array]] = None
    flux_sign: float = 1.0
    input_dim: int = 2
    spatial_axes: Optional[tuple] = None       # None means all axes
    defaults: dict = field(default_factory=dict)

    @property
    def is_parabolic(self) -> bool:
        return self.kind == "parabolic"

    def spatial_dims(self) -> tuple:
        if self.spatial_axes is None:
            return tuple(range(self.input_dim))
        return tuple(self.spatial_axes)

    def exact_residual(self, x: Array) -> Array:
        """Strong-form residual of the exact solution, from analytic pieces.

        Zero up to rounding for a correctly transcribed problem; the test
        suite checks this at random interior points.
        """
        x = np.asarray(x, dtype=float)
        u = self.exact(x)
        grad = self.exact_grad(x)
        r = -self.flux_sign * self.exact_div_flux(x)
        if self.is_parabolic:
            r = r + grad[:, -1]
        if self.coeff.b is not None:
            r = r + np.sum(self.coeff.b(x) * grad, axis=1)
        if self.coeff.c is not None:
            r = r + self.coeff.c(x) * u
        if self.nonlinear_value is not None:
            r = r + self.nonlinear_value(u, grad)
        if self.f is not None:
            r = r - self.f(x)
        return r


def poisson_highdim(dim: int = 10) -> PdeProblem:
    """Poisson equation -Laplace(u) = f on the unit cube in d dimensions.

    The exact solution depends on the coordinate mean s = (1/d) sum x_i:
    u*(x) = s^2 + sin(s), which keeps magnitudes dimension-independent.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    d = float(dim)

    def mean_coord(x):
        return np.mean(x, axis=1)

    def exact(x):
        s = mean_coord(x)
        return s * s + np.sin(s)

    def exact_grad(x):
        s = mean_coord(x)
        gs = (2.0 * s + np.cos(s)) / d
        return np.repeat(gs[:, None], dim, axis=1)

    def exact_div_flux(x):
        # Laplacian of u*: each second derivative is (2 - sin s)/d^2,
        # summed over d coordinates.
        s = mean_coord(x)
        return (2.0 - np.sin(s)) / d

    def source(x):
        s = mean_coord(x)
        return (np.sin(s) - 2.0) / d

    return PdeProblem(
        name="poisson-hd",
        kind="elliptic",
        domain=Hypercube(0.0, 1.0, dim),
        coeff=identity_coefficients(),
        g=exact,
        exact=exact,
        exact_grad=exact_grad,
        exact_div_flux=exact_div_flux,
        f=source,
        input_dim=dim,
        defaults=dict(
            width=128, blocks=3, n_interior=2000, n_boundary=100 * dim,
            cv_radius=1e-3, steps=20000, lr=1e-3,
        ),
    )


def poisson_lshape() -> PdeProblem:
    """Variable-coefficient Poisson problem on the 2d L-shaped domain.

    -div(a grad u) = f with a(x) = 1 + |x|^2 and exact solution
    u*(x) = sin(pi x1 / 2) cos(pi x2 / 2).
    """
    half_pi = 0.5 * np.pi

    def alpha(x):
        return 1.0 + np.sum(x * x, axis=1)

    def grad_alpha(x):
        return 2.0 * x

    def exact(x):
        return np.sin(half_pi * x[:, 0]) * np.cos(half_pi * x[:, 1])

    def exact_grad(x):
        s1 = np.sin(half_pi * x[:, 0])
        c1 = np.cos(half_pi * x[:, 0])
        s2 = np.sin(half_pi * x[:, 1])
        c2 = np.cos(half_pi * x[:, 1])
        return np.stack([half_pi * c1 * c2, -half_pi * s1 * s2], axis=1)

    def exact_div_flux(x):
        # div(a grad u) = a * Laplace(u) + grad(a) . grad(u)
        a = alpha(x)
        s1 = np.sin(half_pi * x[:, 0])
        c1 = np.cos(half_pi * x[:, 0])
        s2 = np.sin(half_pi * x[:, 1])
        c2 = np.cos(half_pi * x[:, 1])
        lap = -0.5 * np.pi ** 2 * s1 * c2
        dot = np.pi * (x[:, 0] * c1 * c2 - x[:, 1] * s1 * s2)
        return a * lap + dot

    def source(x):
        return -exact_div_flux(x)

    return PdeProblem(
        name="poisson-lshape",
        kind="elliptic",
        domain=LShape(2),
        coeff=CoefficientField(a_scalar=alpha, grad_a=grad_alpha),
        g=exact,
        exact=exact,
        exact_grad=exact_grad,
        exact_div_flux=exact_div_flux,
        f=source,
        input_dim=2,
        defaults=dict(
            width=40, blocks=3, n_interior=2000, n_boundary=600,
            cv_radius=1e-3, steps=20000, lr=1e-3,
        ),
    )


def nonlinear_elliptic(dim: int = 5) -> PdeProblem:
    """Nonlinear elliptic problem -div(a grad u) + |grad u|^2 / 2 = f.

    On (-1,1)^d with a(x) = 1 + |x|^2 and u*(x) = sin(q) for
    q = pi x1^2 / 2 + x2^2 / 2; only the first two coordinates enter u*.
    """
    if dim < 2:
        raise ValueError("dim must be >= 2")

    def alpha(x):
        return 1.0 + np.sum(x * x, axis=1)

    def grad_alpha(x):
        return 2.0 * x

    def phase(x):
        return 0.5 * np.pi * x[:, 0] ** 2 + 0.5 * x[:, 1] ** 2

    def grad_phase(x):
        g = np.zeros_like(x)
        g[:, 0] = np.pi * x[:, 0]
        g[:, 1] = x[:, 1]
        return g

    def exact(x):
        return np.sin(phase(x))

    def exact_grad(x):
        return np.cos(phase(x))[:, None] * grad_phase(x)

    def exact_div_flux(x):
        # div(a grad u) = a (cos q * Lap q - sin q |grad q|^2) + grad a . grad u
        q = phase(x)
        gq = grad_phase(x)
        gq2 = np.sum(gq * gq, axis=1)
        lap_q = np.pi + 1.0
        a = alpha(x)
        dot = 2.0 * np.cos(q) * np.sum(x * gq, axis=1)
        return a * (np.cos(q) * lap_q - np.sin(q) * gq2) + dot

    def nl_value(u, grad):
        return 0.5 * np.sum(grad * grad, axis=1)

    def nl_emit(tape, u_node, g_node):
        return tape.scale(tape.row_sum(tape.square(g_node)), 0.5)

    def source(x):
        g = exact_grad(x)
        return -exact_div_flux(x) + 0.5 * np.sum(g * g, axis=1)

    return PdeProblem(
        name="nonlinear",
        kind="elliptic",
        domain=Hypercube(-1.0, 1.0, dim),
        coeff=CoefficientField(a_scalar=alpha, grad_a=grad_alpha),
        g=exact,
        exact=exact,
        exact_grad=exact_grad,
        exact_div_flux=exact_div_flux,
        f=source,
        nonlinear_emit=nl_emit,
        nonlinear_value=nl_value,
        input_dim=dim,
        defaults=dict(
            width=40, blocks=3, n_interior=10000, n_boundary=60 * dim,
            cv_radius=1e-5, steps=20000, lr=1e-3,
        ),
    )


def black_scholes(horizon: float = 1.0) -> PdeProblem:
    """Two-asset Black-Scholes pricing equation, backward in time.

    u_t + 0.08 div(diag(x1^2, x2^2) grad u) - 0.11 x . grad u - 0.05 u = 0
    on (0,2)^2 x (0,T) with terminal data u(x, T) = |x|^2.  Inputs are
    (x1, x2, t) with time last; the exact solution is
    u*(x, t) = exp(0.21 (T - t)) |x|^2.
    """
    T = float(horizon)
    rate_q = 0.21       # exponent growth rate of the exact solution
    sig = 0.08          # diffusion level: A = sig * diag(x1^2, x2^2, 0)
    drift = -0.11       # drift b = drift * (x1, x2, 0)
    react = -0.05       # reaction coefficient

    def a_diag(x):
        d = np.zeros_like(x)
        d[:, 0] = sig * x[:, 0] ** 2
        d[:, 1] = sig * x[:, 1] ** 2
        return d

    def b_vec(x):
        b = np.zeros_like(x)
        b[:, 0] = drift * x[:, 0]
        b[:, 1] = drift * x[:, 1]
        return b

    def c_fun(x):
        return np.full(x.shape[0], react)

    def radius2(x):
        return x[:, 0] ** 2 + x[:, 1] ** 2

    def exact(x):
        return np.exp(rate_q * (T - x[:, 2])) * radius2(x)

    def exact_grad(x):
        e = np.exp(rate_q * (T - x[:, 2]))
        g = np.empty_like(x)
        g[:, 0] = 2.0 * e * x[:, 0]
        g[:, 1] = 2.0 * e * x[:, 1]
        g[:, 2] = -rate_q * e * radius2(x)
        return g

    def exact_div_flux(x):
        # div over spatial axes of sig * x_i^2 * du/dx_i = 6 sig u
        return 6.0 * sig * exact(x)

    def terminal(x):
        return radius2(x)

    return PdeProblem(
        name="black-scholes",
        kind="parabolic",
        domain=SpaceTime(Hypercube(0.0, 2.0, 2), 0.0, T),
        coeff=CoefficientField(a_diag=a_diag, b=b_vec, c=c_fun),
        g=terminal,
        exact=exact,
        exact_grad=exact_grad,
        exact_div_flux=exact_div_flux,
        f=None,
        flux_sign=-1.0,
        input_dim=3,
        spatial_axes=(0, 1),
        defaults=dict(
            width=64, blocks=3, n_interior=1000, n_boundary=1000,
            cv_radius=1e-3, steps=20000, lr=1e-3,
        ),
    )


_BUILDERS = {
    "poisson-hd": poisson_highdim,
    "poisson-lshape": poisson_lshape,
    "nonlinear": nonlinear_elliptic,
    "black-scholes": black_scholes,
}

_DIM_FIXED = {"poisson-lshape": 2, "black-scholes": 3}


def problem_names() -> list:
    return sorted(_BUILDERS)


def get_problem(name: str, dim: Optional[int] = None) -> PdeProblem:
    """Build a named problem, optionally overriding its dimension."""
    if name not in _BUILDERS:
        known = ", ".join(problem_names())
        raise KeyError(f"unknown problem {name!r}; available: {known}")
    build = _BUILDERS[name]
    if name in _DIM_FIXED:
        if dim is not None and dim != _DIM_FIXED[name]:
            raise ValueError(f"{name} has fixed input dimension {_DIM_FIXED[name]}")
        return build()
    if dim is None:
        return build()
    return build(dim)
