"""Training losses.

The control-volume loss turns div(A grad u) into a surface quadrature: for
each collocation point the interior residual is the volume-normalized flux of
-A grad u through the control-volume boundary plus the lower-order terms, so
no second derivative of the network is ever formed. The baseline loss is the
pointwise strong residual with the second-order term reconstructed by central
differences of the gradient field.

Both losses are assembled as tape ops end to end (the input gradient is
emitted as forward ops), so a single first-order backward pass yields the
exact parameter gradient of the loss.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .autodiff import Tape, dtype_for
from .divest import AnalyticField, CoefficientField
from .network import Network
from .sampling import ControlVolumeSpec, FaceSet, cube_face_points, face_offsets, _rng


@dataclass
class LossConfig:
    cv: ControlVolumeSpec = field(default_factory=ControlVolumeSpec)
    lam: float = 1.0
    lower_order_rule: str = "center-point"  # "center-point" | "cv-average"
    estimator: str = "ad-gradient"          # "ad-gradient" | "difference"
    fd_step: Optional[float] = None         # difference estimator step; default cv.radius

    def __post_init__(self):
        if self.lower_order_rule not in ("center-point", "cv-average"):
            raise ValueError(f"unknown lower_order_rule {self.lower_order_rule!r}")
        if self.estimator not in ("ad-gradient", "difference"):
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if self.lam < 0:
            raise ValueError("boundary weight lam must be nonnegative")


@dataclass
class ResidualBatch:
    """Residual values for one batch plus the loss and (optionally) its gradient."""

    interior: np.ndarray
    boundary: np.ndarray
    loss: float
    interior_term: float
    boundary_term: float
    lam: float
    param_grad: Optional[np.ndarray] = None
    _tape: Optional[Tape] = field(default=None, repr=False)
    _root: Optional[int] = field(default=None, repr=False)
    _net: Optional[Network] = field(default=None, repr=False)
    _leaves: Optional[dict] = field(default=None, repr=False)

    def backprop(self) -> Optional[np.ndarray]:
        """Run the reverse pass and return d(loss)/d(params)."""
        if self.param_grad is None and self._net is not None:
            grads = self._tape.backward(self._root)
            self.param_grad = self._net.gradient_vector(grads, self._leaves)
        return self.param_grad


class _TapeEval:
    """Puts u (and optionally grad u) for a point batch onto the tape.

    Networks are emitted; analytic fields enter as constant leaves, which
    makes every residual formula below testable against exact solutions
    through the identical assembly path.
    """

    def __init__(self, tape: Tape, u, params):
        self.tape = tape
        if isinstance(u, Network):
            self.net = u
            self.leaves = u.param_leaves(tape, params)
            self.field = None
        else:
            self.net = None
            self.leaves = None
            self.field = u

    def __call__(self, pts: np.ndarray, need_grad: bool = False):
        if self.net is not None:
            xn = self.tape.leaf(pts)
            if need_grad:
                return self.net.emit_with_input_grad(self.tape, self.leaves, xn)
            return self.net.emit(self.tape, self.leaves, xn), None
        un = self.tape.leaf(np.asarray(self.field.value(pts)))
        gn = None
        if need_grad:
            if self.field.gradient is None:
                raise TypeError("analytic field lacks a gradient")
            gn = self.tape.leaf(np.asarray(self.field.gradient(pts)))
        return un, gn


# ---------------------------------------------------------------------------
# flux quadratures


def _flux_nodes(tape: Tape, ev: _TapeEval, A: CoefficientField, pts: np.ndarray,
                normals: np.ndarray, scale_per_pt: np.ndarray, groups: tuple,
                estimator: str = "ad-gradient", fd_step: float = 1e-3):
    """Shared flux core: per-group sums of -(A grad u . n) times scale_per_pt.

    pts/normals/scale are flat (S, ...) arrays; `groups` reshapes S into
    (n_groups, per_group) so each control volume reduces with one row_sum.
    Returns (flux_node, u_surf, g_surf); the latter two are reused by the
    cv-average lower-order rule.
    """
    an = A.matvec(pts, normals)
    u_surf = g_surf = None
    if estimator == "ad-gradient":
        u_surf, g_surf = ev(pts, need_grad=True)
        mask = tape.leaf(-scale_per_pt[:, None] * an)
        contrib = tape.row_sum(tape.mul(g_surf, mask))
    else:
        up, _ = ev(pts + fd_step * an)
        um, _ = ev(pts - fd_step * an)
        coef = tape.leaf(-scale_per_pt / (2.0 * fd_step))
        contrib = tape.mul(tape.sub(up, um), coef)
    flux = tape.row_sum(tape.reshape(contrib, groups))
    return flux, u_surf, g_surf


def flux_from_faces(u, params, A: CoefficientField, faces: FaceSet) -> float:
    """Volume-normalized flux of -A grad u through an explicit face quadrature.

    This is the conservation primitive: two half volumes that share the
    parent's face points (interface points entering both with opposite
    normals) sum to the parent flux exactly.
    """
    tape = Tape(dtype=dtype_for(params))
    ev = _TapeEval(tape, u, params)
    scale = faces.weights / faces.volume
    fl, _, _ = _flux_nodes(tape, ev, A, faces.points, faces.normals, scale,
                           (1, len(faces.weights)))
    return float(tape.value(fl)[0])


def flux_cube(u, params, A: CoefficientField, x_star, cv: ControlVolumeSpec,
              seed=0) -> float:
    """Flux of -A grad u through the cube x* +- radius, per unit volume."""
    x_star = np.asarray(x_star, dtype=float)
    faces = cube_face_points(x_star, cv.radius, cv.k, cv.qmc, seed, cv.antithetic)
    return flux_from_faces(u, params, A, faces)


def flux_cube_batch(u, params, A: CoefficientField, centers, cv: ControlVolumeSpec,
                    seed=0) -> np.ndarray:
    """flux_cube for a batch of centers through one tape (the loss path)."""
    centers = np.asarray(centers, dtype=float)
    din = centers.shape[1]
    spts, normals, scale, per = _cube_surface(centers, cv, tuple(range(din)),
                                              din, seed)
    tape = Tape(dtype=dtype_for(params))
    ev = _TapeEval(tape, u, params)
    fl, _, _ = _flux_nodes(tape, ev, A, spts, normals, scale,
                           (len(centers), per))
    return tape.value(fl).copy()


def flux_sphere(u, params, A: CoefficientField, x_star, cv: ControlVolumeSpec,
                seed=0) -> float:
    """Flux of -A grad u through the sphere of radius cv.radius around x*.

    Monte Carlo over cv.k directions: (d / (radius k)) sum_j -(A grad u . n_j).
    """
    from .sampling import sphere_directions

    x_star = np.asarray(x_star, dtype=float)
    d = x_star.shape[0]
    dirs = sphere_directions(d, cv.k, cv.antithetic, seed)
    pts = x_star[None, :] + cv.radius * dirs
    tape = Tape(dtype=dtype_for(params))
    ev = _TapeEval(tape, u, params)
    scale = np.full(cv.k, d / (cv.radius * cv.k))
    fl, _, _ = _flux_nodes(tape, ev, A, pts, dirs, scale, (1, cv.k))
    return float(tape.value(fl)[0])


# ---------------------------------------------------------------------------
# lower-order terms


def _needs_point_eval(problem) -> bool:
    return (problem.coeff.b is not None or problem.coeff.c is not None
            or problem.nonlinear_emit is not None or problem.kind == "parabolic")


def _emit_lower_order(tape: Tape, problem, pts: np.ndarray, u_node, g_node):
    """B grad u + c u - f (+ nonlinear term, + u_t for parabolic) at pts."""
    coeff = problem.coeff
    node = None

    def acc(nd):
        nonlocal node
        node = nd if node is None else tape.add(node, nd)

    if problem.kind == "parabolic":
        e_t = np.zeros((len(pts), problem.input_dim))
        e_t[:, -1] = 1.0
        acc(tape.row_sum(tape.mul(g_node, tape.leaf(e_t))))
    if coeff.b is not None:
        acc(tape.row_sum(tape.mul(g_node, tape.leaf(np.asarray(coeff.b(pts))))))
    if coeff.c is not None:
        acc(tape.mul(u_node, tape.leaf(np.asarray(coeff.c(pts)))))
    if problem.nonlinear_emit is not None:
        acc(problem.nonlinear_emit(tape, u_node, g_node))
    if problem.f is not None:
        acc(tape.leaf(-np.asarray(problem.f(pts))))
    if node is None:
        node = tape.leaf(np.zeros(len(pts)))
    return node


def lower_order_values(u, params, problem, pts: np.ndarray,
                       rule: str = "center-point",
                       cv: Optional[ControlVolumeSpec] = None, seed=0) -> np.ndarray:
    """Lower-order residual part at collocation points, as plain values."""
    pts = np.asarray(pts, dtype=float)
    tape = Tape(dtype=dtype_for(params))
    ev = _TapeEval(tape, u, params)
    if rule == "center-point":
        if _needs_point_eval(problem):
            un, gn = ev(pts, need_grad=True)
        else:
            un = gn = None
        node = _emit_lower_order(tape, problem, pts, un, gn)
        return tape.value(node).copy()
    if rule != "cv-average":
        raise ValueError(f"unknown lower_order_rule {rule!r}")
    if cv is None:
        cv = ControlVolumeSpec()
    spts, _, _, per = _cube_surface(pts, cv, problem.spatial_dims(),
                                    problem.input_dim, seed)
    un, gn = ev(spts, need_grad=True)
    node = _emit_lower_order(tape, problem, spts, un, gn)
    avg = tape.scale(tape.row_sum(tape.reshape(node, (len(pts), per))), 1.0 / per)
    return tape.value(avg).copy()


# ---------------------------------------------------------------------------
# surface batches for whole collocation sets


def _cube_surface(centers: np.ndarray, cv: ControlVolumeSpec, axes: tuple,
                  din: int, seed):
    """Face quadrature points for every center at once.

    Returns (points (N*F, din), normals (N*F, din), scale (N*F,), F) where
    scale carries the |face| / (|V| k) weight of each sample and F is the
    number of samples per control volume. Opposite faces share tangential
    offsets; the offset cloud is symmetric so its mean is the face center.
    """
    n_ax = len(axes)
    k = cv.k
    offs = face_offsets(n_ax - 1, k, cv.qmc, seed, cv.antithetic)  # (k, n_ax-1)
    F = 2 * n_ax * k
    delta = np.zeros((n_ax, 2, k, din))
    normal = np.zeros((n_ax, 2, k, din))
    for ai, a in enumerate(axes):
        others = [b for b in axes if b != a]
        for si, s in enumerate((+1.0, -1.0)):
            delta[ai, si, :, a] = s * cv.radius
            if others:
                delta[ai, si, :, others] = (offs * cv.radius).T
            normal[ai, si, :, a] = s
    delta = delta.reshape(F, din)
    normal = normal.reshape(F, din)
    N = len(centers)
    pts = (centers[:, None, :] + delta[None, :, :]).reshape(N * F, din)
    normals = np.tile(normal, (N, 1))
    scale = np.full(N * F, 1.0 / (2.0 * cv.radius * k))
    return pts, normals, scale, F


def _sphere_surface(centers: np.ndarray, cv: ControlVolumeSpec, axes: tuple,
                    din: int, seed):
    """Sphere quadrature points for every center; fresh directions per center."""
    n_ax = len(axes)
    k = cv.k
    rng = _rng(seed)
    m = k // 2 if cv.antithetic else k
    v = rng.standard_normal((len(centers), m, n_ax))
    v /= np.linalg.norm(v, axis=2, keepdims=True)
    dirs = np.concatenate([v, -v], axis=1) if cv.antithetic else v
    N = len(centers)
    normals = np.zeros((N, k, din))
    normals[:, :, axes] = dirs
    pts = centers[:, None, :] + cv.radius * normals
    scale = np.full(N * k, n_ax / (cv.radius * k))
    return pts.reshape(N * k, din), normals.reshape(N * k, din), scale, k


def _check_embedded(problem, pts_r: np.ndarray, radius: float):
    ok = problem.domain.embeds(pts_r, radius)
    if not np.all(ok):
        i = int(np.argmin(ok))
        raise ValueError(
            f"control volume of radius {radius} around point {i} "
            f"({pts_r[i]}) is not embedded in the domain")


def _finish(tape: Tape, ev: _TapeEval, problem, interior_node, pts_b: np.ndarray,
            lam: float, n_interior: int, with_grad: bool) -> ResidualBatch:
    u_b, _ = ev(pts_b)
    r_b = tape.sub(u_b, tape.leaf(np.asarray(problem.g(pts_b))))
    ims = tape.scale(tape.sum(tape.square(interior_node)), 1.0 / n_interior)
    bms = tape.scale(tape.sum(tape.square(r_b)), 1.0 / len(pts_b))
    root = tape.add(ims, tape.scale(bms, lam))
    rb = ResidualBatch(
        interior=tape.value(interior_node).copy(),
        boundary=tape.value(r_b).copy(),
        loss=float(tape.value(root)),
        interior_term=float(tape.value(ims)),
        boundary_term=float(tape.value(bms)),
        lam=lam,
        _tape=tape, _root=root, _net=ev.net, _leaves=ev.leaves,
    )
    if with_grad:
        rb.backprop()
    return rb


def dfvm_loss(u, params, problem, pts_r: np.ndarray, pts_b: np.ndarray,
              cfg: Optional[LossConfig] = None, seed=0,
              with_grad: bool = True) -> ResidualBatch:
    """Control-volume loss: mean squared CV residual + lam * boundary misfit.

    Residual per collocation point: flux_sign * (flux of -A grad u per unit
    volume) + lower-order terms. Every collocation point's control volume
    must be embedded in the domain.
    """
    if cfg is None:
        cfg = LossConfig()
    pts_r = np.asarray(pts_r, dtype=float)
    pts_b = np.asarray(pts_b, dtype=float)
    _check_embedded(problem, pts_r, cfg.cv.radius)

    axes = problem.spatial_dims()
    if cfg.cv.shape == "cube":
        spts, normals, scale, per = _cube_surface(pts_r, cfg.cv, axes,
                                                  problem.input_dim, seed)
    else:
        spts, normals, scale, per = _sphere_surface(pts_r, cfg.cv, axes,
                                                    problem.input_dim, seed)

    tape = Tape(dtype=dtype_for(params))
    ev = _TapeEval(tape, u, params)
    fd = cfg.fd_step if cfg.fd_step is not None else cfg.cv.radius
    flux, u_surf, g_surf = _flux_nodes(tape, ev, problem.coeff, spts, normals, scale,
                                       (len(pts_r), per), cfg.estimator, fd)
    if problem.flux_sign != 1.0:
        flux = tape.scale(flux, problem.flux_sign)

    if cfg.lower_order_rule == "center-point":
        if _needs_point_eval(problem):
            u_c, g_c = ev(pts_r, need_grad=True)
        else:
            u_c = g_c = None
        h = _emit_lower_order(tape, problem, pts_r, u_c, g_c)
    else:
        if g_surf is None:  # difference estimator does not evaluate gradients
            u_surf, g_surf = ev(spts, need_grad=True)
        node = _emit_lower_order(tape, problem, spts, u_surf, g_surf)
        h = tape.scale(tape.row_sum(tape.reshape(node, (len(pts_r), per))), 1.0 / per)

    interior = tape.add(flux, h)
    return _finish(tape, ev, problem, interior, pts_b, cfg.lam, len(pts_r), with_grad)


def pinn_loss(u, params, problem, pts_r: np.ndarray, pts_b: np.ndarray,
              lam: float = 1.0, h_fd: float = 1e-4,
              with_grad: bool = True) -> ResidualBatch:
    """Pointwise strong-residual loss.

    div(A grad u) is assembled from central differences of the gradient field
    along each spatial axis (2 d_spatial gradient probes per point), keeping
    differentiation strictly first order.
    """
    pts_r = np.asarray(pts_r, dtype=float)
    pts_b = np.asarray(pts_b, dtype=float)
    axes = problem.spatial_dims()
    n_ax = len(axes)
    N = len(pts_r)
    din = problem.input_dim

    # probe batch: for each axis a, x + h e_a then x - h e_a
    probes = np.repeat(pts_r, 2 * n_ax, axis=0).reshape(N, n_ax, 2, din)
    signs = np.array([1.0, -1.0])
    for ai, a in enumerate(axes):
        probes[:, ai, :, a] += h_fd * signs
    probes = probes.reshape(N * 2 * n_ax, din)

    tape = Tape(dtype=dtype_for(params))
    ev = _TapeEval(tape, u, params)
    _, g_p = ev(probes, need_grad=True)

    # mask rows: sign/(2h) * (row a of A) at the probe, so that
    # row_sum(g * mask) summed per point is sum_a d_a[(A grad u)_a]
    mask = np.empty((N * 2 * n_ax, din))
    view = mask.reshape(N, n_ax, 2, din)
    for ai, a in enumerate(axes):
        rows = problem.coeff.row(probes.reshape(N, n_ax, 2, din)[:, ai, :, :]
                                 .reshape(2 * N, din), a).reshape(N, 2, din)
        view[:, ai, :, :] = rows * (signs / (2.0 * h_fd))[None, :, None]
    contrib = tape.row_sum(tape.mul(g_p, tape.leaf(mask)))
    div = tape.row_sum(tape.reshape(contrib, (N, 2 * n_ax)))

    if _needs_point_eval(problem):
        u_c, g_c = ev(pts_r, need_grad=True)
    else:
        u_c = g_c = None
    h = _emit_lower_order(tape, problem, pts_r, u_c, g_c)
    interior = tape.add(tape.scale(div, -problem.flux_sign), h)
    return _finish(tape, ev, problem, interior, pts_b, lam, N, with_grad)
