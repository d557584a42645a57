"""Manifolds, point representations and the kernel pair (D, L).

Three model spaces are supported:

* ``circle``  -- points are angles in [0, 2*pi),
* ``sphere``  -- points are unit vectors in R^3,
* ``flag``    -- points of F^{1,2}(C^f), stored as an orthonormal pair
  (u, v) of complex f-vectors representing the rank-two Hermitian matrix
  (1+tau)|u><u| + (1-tau)|v><v|.

On the circle and the sphere the kernel is

    D(x, y) = 2 tau^2 (1 + <x,y>) (2 - tau^2 (1 - <x,y>)),

on the flag manifold D(x, y) = Tr((xy)^2) - Tr(xy)^2 / 2, evaluated
through the 2x2 reduction M = diag(1+tau, 1-tau) C diag(1+tau, 1-tau) C*
with C the 2x2 matrix of inner products of the (u, v) pairs.  The
Lagrangian is the positive part L = max(0, D); the sign of D defines the
causal relation of two points.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

# Relative tolerance (times the kernel scale 8 tau^2) below which D is
# declared lightlike; the kernel scale grows with tau, so a fixed absolute
# cutoff would misclassify at large coupling.
LIGHTLIKE_RTOL = 1e-12

# Orthonormality drift above which flag pairs are re-orthonormalized on
# construction.
_FLAG_DRIFT = 1e-12


class Causality(enum.Enum):
    TIMELIKE = "timelike"
    LIGHTLIKE = "lightlike"
    SPACELIKE = "spacelike"


@dataclass(frozen=True)
class ManifoldModel:
    """A model space together with the coupling constant tau.

    ``kind`` is one of ``"circle"``, ``"sphere"``, ``"flag"``; ``f`` is the
    complex dimension for the flag manifold and must be None otherwise.
    """

    kind: str
    tau: float
    f: int | None = None

    def __post_init__(self):
        if self.kind not in ("circle", "sphere", "flag"):
            raise ValueError(f"unknown manifold kind {self.kind!r}")
        if self.kind == "flag":
            if self.f is None or int(self.f) < 3:
                raise ValueError("flag manifold requires f >= 3")
            # tau = 1 is the degenerate boundary where the kernel operator
            # against the Haar measure is PSD; it stays constructible
            if not self.tau >= 1:
                raise ValueError("flag manifold requires tau >= 1")
            object.__setattr__(self, "f", int(self.f))
        else:
            if self.f is not None:
                raise ValueError(f"f is only meaningful for the flag manifold")
            if not self.tau >= 1:
                raise ValueError("circle/sphere require tau >= 1")

    @classmethod
    def circle(cls, tau: float) -> "ManifoldModel":
        return cls("circle", float(tau))

    @classmethod
    def sphere(cls, tau: float) -> "ManifoldModel":
        return cls("sphere", float(tau))

    @classmethod
    def flag(cls, f: int, tau: float) -> "ManifoldModel":
        return cls("flag", float(tau), int(f))

    @property
    def kernel_scale(self) -> float:
        """D(x, x) = 8 tau^2, the natural scale of the kernel."""
        return 8.0 * self.tau**2


def theta_max(model: ManifoldModel) -> float:
    """Opening angle arccos(1 - 2/tau^2) of the lightcones (circle/sphere)."""
    if model.kind == "flag":
        raise ValueError("theta_max is not defined on the flag manifold")
    return float(np.arccos(1.0 - 2.0 / model.tau**2))


def flag_point(u, v) -> np.ndarray:
    """Build a flag point from two complex f-vectors.

    The pair is re-orthonormalized by Gram-Schmidt when its drift from
    orthonormality exceeds 1e-12, so invariants stay machine-checkable
    after perturbation moves.
    """
    u = np.asarray(u, dtype=complex).copy()
    v = np.asarray(v, dtype=complex).copy()
    if u.ndim != 1 or u.shape != v.shape:
        raise ValueError("u and v must be complex vectors of equal length")
    drift = max(
        abs(np.vdot(u, u).real - 1.0),
        abs(np.vdot(v, v).real - 1.0),
        abs(np.vdot(u, v)),
    )
    if drift > _FLAG_DRIFT:
        nu = np.linalg.norm(u)
        if nu == 0.0:
            raise ValueError("u must be nonzero")
        u /= nu
        v = v - np.vdot(u, v) * u
        nv = np.linalg.norm(v)
        if nv < 1e-12:
            raise ValueError("u and v are (numerically) collinear")
        v /= nv
    return np.stack([u, v])


def validate_points(model: ManifoldModel, points: np.ndarray) -> np.ndarray:
    """Check an array of stacked points against the model's invariants."""
    points = np.asarray(points)
    if model.kind == "circle":
        if points.ndim != 1:
            raise ValueError("circle points must be a 1-d array of angles")
        return np.asarray(points, dtype=float)
    if model.kind == "sphere":
        if points.ndim != 2 or points.shape[1] != 3:
            raise ValueError("sphere points must have shape (n, 3)")
        norms = np.linalg.norm(points, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise ValueError("sphere points must be unit vectors (1e-12)")
        return np.asarray(points, dtype=float)
    if points.ndim != 3 or points.shape[1] != 2 or points.shape[2] != model.f:
        raise ValueError(f"flag points must have shape (n, 2, {model.f})")
    u, v = points[:, 0, :], points[:, 1, :]
    err = np.maximum(
        np.abs(np.einsum("ij,ij->i", u.conj(), u).real - 1.0),
        np.abs(np.einsum("ij,ij->i", v.conj(), v).real - 1.0),
    )
    err = np.maximum(err, np.abs(np.einsum("ij,ij->i", u.conj(), v)))
    if np.any(err > 1e-10):
        raise ValueError("flag points must be orthonormal pairs (1e-10)")
    return points


def _as_batch(model: ManifoldModel, x) -> np.ndarray:
    """Promote a single point to a batch of one."""
    x = np.asarray(x)
    if model.kind == "circle":
        return x.reshape(1) if x.ndim == 0 else x
    if model.kind == "sphere":
        return x[None, :] if x.ndim == 1 else x
    return x[None, ...] if x.ndim == 2 else x


def _flag_kernel_parts(a, b, c, d, tau):
    """D from the 2x2 reduction, written in swap-invariant grouped form.

    a, b, c, d are the inner products <u_x,u_y>, <u_x,v_y>, <v_x,u_y>,
    <v_x,v_y>.  With M = diag(1+tau, 1-tau) C diag(1+tau, 1-tau) C*,
    Tr(M) and Tr(M^2) reduce to the 16-term sum below in p = (1+tau)^2,
    q = (1-tau)^2 and the signed product r = (1+tau)(1-tau).  Under
    exchanging x and y the inner products map to (conj a, conj c, conj b,
    conj d), so every grouped term is symmetric up to commutative float
    operations and D(x,y) == D(y,x) bit-for-bit.
    """
    p = (1.0 + tau) ** 2
    q = (1.0 - tau) ** 2
    r = (1.0 + tau) * (1.0 - tau)
    A = a.real**2 + a.imag**2
    B = b.real**2 + b.imag**2
    C = c.real**2 + c.imag**2
    E = d.real**2 + d.imag**2
    R = (a * np.conj(b) * np.conj(c) * d).real
    bc = B + C
    tr = p * A + q * E + r * bc
    tr2 = (
        p * p * A * A
        + q * q * E * E
        + (r * r) * (B * B + C * C)
        + 2.0 * (p * r) * A * bc
        + 2.0 * (q * r) * E * bc
        + 4.0 * (r * r) * R
    )
    return tr2 - 0.5 * tr * tr


def kernel_cross(model: ManifoldModel, xs, ys) -> np.ndarray:
    """Matrix D(x_i, y_j) for two batches of points."""
    xs = _as_batch(model, xs)
    ys = _as_batch(model, ys)
    tau = model.tau
    if model.kind == "circle":
        ex = np.stack([np.cos(xs), np.sin(xs)], axis=1)
        ey = np.stack([np.cos(ys), np.sin(ys)], axis=1)
        cosang = ex @ ey.T
    elif model.kind == "sphere":
        cosang = xs @ ys.T
    else:
        ux, vx = xs[:, 0, :], xs[:, 1, :]
        uy, vy = ys[:, 0, :], ys[:, 1, :]
        a = ux.conj() @ uy.T
        b = ux.conj() @ vy.T
        c = vx.conj() @ uy.T
        d = vx.conj() @ vy.T
        return _flag_kernel_parts(a, b, c, d, tau)
    return 2.0 * tau**2 * (1.0 + cosang) * (2.0 - tau**2 * (1.0 - cosang))


def kernel_matrix(model: ManifoldModel, points) -> np.ndarray:
    """Symmetric Gram matrix of D on one batch of points.

    Explicitly symmetrized so that downstream identities (eigensolves,
    the action/potential consistency check) hold exactly.
    """
    g = kernel_cross(model, points, points)
    return (g + g.T) / 2.0


def lagrangian_cross(model: ManifoldModel, xs, ys) -> np.ndarray:
    return np.maximum(0.0, kernel_cross(model, xs, ys))


def lagrangian_matrix(model: ManifoldModel, points) -> np.ndarray:
    return np.maximum(0.0, kernel_matrix(model, points))


def _flag_canonical_order(x, y):
    """Deterministic argument order so scalar evaluation is exactly symmetric."""
    kx = tuple(np.concatenate([x.real.ravel(), x.imag.ravel()]))
    ky = tuple(np.concatenate([y.real.ravel(), y.imag.ravel()]))
    return (x, y) if kx <= ky else (y, x)


def d_kernel(model: ManifoldModel, x, y) -> float:
    """The kernel D at a single pair of points.

    Symmetric in (x, y) with a fixed evaluation order, so swapping the
    arguments returns the identical float.
    """
    tau = model.tau
    if model.kind == "circle":
        x, y = float(x), float(y)
        c = np.cos(x) * np.cos(y) + np.sin(x) * np.sin(y)
    elif model.kind == "sphere":
        x = np.asarray(x)
        y = np.asarray(y)
        if x.shape != (3,) or y.shape != (3,) or np.iscomplexobj(x) or np.iscomplexobj(y):
            raise ValueError("sphere points must be real 3-vectors")
        c = float(x @ y)
    else:
        x = np.asarray(x)
        y = np.asarray(y)
        if x.shape != (2, model.f) or y.shape != (2, model.f):
            raise ValueError(f"flag points must have shape (2, {model.f})")
        x, y = _flag_canonical_order(x, y)
        a = np.vdot(x[0], y[0])
        b = np.vdot(x[0], y[1])
        cc = np.vdot(x[1], y[0])
        d = np.vdot(x[1], y[1])
        return float(_flag_kernel_parts(a, b, cc, d, tau))
    return float(2.0 * tau**2 * (1.0 + c) * (2.0 - tau**2 * (1.0 - c)))


def lagrangian(model: ManifoldModel, x, y) -> float:
    """L(x, y) = max(0, D(x, y))."""
    return max(0.0, d_kernel(model, x, y))


def d_profile(model: ManifoldModel, theta) -> np.ndarray:
    """D as a function of the angle between two circle/sphere points."""
    if model.kind == "flag":
        raise ValueError("the flag kernel is not a function of one angle")
    c = np.cos(np.asarray(theta, dtype=float))
    return 2.0 * model.tau**2 * (1.0 + c) * (2.0 - model.tau**2 * (1.0 - c))


def lagrangian_profile(model: ManifoldModel, theta) -> np.ndarray:
    return np.maximum(0.0, d_profile(model, theta))


def causal_relation(model: ManifoldModel, x, y, tol: float = LIGHTLIKE_RTOL) -> Causality:
    """Classify a pair as timelike/lightlike/spacelike by the sign of D.

    ``tol`` is relative: |D| <= tol * 8 tau^2 counts as lightlike.
    """
    if tol < 0:
        raise ValueError("tol must be >= 0")
    d = d_kernel(model, x, y)
    if abs(d) <= tol * model.kernel_scale:
        return Causality.LIGHTLIKE
    return Causality.TIMELIKE if d > 0 else Causality.SPACELIKE


def sample_uniform(model: ManifoldModel, n: int, seed) -> np.ndarray:
    """n i.i.d. points from the uniform (Haar) measure, deterministic per seed.

    Circle angles are uniform; sphere points are normalized Gaussians; flag
    pairs are two complex Gaussian vectors orthonormalized by Gram-Schmidt,
    which gives the unitarily invariant measure on orthonormal pairs.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    if model.kind == "circle":
        return rng.uniform(0.0, 2.0 * np.pi, size=n)
    if model.kind == "sphere":
        g = rng.standard_normal((n, 3))
        return g / np.linalg.norm(g, axis=1, keepdims=True)
    f = model.f
    u = rng.standard_normal((n, f)) + 1j * rng.standard_normal((n, f))
    v = rng.standard_normal((n, f)) + 1j * rng.standard_normal((n, f))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    v -= np.einsum("ij,ij->i", u.conj(), v)[:, None] * u
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return np.stack([u, v], axis=1)
