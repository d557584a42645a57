"""Probability measures, the action functional and the potentials.

Two measure representations are used: ``WeightedMeasure`` (support points
with non-negative weights summing to one, the optimization variable) and
``DensityMeasure`` (a density against the uniform/Haar homogenizer on a
quadrature grid).  The action of a weighted measure is the double sum

    S = sum_ij w_i w_j L(x_i, x_j),

including the diagonal terms.  The potentials are

    ell(x) = sum_i w_i L(x, x_i)      (clamped kernel)
    d(x)   = sum_i w_i D(x, x_i)      (signed kernel, no clamping).

Density actions are evaluated spectrally: the Lagrangian profile is
expanded in Legendre polynomials (circle: Fourier cosines) with
coefficients obtained by Gauss-Legendre quadrature split exactly at the
lightcone kink, so the double integral reduces to a rapidly converging
series in the zonal moments of the density.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .manifold import (
    ManifoldModel,
    d_profile,
    kernel_cross,
    lagrangian_cross,
    lagrangian_matrix,
    theta_max,
    validate_points,
)
from .spectral import legendre_all, legendre_band_integrals, panel_gauss_legendre

_WEIGHT_TOL = 1e-12
_DENSITY_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class WeightedMeasure:
    """Finitely supported probability measure: points plus weights."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "points", np.asarray(self.points))
        if w.ndim != 1 or len(w) != len(self.points):
            raise ValueError("weights must be 1-d and match the point count")
        if np.any(w < -_WEIGHT_TOL):
            raise ValueError("weights must be non-negative")
        if abs(w.sum() - 1.0) > _WEIGHT_TOL:
            raise ValueError("weights must sum to 1 within 1e-12")
        object.__setattr__(self, "weights", np.maximum(w, 0.0))

    def __len__(self) -> int:
        return len(self.weights)

    @property
    def support_size(self) -> int:
        return int(np.sum(self.weights > _WEIGHT_TOL))

    def pruned(self) -> "WeightedMeasure":
        """Drop zero-weight points and renormalize."""
        keep = self.weights > _WEIGHT_TOL
        if keep.all():
            return self
        w = self.weights[keep]
        return WeightedMeasure(self.points[keep], w / w.sum())


def action(model: ManifoldModel, m: WeightedMeasure) -> float:
    """S = sum_ij w_i w_j L(x_i, x_j), diagonal included."""
    g = lagrangian_matrix(model, m.points)
    return float(m.weights @ g @ m.weights)


def lagrangian_potential(model: ManifoldModel, m: WeightedMeasure, x):
    """ell(x) = sum_i w_i L(x, x_i); vectorized over a batch of x."""
    x = np.asarray(x)
    single = (
        (model.kind == "circle" and x.ndim == 0)
        or (model.kind == "sphere" and x.ndim == 1)
        or (model.kind == "flag" and x.ndim == 2)
    )
    vals = lagrangian_cross(model, x, m.points) @ m.weights
    return float(vals[0]) if single else vals


def kernel_potential(model: ManifoldModel, m: WeightedMeasure, x):
    """d(x) = sum_i w_i D(x, x_i), without clamping."""
    x = np.asarray(x)
    single = (
        (model.kind == "circle" and x.ndim == 0)
        or (model.kind == "sphere" and x.ndim == 1)
        or (model.kind == "flag" and x.ndim == 2)
    )
    vals = kernel_cross(model, x, m.points) @ m.weights
    return float(vals[0]) if single else vals


# ---------------------------------------------------------------------------
# quadrature grids and densities


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    """Quadrature nodes and weights against the normalized uniform measure.

    Sphere grids are tensor products of per-panel Gauss-Legendre nodes in
    cos(theta) with uniform phi nodes; node index = i_theta * n_phi + i_phi.
    """

    kind: str
    nodes: np.ndarray
    weights: np.ndarray
    cos_nodes: np.ndarray | None = None
    cos_weights: np.ndarray | None = None
    n_phi: int = 0
    panels: np.ndarray | None = None

    def integrate(self, values) -> float:
        return float(self.weights @ np.asarray(values, dtype=float))


def quadrature_grid(model: ManifoldModel, resolution: int | None = None,
                    breakpoints=None) -> QuadratureGrid:
    """Uniform-measure quadrature grid on the circle or the sphere.

    ``resolution`` is the node count (circle) or the cos(theta) order
    (sphere; default 200, with 2*resolution phi nodes).  ``breakpoints``
    (sphere only) lists cos(theta) values where the grid panels are split,
    making piecewise integrands exactly integrable per panel.
    """
    if model.kind == "circle":
        n = 2048 if resolution is None else int(resolution)
        if n < 1:
            raise ValueError("resolution must be >= 1")
        nodes = 2.0 * np.pi * np.arange(n) / n
        return QuadratureGrid("circle", nodes, np.full(n, 1.0 / n))
    if model.kind == "sphere":
        ntheta = 200 if resolution is None else int(resolution)
        if breakpoints is None:
            panels = np.array([-1.0, 1.0])
        else:
            panels = np.unique(np.concatenate([[-1.0, 1.0], np.asarray(breakpoints, float)]))
            if panels[0] < -1.0 or panels[-1] > 1.0:
                raise ValueError("breakpoints must lie in [-1, 1]")
        order = max(12, int(np.ceil(ntheta / (len(panels) - 1))))
        c, cw = panel_gauss_legendre(panels, order)
        cw = cw / 2.0  # d(cos)/2 is the normalized zonal measure
        n_phi = 2 * ntheta
        phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
        s = np.sqrt(np.maximum(0.0, 1.0 - c * c))
        nodes = np.empty((len(c) * n_phi, 3))
        nodes[:, 0] = np.repeat(s, n_phi) * np.tile(np.cos(phi), len(c))
        nodes[:, 1] = np.repeat(s, n_phi) * np.tile(np.sin(phi), len(c))
        nodes[:, 2] = np.repeat(c, n_phi)
        weights = np.repeat(cw / n_phi, n_phi)
        return QuadratureGrid("sphere", nodes, weights, c, cw, n_phi, panels)
    raise ValueError("quadrature grids exist for circle and sphere only; "
                     "flag integrals use Monte Carlo")


@dataclass(frozen=True, eq=False)
class DensityMeasure:
    """Non-negative density against the homogenizer on a quadrature grid."""

    grid: QuadratureGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.shape != self.grid.weights.shape:
            raise ValueError("values must match the grid nodes")
        if np.any(v < -_DENSITY_TOL):
            raise ValueError("density values must be non-negative")
        total = self.grid.integrate(v)
        if abs(total - 1.0) > _DENSITY_TOL:
            raise ValueError(f"density mass {total} is not 1 within 1e-8")

    @classmethod
    def from_profile(cls, grid: QuadratureGrid, profile) -> "DensityMeasure":
        """Expand a zonal profile (one value per cos(theta) node)."""
        profile = np.asarray(profile, dtype=float)
        if grid.kind == "circle":
            return cls(grid, profile)
        if profile.shape != grid.cos_nodes.shape:
            raise ValueError("profile must match the cos(theta) nodes")
        return cls(grid, np.repeat(profile, grid.n_phi))

    def zonal_profile(self) -> np.ndarray:
        """Per cos(theta)-node values; raises if the density is not zonal."""
        if self.grid.kind == "circle":
            return self.values
        v = self.values.reshape(len(self.grid.cos_nodes), self.grid.n_phi)
        if np.max(np.abs(v - v[:, :1])) > 1e-12:
            raise ValueError("density is not zonal")
        return v[:, 0].copy()


def uniform_density(model: ManifoldModel, resolution: int | None = None) -> DensityMeasure:
    grid = quadrature_grid(model, resolution)
    return DensityMeasure(grid, np.ones_like(grid.weights))


def volume_action(model: ManifoldModel) -> float:
    """Closed-form action of the normalized volume measure.

    Sphere: 4 - 4/(3 tau^2).  Circle: (1/pi) * int_0^theta_max D,
    integrated from the Fourier form of D.
    """
    tau = model.tau
    if model.kind == "sphere":
        return 4.0 - 4.0 / (3.0 * tau**2)
    if model.kind == "circle":
        tm = theta_max(model)
        return (
            (4 * tau**2 - tau**4) * tm
            + 4 * tau**2 * np.sin(tm)
            + 0.5 * tau**4 * np.sin(2 * tm)
        ) / np.pi
    raise ValueError("no closed-form volume action on the flag manifold")


def _lagrangian_legendre_coeffs(model: ManifoldModel, lmax: int) -> np.ndarray:
    """c_l with L(theta_xy) = sum_l c_l P_l(cos theta_xy), machine-exact.

    L vanishes below the kink cos(theta_max) and is a degree-2 polynomial
    above it, so Gauss-Legendre on [cos(theta_max), 1] of sufficient order
    integrates D * P_l exactly for every l <= lmax.
    """
    ckink = max(-1.0, 1.0 - 2.0 / model.tau**2)
    if ckink >= 1.0:
        return np.zeros(lmax + 1)
    x, w = np.polynomial.legendre.leggauss(lmax // 2 + 4)
    c = 0.5 * (1.0 - ckink) * x + 0.5 * (1.0 + ckink)
    w = 0.5 * (1.0 - ckink) * w
    dvals = 2 * model.tau**2 * (1 + c) * (2 - model.tau**2 * (1 - c))
    p = legendre_all(lmax, c)
    ell = np.arange(lmax + 1)
    return (2 * ell + 1) / 2.0 * (p @ (w * dvals))


def _lagrangian_fourier_coeffs(model: ManifoldModel, nmax: int) -> np.ndarray:
    """a_n with L(delta) = a_0 + sum_n a_n cos(n delta) on the circle."""
    tm = theta_max(model)
    order = int(1.3 * nmax) + 48
    x, w = np.polynomial.legendre.leggauss(order)
    t = 0.5 * tm * (x + 1.0)
    w = 0.5 * tm * w
    dvals = d_profile(model, t)
    n = np.arange(nmax + 1)
    moments = np.cos(np.outer(n, t)) @ (w * dvals)
    coeffs = (2.0 / np.pi) * moments
    coeffs[0] /= 2.0
    return coeffs


def _zonal_legendre_moments(dm: DensityMeasure, lmax: int) -> np.ndarray:
    """fhat_l = int f(x) P_l(cos theta_x) dmu, exact for per-panel constants."""
    grid = dm.grid
    profile = dm.zonal_profile()
    panels = grid.panels
    order = len(grid.cos_nodes) // (len(panels) - 1)
    per_panel = profile.reshape(len(panels) - 1, order)
    if np.max(np.abs(per_panel - per_panel[:, :1])) <= 1e-13:
        # piecewise-constant density: use exact antiderivative integrals
        out = np.zeros(lmax + 1)
        for k in range(len(panels) - 1):
            out += per_panel[k, 0] * 0.5 * legendre_band_integrals(
                lmax, panels[k], panels[k + 1]
            )
        return out
    p = legendre_all(lmax, grid.cos_nodes)
    return p @ (grid.cos_weights * profile)


def density_action(model: ManifoldModel, dm: DensityMeasure, lmax: int = 480) -> float:
    """Action of a density measure d(rho) = f d(mu).

    Evaluated as sum_l c_l * fhat_l^2 (circle: the Fourier analogue); only
    zonal sphere densities are supported, which covers the volume measure
    and the banded constructions used here.
    """
    if model.kind == "flag":
        raise ValueError("density measures are not supported on the flag manifold")
    if model.kind == "sphere":
        if dm.grid.kind != "sphere":
            raise ValueError("grid/model mismatch")
        cl = _lagrangian_legendre_coeffs(model, lmax)
        fl = _zonal_legendre_moments(dm, lmax)
        return float(cl @ (fl * fl))
    if dm.grid.kind != "circle":
        raise ValueError("grid/model mismatch")
    an = _lagrangian_fourier_coeffs(model, lmax)
    theta = dm.grid.nodes
    fw = dm.grid.weights * dm.values
    n = np.arange(lmax + 1)
    cosm = np.cos(np.outer(n, theta)) @ fw
    sinm = np.sin(np.outer(n, theta)) @ fw
    return float(an @ (cosm**2 + sinm**2))


# ---------------------------------------------------------------------------
# serialization (shared with the CLI)


def measure_to_dict(model: ManifoldModel, m: WeightedMeasure) -> dict:
    d = {"manifold": model.kind, "tau": model.tau, "weights": m.weights.tolist()}
    if model.kind == "circle":
        d["points"] = [[float(a)] for a in m.points]
    elif model.kind == "sphere":
        d["points"] = [[float(c) for c in p] for p in m.points]
    else:
        d["f"] = model.f
        d["points"] = [
            {
                "u": [[float(z.real), float(z.imag)] for z in p[0]],
                "v": [[float(z.real), float(z.imag)] for z in p[1]],
            }
            for p in m.points
        ]
    return d


def measure_from_dict(d: dict) -> tuple[ManifoldModel, WeightedMeasure]:
    kind = d["manifold"]
    if kind == "flag":
        model = ManifoldModel.flag(d["f"], d["tau"])
        pts = []
        for p in d["points"]:
            u = np.array([complex(re, im) for re, im in p["u"]])
            v = np.array([complex(re, im) for re, im in p["v"]])
            pts.append(np.stack([u, v]))
        points = np.array(pts)
    else:
        model = ManifoldModel(kind, float(d["tau"]))
        raw = np.asarray(d["points"], dtype=float)
        points = raw[:, 0] if kind == "circle" else raw
    points = validate_points(model, points)
    return model, WeightedMeasure(points, np.asarray(d["weights"], dtype=float))


def save_measure(path, model: ManifoldModel, m: WeightedMeasure) -> None:
    with open(path, "w") as fh:
        json.dump(measure_to_dict(model, m), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_measure(path) -> tuple[ManifoldModel, WeightedMeasure]:
    with open(path) as fh:
        return measure_from_dict(json.load(fh))
