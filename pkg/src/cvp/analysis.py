"""Certification of candidate minimizers and action bounds.

A minimizer must satisfy the Euler-Lagrange condition (the potential ell
is constant on the support and nowhere smaller), and the Gram matrix of L
on any finite subset of its support must be positive semi-definite.  A
measure is classified generically timelike when no support pair is
spacelike and the signed potential d is globally constant.

Lower bounds: the constant eigenvalue nu_0 of the kernel operator against
the uniform measure (valid while that operator is positive semi-definite),
and a dominated difference of two heat kernels K <= L with positive
spectral coefficients, giving S_K = lambda (1 - delta).  Upper bounds:
actions of test measures (volume measure, equal-weight packings, the best
measure found by annealing).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .manifold import (
    ManifoldModel,
    kernel_cross,
    kernel_matrix,
    lagrangian_matrix,
    lagrangian_profile,
    sample_uniform,
    theta_max,
)
from .measure import WeightedMeasure, action, volume_action
from .spectral import fibonacci_sphere, legendre_all, real_sphere_harmonics

_FLAG_TEST_SEED = 20240  # fixed stream for the deterministic flag test grid


class Classification(enum.Enum):
    GENERICALLY_TIMELIKE = "generically_timelike"
    SINGULAR_CANDIDATE = "singular_candidate"
    UNCLASSIFIED = "unclassified"


@dataclass(frozen=True)
class CertificateReport:
    action: float
    el_residual: float
    gram_min_eig: float
    classification: Classification
    moment_residuals: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "action": self.action,
            "el_residual": self.el_residual,
            "gram_min_eig": self.gram_min_eig,
            "classification": self.classification.value,
            "moment_residuals": list(self.moment_residuals),
        }


def _test_grid(model: ManifoldModel, n: int):
    if model.kind == "circle":
        return 2.0 * np.pi * np.arange(n) / n
    if model.kind == "sphere":
        return fibonacci_sphere(n)
    return sample_uniform(model, n, seed=_FLAG_TEST_SEED)


def _moment_residuals(model: ManifoldModel, m: WeightedMeasure) -> tuple[float, ...]:
    """|integral of the closed-form eigenfunctions| against the measure.

    Circle: e^{i theta}, e^{2 i theta}; sphere: real harmonics for l = 1, 2.
    No closed-form basis is implemented on the flag manifold, so the tuple
    is empty there.
    """
    if model.kind == "circle":
        z = np.exp(1j * m.points)
        return (
            float(abs(np.sum(m.weights * z))),
            float(abs(np.sum(m.weights * z * z))),
        )
    if model.kind == "sphere":
        ylm = real_sphere_harmonics(m.points)
        return tuple(float(abs(v)) for v in ylm @ m.weights)
    return ()


def certify(
    model: ManifoldModel,
    m: WeightedMeasure,
    test_grid_size: int = 2048,
    tol: float = 1e-6,
) -> CertificateReport:
    """Euler-Lagrange residual, Gram eigenvalue and causal classification.

    The classification uses the relative tolerance tol * 8 tau^2 on both
    the pairwise-sign condition and the constancy of d over a deterministic
    test grid; use ~1e-6 for exact constructions and ~1e-2 for annealed
    measures.
    """
    scale = model.kernel_scale
    w = m.weights
    kmat = kernel_matrix(model, m.points)
    gmat = np.maximum(0.0, kmat)
    S = float(w @ gmat @ w)
    ell_supp = gmat @ w
    supp = w > 0
    grid = _test_grid(model, test_grid_size)
    cross = kernel_cross(model, grid, m.points)
    ell_grid = np.maximum(0.0, cross) @ w
    d_grid = cross @ w
    el_residual = float(np.max(np.abs(ell_supp[supp] - S))) + max(
        0.0, S - float(np.min(ell_grid))
    )
    pairs_ok = bool(np.min(kmat) >= -tol * scale)
    d_const = bool(np.max(np.abs(d_grid - S)) <= tol * scale)
    if pairs_ok and d_const:
        cls = Classification.GENERICALLY_TIMELIKE
    elif not pairs_ok:
        cls = Classification.SINGULAR_CANDIDATE
    else:
        cls = Classification.UNCLASSIFIED
    eigs = np.linalg.eigvalsh(gmat)
    return CertificateReport(
        action=S,
        el_residual=el_residual,
        gram_min_eig=float(eigs[0]),
        classification=cls,
        moment_residuals=_moment_residuals(model, m),
    )


def gt_obstruction_conflict(model: ManifoldModel, report: CertificateReport) -> bool:
    """True when a generically-timelike certificate contradicts the
    antipodal obstruction (tau > sqrt 2), flagging an inconsistency."""
    if model.kind == "flag":
        return False
    return (
        report.classification is Classification.GENERICALLY_TIMELIKE
        and antipodal_obstruction(model)
    )


def gram_min_eigenvalue(model: ManifoldModel, points) -> float:
    """Smallest eigenvalue of (L(x_i, x_j))_ij by symmetric eigensolve."""
    n = len(points)
    if not 1 <= n <= 1000:
        raise ValueError("need 1 <= n <= 1000 points")
    return float(np.linalg.eigvalsh(lagrangian_matrix(model, points))[0])


# ---------------------------------------------------------------------------
# spectral closed forms


@dataclass(frozen=True)
class SpectralEigenvalues:
    nu0: float
    nu1: float | None
    nu2: float | None


def spectral_closed_form(model: ManifoldModel) -> SpectralEigenvalues:
    """Eigenvalues of the kernel operator against the uniform measure.

    Circle: (4 tau^2 - tau^4, 2 tau^2, tau^4 / 2); sphere:
    (4 tau^2 - 4 tau^4 / 3, 4 tau^2 / 3, 4 tau^4 / 15); flag: only the
    constant eigenvalue 2 (3f + 6 f tau^2 - (2+f) tau^4 - 6) / (f (f^2-1)).
    """
    t2 = model.tau**2
    t4 = t2 * t2
    if model.kind == "circle":
        return SpectralEigenvalues(4 * t2 - t4, 2 * t2, t4 / 2)
    if model.kind == "sphere":
        return SpectralEigenvalues(4 * t2 - 4 * t4 / 3, 4 * t2 / 3, 4 * t4 / 15)
    f = model.f
    nu0 = 2.0 * (3 * f + 6 * f * t2 - (2 + f) * t4 - 6) / (f * (f * f - 1))
    return SpectralEigenvalues(nu0, None, None)


def kernel_eigenvalues_by_quadrature(model: ManifoldModel) -> tuple[float, float, float]:
    """(nu0, nu1, nu2) by numerically integrating D against the eigenbasis.

    Guards the hard-coded closed forms: circle Fourier modes on a uniform
    grid (exact for trigonometric polynomials), sphere Legendre modes by
    Gauss-Legendre (exact for polynomials in cos theta).
    """
    tau = model.tau
    if model.kind == "circle":
        n = 4096
        t = 2.0 * np.pi * np.arange(n) / n
        d = 2 * tau**2 * (1 + np.cos(t)) * (2 - tau**2 * (1 - np.cos(t)))
        nu0 = float(np.mean(d))
        nu1 = float(np.mean(d * np.cos(t)))
        nu2 = float(np.mean(d * np.cos(2 * t)))
        return nu0, nu1, nu2
    if model.kind == "sphere":
        x, wq = np.polynomial.legendre.leggauss(64)
        d = 2 * tau**2 * (1 + x) * (2 - tau**2 * (1 - x))
        p = legendre_all(2, x)
        vals = 0.5 * (p @ (wq * d))
        return float(vals[0]), float(vals[1]), float(vals[2])
    raise ValueError("no closed-form eigenbasis on the flag manifold")


@dataclass(frozen=True)
class Nu0Bound:
    value: float
    valid: bool


def nu0_lower_bound(model: ManifoldModel) -> Nu0Bound:
    """S_min >= nu0, valid while the kernel operator is PSD.

    Circle: tau <= 2; sphere: tau <= sqrt(3); flag: never valid (the
    operator has negative eigenvalues for every tau > 1).
    """
    nu0 = spectral_closed_form(model).nu0
    if model.kind == "circle":
        return Nu0Bound(nu0, model.tau <= 2.0)
    if model.kind == "sphere":
        return Nu0Bound(nu0, model.tau <= math.sqrt(3.0))
    return Nu0Bound(nu0, False)


def antipodal_obstruction(model: ManifoldModel) -> bool:
    """True iff tau > sqrt(2): the closed lightcone is a cap plus the
    antipode, with the two caps disjoint, so no generically timelike
    minimizer exists."""
    if model.kind == "flag":
        raise ValueError("the antipodal obstruction applies to circle/sphere")
    return model.tau > math.sqrt(2.0)


def flag_gt_threshold(f: int) -> float:
    """Coupling above which no generically timelike flag minimizer exists:
    tau* = sqrt((3f + 2 sqrt(3 (f^2 - 1))) / (2 + f))."""
    f = int(f)
    if f < 3:
        raise ValueError("f must be >= 3")
    return math.sqrt((3 * f + 2 * math.sqrt(3 * (f * f - 1))) / (2 + f))


# ---------------------------------------------------------------------------
# heat-kernel lower bound


def _heat_lmax(t: float, series_tol: float) -> int:
    l = 0
    while (2 * l + 1) * math.exp(-t * l * (l + 1)) >= series_tol:
        l += 1
        if l > 200000:
            raise ValueError("heat-kernel series does not truncate; t too small")
    return l


def heat_kernel(t: float, theta, series_tol: float = 1e-12):
    """h_t(theta) = sum_l (2l+1) exp(-t l (l+1)) P_l(cos theta).

    Normalized so the double integral against the uniform measure is 1;
    truncated once the term bound (2l+1) exp(-t l (l+1)) drops below
    series_tol.
    """
    if t <= 0:
        raise ValueError("t must be > 0")
    lmax = _heat_lmax(t, series_tol)
    theta_arr = np.atleast_1d(np.asarray(theta, dtype=float))
    ell = np.arange(lmax + 1)
    coeff = (2 * ell + 1) * np.exp(-t * ell * (ell + 1))
    vals = coeff @ legendre_all(lmax, np.cos(theta_arr))
    return float(vals[0]) if np.ndim(theta) == 0 else vals


@dataclass(frozen=True)
class HeatKernelBound:
    t1: float
    t2: float
    delta: float
    lam: float
    s_k: float
    dominated: bool

    def to_dict(self) -> dict:
        return {
            "t1": self.t1,
            "t2": self.t2,
            "delta": self.delta,
            "lambda": self.lam,
            "s_k": self.s_k,
            "dominated": self.dominated,
        }


def heat_kernel_bound(
    model: ManifoldModel, t1: float, t2: float, check_grid: int = 10000
) -> HeatKernelBound:
    """Lower bound from K = lambda (h_t1 - delta h_t2) calibrated so that
    K(0) = L(0) and K(theta_max) = 0.

    ``dominated`` records whether K <= L holds on a check grid over [0, pi]
    (tolerance 1e-9); S_K = lambda (1 - delta) is a certified lower bound
    only in that case.  Positivity of the spectral coefficients
    lambda (exp(-t1 l(l+1)) - delta exp(-t2 l(l+1))) holds by construction
    when delta < 1 and t1 < t2.
    """
    if model.kind != "sphere":
        raise ValueError("the heat-kernel bound is formulated on the sphere")
    if not 0 < t1 < t2:
        raise ValueError("need 0 < t1 < t2")
    tm = theta_max(model)
    h1m, h2m = heat_kernel(t1, tm), heat_kernel(t2, tm)
    h10, h20 = heat_kernel(t1, 0.0), heat_kernel(t2, 0.0)
    delta = h1m / h2m
    denom = h10 - delta * h20
    lam = model.kernel_scale / denom if denom != 0 else math.inf
    s_k = lam * (1.0 - delta)
    theta = np.linspace(0.0, np.pi, check_grid)
    kvals = lam * (heat_kernel(t1, theta) - delta * heat_kernel(t2, theta))
    lvals = lagrangian_profile(model, theta)
    dominated = bool(
        np.all(kvals <= lvals + 1e-9) and 0.0 < delta < 1.0 and 0.0 < lam < math.inf
    )
    return HeatKernelBound(t1, t2, delta, lam, s_k, dominated)


def optimize_heat_params(
    model: ManifoldModel, t_grid, check_grid: int = 10000
) -> HeatKernelBound | None:
    """Grid search over dominated (t1, t2) pairs maximizing S_K.

    The heat-kernel profiles are evaluated once per grid time and shared
    across pairs.  Returns None when no pair on the grid is dominated
    (no bound).
    """
    if model.kind != "sphere":
        raise ValueError("the heat-kernel bound is formulated on the sphere")
    t_grid = sorted(float(t) for t in t_grid)
    if not t_grid:
        return None
    tm = theta_max(model)
    theta = np.linspace(0.0, np.pi, check_grid)
    lvals = lagrangian_profile(model, theta)
    prof = {t: heat_kernel(t, theta) for t in t_grid}
    at_tm = {t: heat_kernel(t, tm) for t in t_grid}
    at_0 = {t: heat_kernel(t, 0.0) for t in t_grid}
    scale = model.kernel_scale
    best: HeatKernelBound | None = None
    for i, t1 in enumerate(t_grid):
        for t2 in t_grid[i + 1:]:
            delta = at_tm[t1] / at_tm[t2]
            denom = at_0[t1] - delta * at_0[t2]
            if denom == 0:
                continue
            lam = scale / denom
            s_k = lam * (1.0 - delta)
            if best is not None and s_k <= best.s_k:
                continue
            kvals = lam * (prof[t1] - delta * prof[t2])
            dominated = bool(
                np.all(kvals <= lvals + 1e-9)
                and 0.0 < delta < 1.0
                and 0.0 < lam < math.inf
            )
            if dominated:
                best = HeatKernelBound(t1, t2, delta, lam, s_k, dominated)
    return best


# ---------------------------------------------------------------------------
# upper bounds and packings


def tammes_upper_bound(model: ManifoldModel, packing) -> float:
    """Action of the equal-weight measure on a packing (an upper bound for
    the minimal action; the caller minimizes over ingested packings)."""
    if model.kind != "sphere":
        raise ValueError("packing bounds are formulated on the sphere")
    pts = np.asarray(packing, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError("packing must be an array of unit 3-vectors")
    norms = np.linalg.norm(pts, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-6):
        raise ValueError("packing points must be unit vectors within 1e-6")
    pts = pts / norms[:, None]
    k = len(pts)
    return action(model, WeightedMeasure(pts, np.full(k, 1.0 / k)))


def load_packing(path) -> np.ndarray:
    """Parse a packing file: one point per line, three whitespace-separated
    coordinates; '#' starts a comment; points within 1e-6 of unit norm are
    normalized, anything else is rejected."""
    pts = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            parts = body.split()
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 coordinates")
            try:
                vec = [float(p) for p in parts]
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: bad coordinate") from exc
            pts.append(vec)
    if not pts:
        raise ValueError(f"{path}: empty packing")
    arr = np.asarray(pts, dtype=float)
    norms = np.linalg.norm(arr, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-6):
        raise ValueError(f"{path}: points must be unit vectors within 1e-6")
    return arr / norms[:, None]


# ---------------------------------------------------------------------------
# flag-manifold Monte Carlo


@dataclass(frozen=True)
class MonteCarloEstimate:
    estimate: float
    std_error: float


def nu0_monte_carlo(model: ManifoldModel, n: int, seed) -> MonteCarloEstimate:
    """Sample mean of D over n i.i.d. Haar pairs.

    The counter-based Philox stream keyed by the seed keeps parallel
    evaluation reproducible; the standard error comes from the sample
    variance.
    """
    if model.kind != "flag":
        raise ValueError("Monte Carlo nu0 is for the flag manifold")
    if n < 2:
        raise ValueError("n must be >= 2")
    from .manifold import _flag_kernel_parts

    rng = np.random.Generator(np.random.Philox(key=seed))
    f = model.f

    def draw(k):
        u = rng.standard_normal((k, f)) + 1j * rng.standard_normal((k, f))
        v = rng.standard_normal((k, f)) + 1j * rng.standard_normal((k, f))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        v -= np.einsum("ij,ij->i", u.conj(), v)[:, None] * u
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        return u, v

    ux, vx = draw(n)
    uy, vy = draw(n)
    a = np.einsum("ij,ij->i", ux.conj(), uy)
    b = np.einsum("ij,ij->i", ux.conj(), vy)
    c = np.einsum("ij,ij->i", vx.conj(), uy)
    d = np.einsum("ij,ij->i", vx.conj(), vy)
    vals = _flag_kernel_parts(a, b, c, d, model.tau)
    return MonteCarloEstimate(
        float(np.mean(vals)), float(np.std(vals, ddof=1) / math.sqrt(n))
    )


# ---------------------------------------------------------------------------
# assembled bounds report


@dataclass(frozen=True)
class BoundsReport:
    tau: float
    nu0: Nu0Bound
    heat: HeatKernelBound | None
    volume_upper: float
    tammes_upper: float | None
    best_found: float | None

    def lower_bounds(self) -> list[float]:
        out = []
        if self.nu0.valid:
            out.append(self.nu0.value)
        if self.heat is not None and self.heat.dominated:
            out.append(self.heat.s_k)
        return out

    def upper_bounds(self) -> list[float]:
        out = [self.volume_upper]
        if self.tammes_upper is not None:
            out.append(self.tammes_upper)
        if self.best_found is not None:
            out.append(self.best_found)
        return out

    def sandwich_gap(self) -> float:
        """min(upper) - max(lower); non-negative (to 1e-9) when consistent."""
        lowers = self.lower_bounds()
        if not lowers:
            return math.inf
        return min(self.upper_bounds()) - max(lowers)

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "nu0": {"value": self.nu0.value, "valid": self.nu0.valid},
            "heat_kernel": None if self.heat is None else self.heat.to_dict(),
            "volume_upper": self.volume_upper,
            "tammes_upper": self.tammes_upper,
            "best_found": self.best_found,
        }


def bounds_report(
    model: ManifoldModel,
    packings=(),
    best_found: float | None = None,
    t_grid=None,
    check_grid: int = 10000,
) -> BoundsReport:
    """Assemble all closed-form bounds at one tau (sphere)."""
    if model.kind != "sphere":
        raise ValueError("bounds reports are formulated on the sphere")
    if t_grid is None:
        t_grid = np.geomspace(0.01, 2.0, 14)
    tammes = None
    for packing in packings:
        val = tammes_upper_bound(model, packing)
        tammes = val if tammes is None else min(tammes, val)
    return BoundsReport(
        tau=model.tau,
        nu0=nu0_lower_bound(model),
        heat=optimize_heat_params(model, t_grid, check_grid),
        volume_upper=volume_action(model),
        tammes_upper=tammes,
        best_found=best_found,
    )
