"""Legendre/Fourier helpers shared by the measure and analysis modules."""

from __future__ import annotations

import numpy as np


def legendre_all(lmax: int, x) -> np.ndarray:
    """P_0 .. P_lmax evaluated at x, shape (lmax+1,) + x.shape.

    Three-term recurrence; O(lmax * len(x)), stable on [-1, 1].
    """
    x = np.asarray(x, dtype=float)
    out = np.empty((lmax + 1,) + x.shape)
    out[0] = 1.0
    if lmax == 0:
        return out
    out[1] = x
    for l in range(1, lmax):
        out[l + 1] = ((2 * l + 1) * x * out[l] - l * out[l - 1]) / (l + 1)
    return out


def legendre_band_integrals(lmax: int, a: float, b: float) -> np.ndarray:
    """Exact integrals of P_l over [a, b] for l = 0 .. lmax.

    Uses int P_l = (P_{l+1} - P_{l-1}) / (2l + 1).
    """
    p = legendre_all(lmax + 1, np.array([a, b]))
    out = np.empty(lmax + 1)
    out[0] = b - a
    for l in range(1, lmax + 1):
        out[l] = (p[l + 1, 1] - p[l - 1, 1] - p[l + 1, 0] + p[l - 1, 0]) / (2 * l + 1)
    return out


def panel_gauss_legendre(panels, order: int):
    """Gauss-Legendre nodes/weights on each interval of a sorted breakpoint list.

    Returns flat (nodes, weights) with sum(weights) = total length; exactness
    holds per panel for integrands of polynomial degree <= 2*order - 1.
    """
    panels = np.asarray(panels, dtype=float)
    if panels.ndim != 1 or len(panels) < 2 or np.any(np.diff(panels) <= 0):
        raise ValueError("panels must be a strictly increasing 1-d breakpoint list")
    x, w = np.polynomial.legendre.leggauss(order)
    nodes, weights = [], []
    for a, b in zip(panels[:-1], panels[1:]):
        nodes.append(0.5 * (b - a) * x + 0.5 * (a + b))
        weights.append(0.5 * (b - a) * w)
    return np.concatenate(nodes), np.concatenate(weights)


def fibonacci_sphere(n: int) -> np.ndarray:
    """n quasi-uniform points on S^2 (golden-angle spiral)."""
    i = np.arange(n)
    z = 1.0 - (2.0 * i + 1.0) / n
    phi = np.pi * (3.0 - np.sqrt(5.0)) * i
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    pts = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


def real_sphere_harmonics(points: np.ndarray) -> np.ndarray:
    """Orthonormal real spherical harmonics for l = 1, 2, shape (8, n).

    Normalized against the probability measure dmu = dA / (4 pi), i.e.
    int Y_a Y_b dmu = delta_ab / ... with int Y^2 dA = 1; only the
    vanishing of the integrals matters for moment residuals.
    """
    x, y, z = points[:, 0], points[:, 1], points[:, 2]
    c1 = np.sqrt(3.0 / (4.0 * np.pi))
    c2 = 0.5 * np.sqrt(15.0 / np.pi)
    c20 = 0.25 * np.sqrt(5.0 / np.pi)
    return np.stack(
        [
            c1 * x,
            c1 * y,
            c1 * z,
            c2 * x * y,
            c2 * y * z,
            c2 * x * z,
            0.5 * c2 * (x * x - y * y),
            c20 * (3.0 * z * z - 1.0),
        ]
    )
