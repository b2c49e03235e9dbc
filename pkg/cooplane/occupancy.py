"""
Rotated-rectangle footprints, exact rectangle distance and dual separation certificates.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from .core import VehicleGeometry, VehicleState

CERTIFICATE_TOL = 1e-6


@dataclass(frozen=True)
class OccupancyPolytope:
    """Half-space form ``{p : A p <= b}`` of a vehicle footprint."""

    A: np.ndarray
    b: np.ndarray
    state: Optional[VehicleState] = field(default=None, compare=False)
    geometry: Optional[VehicleGeometry] = field(default=None, compare=False)

    def contains(self, point, tol: float = 1e-9) -> bool:
        return bool(np.all(self.A @ np.asarray(point, dtype=float) <= self.b + tol))

    @property
    def vertices(self) -> np.ndarray:
        """Corners in counter-clockwise order, each the intersection of two adjacent rows."""
        corners = []
        for i in range(4):
            j = (i + 1) % 4
            corners.append(np.linalg.solve(self.A[[i, j]], self.b[[i, j]]))
        return np.array(corners)


@dataclass(frozen=True)
class DualCertificate:
    lam: np.ndarray
    mu: np.ndarray
    rho: np.ndarray

    @classmethod
    def zeros(cls) -> "DualCertificate":
        return cls(lam=np.zeros(4), mu=np.zeros(4), rho=np.zeros(2))


@dataclass(frozen=True)
class CertificateResiduals:
    """Violation of each dual separation condition; all zero for an exact certificate."""

    distance: float
    ego_balance: float
    obstacle_balance: float
    norm: float
    lam_sign: float
    mu_sign: float
    value: float
    tol: float = CERTIFICATE_TOL

    @property
    def max_residual(self) -> float:
        return max(self.distance, self.ego_balance, self.obstacle_balance, self.norm, self.lam_sign, self.mu_sign)

    @property
    def valid(self) -> bool:
        return self.max_residual <= self.tol


def rotation_rows(psi):
    """Rows of ``A`` for heading ``psi``; broadcasts over arrays of headings."""
    c, s = np.cos(psi), np.sin(psi)
    return np.stack([
        np.stack([c, s], axis=-1),
        np.stack([-s, c], axis=-1),
        np.stack([-c, -s], axis=-1),
        np.stack([s, -c], axis=-1),
    ], axis=-2)


def rotation_rows_dpsi(psi):
    """Derivative of :func:`rotation_rows` with respect to ``psi``."""
    c, s = np.cos(psi), np.sin(psi)
    return np.stack([
        np.stack([-s, c], axis=-1),
        np.stack([-c, -s], axis=-1),
        np.stack([s, -c], axis=-1),
        np.stack([c, s], axis=-1),
    ], axis=-2)


def half_extents(geometry: VehicleGeometry) -> np.ndarray:
    return np.array([0.5 * geometry.length, 0.5 * geometry.width, 0.5 * geometry.length, 0.5 * geometry.width])


def occupancy_polytope(state: VehicleState, geometry: VehicleGeometry) -> OccupancyPolytope:
    A = rotation_rows(state.psi)
    b = half_extents(geometry) + A @ np.array([state.x, state.y])
    return OccupancyPolytope(A=A, b=b, state=state, geometry=geometry)


def _point_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    ab = b - a
    t = np.clip(np.dot(p - a, ab) / np.dot(ab, ab), 0.0, 1.0)
    return float(np.linalg.norm(p - (a + t * ab)))


def _separated_on_axes(v1: np.ndarray, v2: np.ndarray, axes: np.ndarray) -> bool:
    for axis in axes:
        p1 = v1 @ axis
        p2 = v2 @ axis
        if p1.max() < p2.min() or p2.max() < p1.min():
            return True
    return False


def rect_distance(r1: OccupancyPolytope, r2: OccupancyPolytope) -> float:
    """Exact Euclidean distance between two rectangles, zero when they intersect."""
    v1 = r1.vertices
    v2 = r2.vertices
    if not _separated_on_axes(v1, v2, np.vstack([r1.A[:2], r2.A[:2]])):
        return 0.0
    best = np.inf
    for points, corners in ((v1, v2), (v2, v1)):
        for p in points:
            for i in range(4):
                best = min(best, _point_segment_distance(p, corners[i], corners[(i + 1) % 4]))
    return float(best)


def check_certificate(
    r1: OccupancyPolytope,
    r2: OccupancyPolytope,
    cert: DualCertificate,
    d_min: float,
    tol: float = CERTIFICATE_TOL,
) -> CertificateResiduals:
    lam = np.asarray(cert.lam, dtype=float)
    mu = np.asarray(cert.mu, dtype=float)
    rho = np.asarray(cert.rho, dtype=float)
    value = float(-r1.b @ lam - r2.b @ mu)
    return CertificateResiduals(
        distance=max(d_min - value, 0.0),
        ego_balance=float(np.max(np.abs(r1.A.T @ lam + rho))),
        obstacle_balance=float(np.max(np.abs(r2.A.T @ mu - rho))),
        norm=max(float(rho @ rho) - 1.0, 0.0),
        lam_sign=max(-float(lam.min()), 0.0),
        mu_sign=max(-float(mu.min()), 0.0),
        value=value,
        tol=tol,
    )


def _split_multipliers(A: np.ndarray, direction: np.ndarray) -> np.ndarray:
    # rows 2 and 3 are the negations of rows 0 and 1
    c0 = float(A[0] @ direction)
    c1 = float(A[1] @ direction)
    return np.array([max(c0, 0.0), max(c1, 0.0), max(-c0, 0.0), max(-c1, 0.0)])


def certificate_for_direction(r1: OccupancyPolytope, r2: OccupancyPolytope, rho: np.ndarray) -> Tuple[DualCertificate, float]:
    """Best certificate for a fixed ``rho``, with ``rho`` pointing from ``r2`` towards ``r1``."""
    lam = _split_multipliers(r1.A, -rho)
    mu = _split_multipliers(r2.A, rho)
    value = float(-r1.b @ lam - r2.b @ mu)
    return DualCertificate(lam=lam, mu=mu, rho=rho), value


def find_certificate(r1: OccupancyPolytope, r2: OccupancyPolytope, grid: int = 720) -> Tuple[DualCertificate, float]:
    """
    Search for the dual-optimal separation certificate of two rectangles.

    For a fixed ``rho`` the best ``lam`` and ``mu`` have a closed form, so only the
    direction of a unit ``rho`` is searched: a coarse grid over the circle followed by
    a bounded scalar refinement. When the rectangles intersect the optimum is the
    all-zero certificate with value 0.

    Returns:
        The certificate and its dual value ``-b1'lam - b2'mu``, which equals the
        rectangle distance at the optimum.
    """
    def negative_value(theta: float) -> float:
        rho = np.array([np.cos(theta), np.sin(theta)])
        return -certificate_for_direction(r1, r2, rho)[1]

    thetas = np.linspace(0.0, 2.0 * np.pi, grid, endpoint=False)
    values = np.array([negative_value(theta) for theta in thetas])
    best = int(np.argmin(values))
    step = 2.0 * np.pi / grid
    result = minimize_scalar(
        negative_value,
        bounds=(thetas[best] - step, thetas[best] + step),
        method="bounded",
        options={"xatol": 1e-12},
    )
    theta = float(result.x) if result.fun <= values[best] else float(thetas[best])
    cert, value = certificate_for_direction(r1, r2, np.array([np.cos(theta), np.sin(theta)]))
    if value <= 0.0:
        return DualCertificate.zeros(), 0.0
    return cert, value
