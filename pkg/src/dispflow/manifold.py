"""Target geometry: the unit sphere in R^3 as an embedded Kaehler manifold.

Everything is vectorised: points and vectors are arrays whose last axis has
length 3, so a single call handles one point or a whole curve.

The :class:`Sphere` object bundles the operations a general embedded
Kaehler target would need (tangent projection, complex structure, nearest
point projection from a tube, normal frame, curvature). Module-level
functions delegate to a default instance.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConstraintViolation, TubeExitError

TOL_CONSTRAINT = 1e-12
TOL_TANGENCY = 1e-10


def _dot(x, y):
    return np.einsum("...i,...i->...", x, y)


@dataclass(frozen=True)
class ManifoldDescriptor:
    name: str = "S2"
    ambient_dim: int = 3
    tube_radius: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.tube_radius < 1.0:
            raise ValueError(
                f"tube_radius must lie in (0, 1) for the unit sphere, got {self.tube_radius}"
            )


class Sphere:
    """Unit sphere S^2 in R^3 with J(p)v = p x v."""

    def __init__(self, tube_radius=0.5, tol_constraint=TOL_CONSTRAINT,
                 tol_tangency=TOL_TANGENCY):
        self.descriptor = ManifoldDescriptor("S2", 3, tube_radius)
        self.tol_constraint = tol_constraint
        self.tol_tangency = tol_tangency

    @property
    def tube_radius(self):
        return self.descriptor.tube_radius

    # -- checks ---------------------------------------------------------
    def check_on_manifold(self, p, factor=10.0):
        p = np.asarray(p, dtype=float)
        dev = np.max(np.abs(np.linalg.norm(p, axis=-1) - 1.0), initial=0.0)
        if dev > factor * self.tol_constraint:
            raise ConstraintViolation(
                f"point deviates from the unit sphere by {dev:.3e} "
                f"(> {factor:g} x tol_constraint = {factor * self.tol_constraint:.1e})"
            )
        return p

    def check_tangent(self, p, v, factor=10.0):
        dev = np.max(np.abs(_dot(p, v)), initial=0.0)
        if dev > factor * self.tol_tangency:
            raise ConstraintViolation(
                f"vector is not tangent: |<v, p>| = {dev:.3e} "
                f"(> {factor:g} x tol_tangency)"
            )

    def is_on_manifold(self, p):
        return np.abs(np.linalg.norm(p, axis=-1) - 1.0) <= self.tol_constraint

    # -- geometry -------------------------------------------------------
    def tangent_project(self, p, v, check=True):
        """Orthogonal projection of ``v`` onto T_p S^2: v - <v,p> p."""
        p = np.asarray(p, dtype=float)
        v = np.asarray(v, dtype=float)
        if check:
            self.check_on_manifold(p)
        return v - _dot(v, p)[..., None] * p

    def complex_structure(self, p, v):
        """J(p)v = p x v; a rotation by +pi/2 in the tangent plane."""
        return np.cross(p, v)

    def tube_project(self, q):
        """Nearest point on the sphere, q / |q|."""
        q = np.asarray(q, dtype=float)
        r = np.linalg.norm(q, axis=-1)
        inner = 1.0 - self.tube_radius
        if np.any(~np.isfinite(r)):
            raise TubeExitError("non-finite point cannot be projected")
        if np.any(r < inner):
            raise TubeExitError(
                f"left tubular neighborhood: |q| = {np.min(r):.4g} < 1 - r = {inner:.4g}"
            )
        return q / r[..., None]

    def constraint_defect(self, q):
        """rho(q) = q - Pi(q); a normal vector of length ||q| - 1|."""
        q = np.asarray(q, dtype=float)
        return q - self.tube_project(q)

    def normal_frame(self, p):
        """Orthonormal basis of the normal space; for S^2 the single vector p."""
        p = np.asarray(p, dtype=float)
        return [p.copy()]

    def normal_frame_derivative(self, p, dp):
        """Derivative of each frame vector along the ambient velocity dp."""
        return [np.asarray(dp, dtype=float).copy()]

    def curvature(self, p, x, y, z):
        """Riemann tensor of the round sphere: R(x,y)z = <y,z>x - <x,z>y."""
        return _dot(y, z)[..., None] * x - _dot(x, z)[..., None] * y


DEFAULT_SPHERE = Sphere()


def tangent_project(p, v):
    return DEFAULT_SPHERE.tangent_project(p, v)


def complex_structure(p, v):
    return DEFAULT_SPHERE.complex_structure(p, v)


def tube_project(q):
    return DEFAULT_SPHERE.tube_project(q)


def constraint_defect(q):
    return DEFAULT_SPHERE.constraint_defect(q)


def normal_frame(p):
    return DEFAULT_SPHERE.normal_frame(p)


def curvature(p, x, y, z):
    return DEFAULT_SPHERE.curvature(p, x, y, z)
