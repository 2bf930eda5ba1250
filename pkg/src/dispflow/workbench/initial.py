"""Concrete initial curves."""
from __future__ import annotations

import numpy as np

from ..curve import DiscreteCurve, read_curve
from ..errors import ParameterError

KINDS = ("great_circle", "perturbed_great_circle", "gaussian_twist", "from_file")


def _normalize(v):
    return v / np.linalg.norm(v, axis=1)[:, None]


def great_circle(grid):
    th = 2.0 * np.pi * grid.x / grid.domain_length
    return np.stack([np.cos(th), np.sin(th), np.zeros_like(th)], axis=1)


def perturbed_great_circle(grid, amplitude, mode):
    """normalize(cos th, sin th, amplitude sin(mode th)), th = 2 pi x / L."""
    if not abs(amplitude) < 1:
        raise ParameterError("initial_data.amplitude must satisfy |amplitude| < 1")
    th = 2.0 * np.pi * grid.x / grid.domain_length
    return _normalize(np.stack([np.cos(th), np.sin(th), amplitude * np.sin(mode * th)], axis=1))


def gaussian_twist(grid, amplitude, width, center=None):
    """Great circle tilted out of its plane by the angle
    amplitude * exp(-((x - center) / width)^2), a rotation about the local
    tangent."""
    if not abs(amplitude) < 1:
        raise ParameterError("initial_data.amplitude must satisfy |amplitude| < 1")
    if not width > 0:
        raise ParameterError("initial_data.width must be positive")
    if center is None:
        center = grid.midpoint
    th = 2.0 * np.pi * grid.x / grid.domain_length
    alpha = amplitude * np.exp(-((grid.x - center) / width) ** 2)
    pts = np.stack([np.cos(alpha) * np.cos(th), np.cos(alpha) * np.sin(th), -np.sin(alpha)], axis=1)
    return _normalize(pts)


def transverse_bump(points, grid, amplitude, width, center=None):
    """Add amplitude * Gaussian bump along e_z and renormalise."""
    if center is None:
        center = grid.midpoint
    bump = amplitude * np.exp(-((grid.x - center) / width) ** 2)
    out = np.array(points, dtype=float)
    out[:, 2] += bump
    return _normalize(out)


def random_smooth_curve(grid, rng, amplitude=0.2, decay=0.7, modes=40):
    """Great circle plus random Fourier modes 1..modes with geometric decay."""
    th = 2.0 * np.pi * grid.x / grid.domain_length
    u = great_circle(grid)
    for m in range(1, modes + 1):
        c = rng.normal(size=(2, 3)) * amplitude * decay ** m
        u = u + c[0] * np.cos(m * th)[:, None] + c[1] * np.sin(m * th)[:, None]
    return DiscreteCurve(grid, _normalize(u))


def make_initial(spec, grid):
    """Build a DiscreteCurve from an initial-data description (dict or model).

    Every construction is normalised pointwise, so the result lies on the
    sphere to round-off.
    """
    get = spec.get if isinstance(spec, dict) else (lambda k, d=None: getattr(spec, k, d))
    kind = get("kind")
    if kind == "great_circle":
        pts = great_circle(grid)
    elif kind == "perturbed_great_circle":
        pts = perturbed_great_circle(grid, get("amplitude", 0.0), get("mode", 2))
    elif kind == "gaussian_twist":
        pts = gaussian_twist(grid, get("amplitude", 0.1), get("width", 0.5), get("center"))
    elif kind == "from_file":
        path = get("path")
        if path is None:
            raise ParameterError("initial_data.path is required for kind 'from_file'")
        u = read_curve(path)
        if u.grid.num_points != grid.num_points or u.grid.domain_length != grid.domain_length:
            raise ParameterError("initial_data: file grid does not match the configured grid")
        return DiscreteCurve(grid, _normalize(u.points), u.time_stamp)
    else:
        raise ParameterError(f"initial_data.kind: unknown kind {kind!r}; known: {KINDS}")
    return DiscreteCurve(grid, pts)
