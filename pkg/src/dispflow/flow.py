"""Right-hand sides of the fourth-order dispersive flow on S^2.

Three independently coded forms of the same vector field are kept side by
side and used as mutual oracles:

``intrinsic``
    a J nabla^3 u_x + {1 + b|u_x|^2} J nabla u_x + c <nabla u_x, u_x> J u_x,
    built from iterated covariant derivatives and J only.
``extrinsic_model``
    u x {a u_xxxx + u_xx + b'|u_x|^2 u_xx + c'<u_xx, u_x> u_x} with the
    mapped coefficients b' = b + a, c' = c + 5a.
``embedded``
    a P[J P {P U_xx}_x]_x + {1 + b|U_x|^2} J P U_xx + c <P U_xx, U_x> J U_x,
    i.e. nested ambient derivatives and tangent projections.

The regularised flows add -eps nabla^3 u_x and +delta nabla^5 u_x.

Coefficient correspondence. On |u| = 1 with nabla V = V_x + <V, u_x> u,
the tangential part of nabla^3 u_x is
``u_xxxx + 5 <u_xx, u_x> u_x + |u_x|^2 u_xx`` modulo multiples of u, which
the cross product with u annihilates. Also J nabla u_x = u x u_xx and
<nabla u_x, u_x> = <u_xx, u_x>. Collecting terms gives b' = b + a and
c' = c + 5a.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache
from importlib import resources

import numpy as np
import yaml

from .curve import TangentField, _check_finite, _covariant_ladder, diff
from .errors import NonFiniteStateError, ParameterError

FORMS = ("intrinsic", "extrinsic_model", "embedded")
PRESET_NAMES = ("integrable_PDL", "fukumoto_filament", "schrodinger_map", "custom")


@dataclass(frozen=True)
class FlowParams:
    a: float = 1.0
    b: float = 0.0
    c: float = 0.0
    epsilon: float = 0.0
    delta: float = 0.0
    form: str = "intrinsic"
    preset: str = "custom"

    def __post_init__(self):
        if self.preset not in PRESET_NAMES:
            raise ParameterError(f"FlowParams.preset: unknown preset {self.preset!r}")
        if self.a == 0 and self.preset != "schrodinger_map":
            raise ParameterError("FlowParams.a: a must be nonzero (a in R \\ {0})")
        if self.epsilon < 0 or self.delta < 0:
            raise ParameterError("FlowParams.epsilon/delta must be nonnegative")
        if self.form not in FORMS:
            raise ParameterError(f"FlowParams.form: unknown form {self.form!r}")
        for name in ("a", "b", "c", "epsilon", "delta"):
            if not np.isfinite(getattr(self, name)):
                raise ParameterError(f"FlowParams.{name} must be finite")

    @property
    def regularized(self):
        return self.epsilon > 0 or self.delta > 0

    def with_(self, **changes):
        return replace(self, **changes)

    def as_dict(self):
        return {
            "a": self.a, "b": self.b, "c": self.c, "epsilon": self.epsilon,
            "delta": self.delta, "form": self.form, "preset": self.preset,
        }


def coefficient_map(a, b, c):
    """Intrinsic (a, b, c) -> extrinsic (a, b', c') for the sphere model."""
    if a == 0:
        raise ParameterError("coefficient_map: a must be nonzero")
    return a, b + a, c + 5.0 * a


def inverse_coefficient_map(a, b_ext, c_ext):
    if a == 0:
        raise ParameterError("inverse_coefficient_map: a must be nonzero")
    return a, b_ext - a, c_ext - 5.0 * a


@lru_cache(maxsize=1)
def preset_table():
    text = resources.files("dispflow").joinpath("data/presets.yaml").read_text()
    return yaml.safe_load(text)


def preset(name, **overrides):
    """FlowParams for a named preset; ``overrides`` set epsilon, delta, form."""
    table = preset_table()
    if name not in table:
        raise ParameterError(f"unknown preset {name!r}; known: {sorted(table)}")
    row = table[name]
    a = float(row["a"])
    if a == 0:
        a, b, c = 0.0, float(row["b_ext"]), float(row["c_ext"])
    else:
        a, b, c = inverse_coefficient_map(a, float(row["b_ext"]), float(row["c_ext"]))
    return FlowParams(a=a, b=b, c=c, preset=name, **overrides)


def _dot(x, y):
    return np.einsum("ij,ij->i", x, y)


def _project(u, v):
    return v - _dot(v, u)[:, None] * u


def _regularization(u, grid, eps, delta, ladder=None):
    if eps == 0 and delta == 0:
        return 0.0
    lmax = 5 if delta > 0 else 3
    if ladder is None or len(ladder) <= lmax:
        ladder = _covariant_ladder(u, grid, lmax)
    out = np.zeros_like(u)
    if eps > 0:
        out -= eps * ladder[3]
    if delta > 0:
        out += delta * ladder[5]
    return out


def _check_levels(ladder):
    for level, vec in enumerate(ladder):
        if not np.all(np.isfinite(vec)):
            raise NonFiniteStateError(
                f"non-finite intermediate at covariant level {level}", level=level
            )


def rhs_intrinsic_array(u, grid, p):
    lmax = 5 if p.delta > 0 else 3
    ladder = _covariant_ladder(u, grid, lmax)
    _check_levels(ladder)
    ux, d1, d3 = ladder[0], ladder[1], ladder[3]
    out = p.a * np.cross(u, d3)
    out += (1.0 + p.b * _dot(ux, ux))[:, None] * np.cross(u, d1)
    if p.c != 0:
        out += (p.c * _dot(d1, ux))[:, None] * np.cross(u, ux)
    if p.regularized:
        out += _regularization(u, grid, p.epsilon, p.delta, ladder)
    return out


def rhs_extrinsic_array(u, grid, p):
    if p.a == 0:
        a, bx, cx = 0.0, p.b, p.c
    else:
        a, bx, cx = coefficient_map(p.a, p.b, p.c)
    u1 = diff(u, grid, 1, check=False)
    u2 = diff(u, grid, 2, check=False)
    bracket = u2 + (bx * _dot(u1, u1))[:, None] * u2 + (cx * _dot(u2, u1))[:, None] * u1
    if a != 0:
        u4 = diff(u, grid, 4, check=False)
        _check_finite(u4, "fourth derivative", level=4)
        bracket = bracket + a * u4
    out = np.cross(u, bracket)
    if p.regularized:
        out += _regularization(u, grid, p.epsilon, p.delta)
    return out


def rhs_embedded_array(U, grid, p, variant="projected"):
    """Embedded right-hand side.

    ``variant="projected"`` nests P(U) around the outer derivative;
    ``variant="frame"`` drops the outer P and adds back the normal part via
    the derivative of the normal frame (for S^2, nu(U) = U, d nu = U_x).
    """
    Ux = diff(U, grid, 1, check=False)
    PUxx = _project(U, diff(U, grid, 2, check=False))
    if variant == "projected":
        inner = _project(U, diff(PUxx, grid, 1, check=False))
        lead = _project(U, diff(np.cross(U, inner), grid, 1, check=False))
    elif variant == "frame":
        inner = _project(U, diff(np.cross(U, PUxx), grid, 1, check=False))
        lead = diff(inner, grid, 1, check=False) + _dot(inner, Ux)[:, None] * U
    else:
        raise ParameterError(f"unknown embedded variant {variant!r}")
    _check_finite(lead, "embedded leading term", level=3)
    out = p.a * lead
    out += (1.0 + p.b * _dot(Ux, Ux))[:, None] * np.cross(U, PUxx)
    if p.c != 0:
        out += (p.c * _dot(PUxx, Ux))[:, None] * np.cross(U, Ux)
    if p.regularized:
        out += _regularization(U, grid, p.epsilon, p.delta)
    return out


_DISPATCH = {
    "intrinsic": rhs_intrinsic_array,
    "extrinsic_model": rhs_extrinsic_array,
    "embedded": rhs_embedded_array,
}


def rhs_array(u, grid, p):
    return _DISPATCH[p.form](u, grid, p)


def rhs_intrinsic(u, p):
    return TangentField(u, rhs_intrinsic_array(u.points, u.grid, p))


def rhs_extrinsic_model(u, p):
    return TangentField(u, rhs_extrinsic_array(u.points, u.grid, p))


def rhs_embedded(U, p, variant="projected"):
    return TangentField(U, rhs_embedded_array(U.points, U.grid, p, variant))


def rhs(u, p):
    """Right-hand side in the form selected by ``p.form``."""
    return TangentField(u, rhs_array(u.points, u.grid, p))


def rhs_equivalence_residual(u, intrinsic):
    """sup |rhs_intrinsic(a,b,c) - rhs_extrinsic_model(a, b+a, c+5a)|."""
    if intrinsic.regularized:
        raise ParameterError("rhs_equivalence_residual requires epsilon = delta = 0")
    lhs = rhs_intrinsic_array(u.points, u.grid, intrinsic)
    rhs_ = rhs_extrinsic_array(u.points, u.grid, intrinsic)
    return float(np.max(np.abs(lhs - rhs_)))
