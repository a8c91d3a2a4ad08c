"""Exponential family of diagonal tilts of a fixed base state.

The family is generated by the rank-one spectral projectors A_k of the
measured observable: an unnormalized member is

    rho_check(theta)[i, j] = exp((theta_i + theta_j) / 2) * base[i, j],

i.e. a symmetric diagonal tilt of the base state.  Normalizing by
sum_k exp(theta_k) w_k with weights w_k = Tr(base A_k) gives the state
rho(theta).  Chart changes to the reduced coordinates

    xi_k = exp((theta_k - theta_target) / 2),   k != target,

compactify the picture around the target projector: xi = 0 is exactly
A_target.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, DomainError, SingularFamilyError
from .quantum import SystemModel, _as_matrix, hermitize, trace

WEIGHT_FLOOR = 1e-12


@dataclass(frozen=True)
class FamilyContext:
    """Base state, system operators, and target level for one family.

    Every level weight w_k = Tr(base A_k) must be strictly positive;
    otherwise the tilt directions are linearly dependent and the family
    is degenerate.
    """

    base_state: np.ndarray
    model: SystemModel
    target: int
    weights: np.ndarray = field(init=False)
    coupling: np.ndarray = field(init=False)

    def __post_init__(self):
        base = hermitize(_as_matrix(self.base_state))
        n = self.model.dim
        if base.shape != (n, n):
            raise DimensionMismatchError(
                f"base state shape {base.shape} does not match system dimension {n}"
            )
        if abs(trace(base) - 1.0) > 1e-10:
            raise DomainError("base state must have unit trace")
        if np.linalg.eigvalsh(base).min() < -1e-10:
            raise DomainError("base state must be positive semidefinite")
        if not (0 <= self.target < n):
            raise DomainError(f"target level {self.target} outside 0..{n - 1}")
        w = np.real(np.diagonal(base)).copy()
        if w.min() <= WEIGHT_FLOOR:
            raise SingularFamilyError(
                "family base state must put strictly positive weight on every "
                f"measurement level; got weights {w}"
            )
        # coupling[p, k] = Tr(i J_y (A_p base A_k - A_k base A_p)) / (2 w_k),
        # the rotation-induced mixing rate between tilt directions.  For a
        # tridiagonal J_y it vanishes unless |p - k| = 1.
        jy = self.model.jy
        t = np.real(1j * (jy.T * base - jy * base.T))
        object.__setattr__(self, "base_state", base)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "coupling", t / (2.0 * w[None, :]))

    @property
    def dim(self) -> int:
        return self.model.dim


def make_family(base_state, model: SystemModel, target: int = 0) -> FamilyContext:
    """Validate a base state and precompute family data."""
    return FamilyContext(base_state=base_state, model=model, target=target)


def unnormalized_from_theta(ctx: FamilyContext, theta) -> np.ndarray:
    """rho_check(theta): the raw diagonal tilt, not trace-normalized."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape[-1] != ctx.dim:
        raise DimensionMismatchError(
            f"theta has {theta.shape[-1]} components, expected {ctx.dim}"
        )
    s = np.exp(0.5 * theta)
    return (s[..., :, None] * s[..., None, :]) * ctx.base_state


def rho_from_theta(ctx: FamilyContext, theta) -> np.ndarray:
    """Normalized family member at natural coordinates theta.

    Invariant under a common shift of all components; evaluated with the
    maximum subtracted so large coordinates do not overflow.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.shape[-1] != ctx.dim:
        raise DimensionMismatchError(
            f"theta has {theta.shape[-1]} components, expected {ctx.dim}"
        )
    if not np.all(np.isfinite(theta)):
        raise DomainError("theta contains non-finite components")
    shifted = theta - theta.max(axis=-1, keepdims=True)
    s = np.exp(0.5 * shifted)
    num = (s[..., :, None] * s[..., None, :]) * ctx.base_state
    den = np.einsum("...k,k->...", s * s, ctx.weights)
    return num / den[..., None, None]


def theta_to_xi(theta, target: int) -> np.ndarray:
    """Reduced coordinates xi_k = exp((theta_k - theta_target)/2), k != target."""
    theta = np.asarray(theta, dtype=float)
    rel = 0.5 * (theta - theta[..., target : target + 1])
    return np.exp(np.delete(rel, target, axis=-1))


def xi_to_theta(xi, target: int) -> np.ndarray:
    """Inverse chart: theta_k = 2 log xi_k, theta_target = 0.

    Requires strictly positive xi; the chart only covers that orthant.
    """
    xi = np.asarray(xi, dtype=float)
    if np.any(xi <= 0.0):
        raise DomainError("xi components must be strictly positive to invert the chart")
    theta = 2.0 * np.log(xi)
    return np.insert(theta, target, 0.0, axis=-1)


def _full_xi(ctx: FamilyContext, xi) -> np.ndarray:
    """Insert the fixed unit component at the target slot."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-1] != ctx.dim - 1:
        raise DimensionMismatchError(
            f"xi has {xi.shape[-1]} components, expected {ctx.dim - 1}"
        )
    return np.insert(xi, ctx.target, 1.0, axis=-1)


def rho_from_xi(ctx: FamilyContext, xi) -> np.ndarray:
    """Normalized family member at reduced coordinates xi.

    xi = 0 returns the target projector exactly.
    """
    v = _full_xi(ctx, xi)
    if not np.all(np.isfinite(v)):
        raise DomainError("xi contains non-finite components")
    num = (v[..., :, None] * v[..., None, :]) * ctx.base_state
    den = np.einsum("...k,k->...", v * v, ctx.weights)
    return num / den[..., None, None]


def family_populations_theta(ctx: FamilyContext, theta) -> np.ndarray:
    """Level populations Tr(rho(theta) A_k) without building the matrix."""
    theta = np.asarray(theta, dtype=float)
    shifted = theta - theta.max(axis=-1, keepdims=True)
    un = np.exp(shifted) * ctx.weights
    return un / un.sum(axis=-1, keepdims=True)


def family_populations_xi(ctx: FamilyContext, xi) -> np.ndarray:
    """Level populations Tr(rho(xi) A_k) without building the matrix."""
    v = _full_xi(ctx, xi)
    un = v * v * ctx.weights
    return un / un.sum(axis=-1, keepdims=True)


def fisher_and_drift(ctx: FamilyContext, theta, u):
    """Fisher metric and rotation drift at theta.

    Returns (g, e): g holds the entries of the diagonal Fisher metric of
    the unnormalized family, g_k = exp(theta_k) w_k, and
    e_k = Tr(i rho_check [H, A_k]) with H = omega J_z + u J_y.  J_z
    commutes with every A_k, so only the controlled J_y rotation
    contributes: e_k = -2 u w_k s_k (s @ coupling)_k with s = exp(theta/2).
    """
    theta = np.asarray(theta, dtype=float)
    u = np.asarray(u, dtype=float)
    g = np.exp(theta) * ctx.weights
    s = np.exp(0.5 * theta)
    e = -2.0 * u[..., None] * ctx.weights * s * (s @ ctx.coupling)
    return g, e


def drift_ratio(ctx: FamilyContext, theta, u) -> np.ndarray:
    """Rotation drift premultiplied by the inverse Fisher metric.

    Shift-invariant form of E_k / G_kk used by the natural-coordinate
    integrator: -2 u sum_p coupling[p, k] exp((theta_p - theta_k)/2).
    """
    theta = np.asarray(theta, dtype=float)
    u = np.asarray(u, dtype=float)
    s = np.exp(0.5 * (theta - theta.max(axis=-1, keepdims=True)))
    return -2.0 * u[..., None] * (s @ ctx.coupling) / s


def project_tangent(ctx: FamilyContext, theta, nu) -> np.ndarray:
    """Orthogonal projection of a tangent direction onto the family.

    Under the Fisher metric of the unnormalized family the projection of
    a Hermitian direction nu at rho_check(theta) is

        sum_k [Tr(nu A_k) / (exp(theta_k) w_k)] * (A_k rho_check + rho_check A_k) / 2,

    which in components is an entrywise rescale of rho_check.
    """
    theta = np.asarray(theta, dtype=float)
    nu = _as_matrix(nu)
    if nu.shape[-1] != ctx.dim or nu.shape[-2] != ctx.dim:
        raise DimensionMismatchError(f"direction shape {nu.shape} does not match family")
    g = np.exp(theta) * ctx.weights
    if np.any(g <= 0.0) or not np.all(np.isfinite(g)):
        raise SingularFamilyError("Fisher metric is degenerate at this theta")
    coef = np.real(np.einsum("...ii->...i", nu)) / g
    rc = unnormalized_from_theta(ctx, theta)
    pair = 0.5 * (coef[..., :, None] + coef[..., None, :])
    return pair * rc
