"""One-step updates for the conditional-state equations.

All steppers share conventions: they take the current state, the relevant
scalar inputs (control u, observation increment dy or raw noise dw), the
system model and the step size, and return the raw Euler-Maruyama output
without renormalization.  State repair is the integrator's job; see
``sde.renormalize``.

Under physical noise the observation increment is
dy = dw + 2 sqrt(eta) <J_z> dt with the expectation taken in the true
state; under synthetic noise dy is the raw Wiener increment and no true
state exists.  Every stepper is written against dy, so both modes flow
through identical code.

Matrix steppers broadcast over leading batch axes, with u, dw, dy shaped
like the batch.
"""

from __future__ import annotations

import enum

import numpy as np

from .errors import BlowUpError, SingularFamilyError
from .family import FamilyContext, drift_ratio
from .quantum import SystemModel, _as_matrix, expect, hermitize, superop_F, superop_G


class NoiseMode(enum.Enum):
    """Whether the observation record is generated by a true state or fed in raw."""

    PHYSICAL = "physical"
    SYNTHETIC = "synthetic"


def observation_increment(rho, dw, model: SystemModel, dt: float):
    """dy = dw + 2 sqrt(eta) Tr(J_z rho) dt for a physically generated record."""
    mean_z = np.real(expect(model.jz, _as_matrix(rho)))
    return dw + 2.0 * np.sqrt(model.eta) * mean_z * dt


def _innovation_step(rho, dy, u, model: SystemModel, dt: float):
    """Shared filter update driven by the innovation dy - 2 sqrt(eta) <J_z> dt."""
    rho = _as_matrix(rho)
    h = model.hamiltonian(u)
    drift = -1j * (h @ rho - rho @ h) + superop_F(rho, model.jz)
    mean_z = np.real(expect(model.jz, rho))
    innovation = dy - 2.0 * np.sqrt(model.eta) * mean_z * dt
    g = superop_G(rho, model.jz, model.eta)
    return rho + hermitize(drift) * dt + g * np.asarray(innovation)[..., None, None]


def step_true(rho, u, dw, model: SystemModel, dt: float):
    """Advance the true conditional state one step; returns (next_rho, dy).

    The measurement record dy is generated from the state itself, so the
    innovation reduces to the driving noise dw.
    """
    dy = observation_increment(rho, dw, model, dt)
    return _innovation_step(rho, dy, u, model, dt), dy


def step_estimate(rho_hat, dy, u, model: SystemModel, dt: float):
    """Advance the mismatched-initialization filter driven by a given record."""
    return _innovation_step(rho_hat, dy, u, model, dt)


def step_zakai(rho_check, dy, u, model: SystemModel, dt: float):
    """Advance the linear unnormalized filter.

    d rho = -i[H, rho] dt + F(rho) dt + sqrt(eta) (J_z rho + rho J_z) dy.
    Linear in rho; never renormalized by the stepper.
    """
    rho_check = _as_matrix(rho_check)
    h = model.hamiltonian(u)
    drift = -1j * (h @ rho_check - rho_check @ h) + superop_F(rho_check, model.jz)
    obs = np.sqrt(model.eta) * (model.jz @ rho_check + rho_check @ model.jz)
    return (
        rho_check
        + hermitize(drift) * dt
        + hermitize(obs) * np.asarray(dy)[..., None, None]
    )


def step_projection_rho(proj, dy, u, model: SystemModel, dt: float):
    """Advance the projected filter state as a density matrix.

    The Hamiltonian term is replaced by its projection onto the family
    tangent space: with x_j = Tr(proj A_j) and
    c_j = u Tr(i proj [J_y, A_j]) / x_j the update reads

        proj + [pairwise(c) * proj + F(proj)] dt + G(proj) (dy - 2 sqrt(eta) <J_z> dt)

    where pairwise(c)[i, j] = (c_i + c_j)/2.  The free J_z precession
    projects to zero, so only the controlled rotation enters.  Requires
    strictly positive level populations whenever u != 0.
    """
    proj = _as_matrix(proj)
    x = np.real(np.einsum("...ii->...i", proj))
    comm = 1j * (model.jy @ proj - proj @ model.jy)
    num = -np.real(np.einsum("...ii->...i", comm))  # Tr(i proj [J_y, A_j])
    u_arr = np.asarray(u, dtype=float)
    if np.any((x <= 0.0) & (np.abs(u_arr)[..., None] > 0.0) & (np.abs(num) > 0.0)):
        raise SingularFamilyError(
            "projected rotation is singular: zero population on a coupled level"
        )
    with np.errstate(divide="ignore", invalid="ignore"):
        c = np.where(x > 0.0, num / np.where(x > 0.0, x, 1.0), 0.0)
    c = u_arr[..., None] * c
    pair = 0.5 * (c[..., :, None] + c[..., None, :])
    mean_z = np.real(expect(model.jz, proj))
    innovation = dy - 2.0 * np.sqrt(model.eta) * mean_z * dt
    g = superop_G(proj, model.jz, model.eta)
    out = (
        proj
        + (pair * proj + superop_F(proj, model.jz)) * dt
        + g * np.asarray(innovation)[..., None, None]
    )
    return hermitize(out)


def step_theta(
    ctx: FamilyContext,
    theta,
    dy,
    u,
    dt: float,
    step_index: int | None = None,
    check: bool = True,
):
    """Advance the natural coordinates of the projected filter.

    d theta_k = [rotation drift]_k dt - 2 eta lambda_k^2 dt
                + 2 sqrt(eta) lambda_k dy.

    Constant diffusion, so the Ito and Stratonovich readings coincide.
    With ``check`` disabled non-finite outputs are returned for the caller
    to triage row by row instead of raising.
    """
    theta = np.asarray(theta, dtype=float)
    model = ctx.model
    lam = model.eigenvalues
    drift = drift_ratio(ctx, theta, u) - 2.0 * model.eta * lam**2
    out = theta + drift * dt + 2.0 * np.sqrt(model.eta) * lam * np.asarray(dy)[..., None]
    if check and not np.all(np.isfinite(out)):
        raise BlowUpError("theta coordinates became non-finite", step_index=step_index)
    return out


def xi_drift_rates(ctx: FamilyContext, target: int | None = None):
    """Constant coefficients of the reduced-coordinate equation.

    Returns (gamma, kick) over levels k != target:
    gamma_k = eta (3 lambda_t^2 / 2 - lambda_k^2 / 2 - lambda_k lambda_t)
    and kick_k = lambda_k - lambda_t, the diffusion weight.
    """
    model = ctx.model
    nbar = ctx.target if target is None else target
    lam = np.delete(model.eigenvalues, nbar)
    lt = model.eigenvalues[nbar]
    gamma = model.eta * (1.5 * lt**2 - 0.5 * lam**2 - lam * lt)
    return gamma, lam - lt


def step_xi(
    ctx: FamilyContext,
    xi,
    dy,
    u,
    dt: float,
    step_index: int | None = None,
    check: bool = True,
):
    """Advance the reduced coordinates around the target projector.

    d xi_k = -u sum_{p != k} coupling[p, k] v_p dt
             + u (sum_{p != t} coupling[p, t] v_p) xi_k dt
             + gamma_k xi_k dt + sqrt(eta) kick_k xi_k dy

    with v the full coordinate vector (unit target slot).  Written against
    the observation increment dy; expanding dy in physical mode reproduces
    the mean-coupled drift form term by term.
    """
    xi = np.asarray(xi, dtype=float)
    model = ctx.model
    nbar = ctx.target
    if xi.shape[-1] != model.dim - 1:
        raise SingularFamilyError(
            f"xi has {xi.shape[-1]} components, expected {model.dim - 1}"
        )
    v = np.insert(xi, nbar, 1.0, axis=-1)
    u_arr = np.asarray(u, dtype=float)
    mixed = v @ ctx.coupling  # (..., dim): sum_p coupling[p, k] v_p
    linear = -u_arr[..., None] * np.delete(mixed, nbar, axis=-1)
    quad = (u_arr * mixed[..., nbar])[..., None] * xi
    gamma, kick = xi_drift_rates(ctx)
    drift = linear + quad + gamma * xi
    out = xi + drift * dt + np.sqrt(model.eta) * kick * xi * np.asarray(dy)[..., None]
    if check and not np.all(np.isfinite(out)):
        raise BlowUpError("xi coordinates became non-finite", step_index=step_index)
    return out


def diag_increment_oracle(proj, u, dw, t_gap, model: SystemModel, dt: float):
    """Per-level population increments of the projected filter.

    Derived scalar form of the diagonal of the matrix update:

        dx_n = -u Theta_n(proj) dt + 4 eta P_n(proj) x_n t_gap dt
               + 2 sqrt(eta) P_n(proj) x_n dw

    with P_n = lambda_n - <J_z>, Theta_n = Tr(i [J_y, proj] A_n), and
    t_gap = <J_z>_true - <J_z>_proj (zero in synthetic mode).  Serves as an
    independent check on the matrix stepper's diagonal.
    """
    proj = _as_matrix(proj)
    lam = model.eigenvalues
    x = np.real(np.einsum("...ii->...i", proj))
    mean_z = x @ lam
    p_n = lam - mean_z[..., None]
    comm = 1j * (model.jy @ proj - proj @ model.jy)
    theta_n = np.real(np.einsum("...ii->...i", comm))
    u_arr = np.asarray(u, dtype=float)[..., None]
    gap = np.asarray(t_gap, dtype=float)[..., None]
    dw_arr = np.asarray(dw, dtype=float)[..., None]
    eta = model.eta
    return (
        -u_arr * theta_n * dt
        + 4.0 * eta * p_n * x * gap * dt
        + 2.0 * np.sqrt(eta) * p_n * x * dw_arr
    )
