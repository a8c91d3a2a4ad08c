"""Ensemble simulation, Lyapunov functionals, and convergence statistics."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import feedback, filters
from .family import (
    family_populations_theta,
    family_populations_xi,
    rho_from_theta,
    rho_from_xi,
    theta_to_xi,
)
from .quantum import _as_matrix, dag, hermitize
from .sde import NoiseStream

# A final state counts as resolved to level k when its Bures distance to
# the basis state A_k is at most this.
CONVERGENCE_BURES = 0.05

# Raw eigenvalues below the corruption floor abort a trajectory; between
# the floor and the clip threshold they are projected out; above the clip
# threshold they are rounding noise and left in place.
CORRUPTION_FLOOR = -1e-6
CLIP_THRESHOLD = -1e-12


def reduction_from_populations(x) -> np.ndarray:
    """Reduction Lyapunov function from level populations.

    V = (1/2) sum_{n != m} sqrt(x_n x_m) = ((sum_n sqrt(x_n))^2 - sum_n x_n) / 2,
    zero exactly on the basis states.
    """
    x = np.clip(np.asarray(x, dtype=float), 0.0, None)
    s = np.sqrt(x).sum(axis=-1)
    return 0.5 * (s * s - x.sum(axis=-1))


def lyapunov_reduction(rho) -> np.ndarray:
    """Reduction Lyapunov function of a density matrix."""
    pops = np.real(np.einsum("...ii->...i", _as_matrix(rho)))
    return reduction_from_populations(pops)


def target_from_populations(x_rho, x_proj, target: int, edge: bool) -> np.ndarray:
    """Target Lyapunov function from populations of the pair of states.

    Edge targets use sqrt(1 - x_target) per state; interior targets sum
    sqrt(x_n) over the off-target levels.
    """
    x_rho = np.clip(np.asarray(x_rho, dtype=float), 0.0, None)
    x_proj = np.clip(np.asarray(x_proj, dtype=float), 0.0, None)
    if edge:
        return np.sqrt(np.clip(1.0 - x_rho[..., target], 0.0, None)) + np.sqrt(
            np.clip(1.0 - x_proj[..., target], 0.0, None)
        )
    mask = np.ones(x_rho.shape[-1], dtype=bool)
    mask[target] = False
    return np.sqrt(x_rho[..., mask]).sum(axis=-1) + np.sqrt(x_proj[..., mask]).sum(axis=-1)


def lyapunov_target(rho, proj, target: int, edge: bool | None = None) -> np.ndarray:
    """Target Lyapunov function of a true/projected state pair."""
    rho = _as_matrix(rho)
    proj = _as_matrix(proj)
    if edge is None:
        edge = target in (0, rho.shape[-1] - 1)
    x_rho = np.real(np.einsum("...ii->...i", rho))
    x_proj = np.real(np.einsum("...ii->...i", proj))
    return target_from_populations(x_rho, x_proj, target, edge)


def sample_exponent(
    times, values, window_fraction: float = 0.5, floor: float = 1e-300
):
    """Least-squares slope of log(values) over the trailing time window.

    Returns (slope, floored); ``floored`` is True when any value had to be
    clamped up to ``floor`` before taking the log.  ``values`` may carry a
    leading batch axis.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.ndim != 1 or times.shape[-1] != values.shape[-1] or times.size == 0:
        raise ValueError("times and values must share a nonempty last axis")
    if not 0.0 < window_fraction <= 1.0:
        raise ValueError("window_fraction must lie in (0, 1]")
    t0 = times[-1] - window_fraction * (times[-1] - times[0])
    sel = times >= t0
    if sel.sum() < 2:
        sel = np.ones_like(times, dtype=bool)
    floored = bool(np.any(values[..., sel] < floor))
    y = np.log(np.clip(values[..., sel], floor, None))
    t = times[sel]
    tc = t - t.mean()
    denom = float(tc @ tc)
    if denom == 0.0:
        raise ValueError("trailing window has no time spread")
    slope = (y - y.mean(axis=-1, keepdims=True)) @ tc / denom
    if np.ndim(slope) == 0:
        return float(slope), floored
    return slope, floored


@dataclass
class TrajectoryRecords:
    """Per-trajectory time series sampled on the recorded grid."""

    time: np.ndarray
    fidelity_to_target: np.ndarray
    fidelity_mixed: np.ndarray
    bures_true: np.ndarray
    bures_proj: np.ndarray
    u: np.ndarray
    v_reduction: np.ndarray
    v_target: np.ndarray
    xi_norm: np.ndarray


@dataclass
class EnsembleSummary:
    """Aggregates of one simulated ensemble."""

    trajectory_count: int
    time_grid: np.ndarray
    mean_fidelity: np.ndarray
    mean_lyapunov_V: np.ndarray
    mean_bures_true: np.ndarray
    mean_bures_proj: np.ndarray
    mean_xi_norm: np.ndarray
    convergence_fraction: float
    exponent_estimates: np.ndarray
    final_populations: np.ndarray
    max_xi_norm: float
    hygiene: dict
    blowups: list
    base_seed: int
    records: TrajectoryRecords | None = None
    converged: np.ndarray = field(default=None)


def reduction_histogram(summary, tol: float = CONVERGENCE_BURES) -> np.ndarray:
    """Fraction of trajectories resolved within Bures ``tol`` of each level."""
    pops = getattr(summary, "final_populations", summary)
    pops = np.clip(np.asarray(pops, dtype=float), 0.0, None)
    dist = np.sqrt(np.clip(2.0 - 2.0 * np.sqrt(pops), 0.0, None))
    return (dist <= tol).mean(axis=0)


def _bures_from_target_population(x_t) -> np.ndarray:
    return np.sqrt(np.clip(2.0 - 2.0 * np.sqrt(np.clip(x_t, 0.0, None)), 0.0, None))


def _batched_sqrt_fidelity(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Square-root fidelity for stacks of states (nuclear norm of sqrt products)."""
    wa, va = np.linalg.eigh(hermitize(a))
    wb, vb = np.linalg.eigh(hermitize(b))
    sa = (va * np.sqrt(np.clip(wa, 0.0, None))[..., None, :]) @ dag(va)
    sb = (vb * np.sqrt(np.clip(wb, 0.0, None))[..., None, :]) @ dag(vb)
    s = np.linalg.svd(sa @ sb, compute_uv=False)
    return s.sum(axis=-1)


def _repair_batch(raw, clamp_psd, dead):
    """Hermitize, clip stray negative eigenvalues, renormalize a state stack.

    Returns (state, stats, corrupt_mask); ``corrupt_mask`` marks rows whose
    trace collapsed or whose spectrum fell below the corruption floor.
    """
    rho = hermitize(raw)
    n = rho.shape[-1]
    finite = np.isfinite(rho).all(axis=(-2, -1))
    tr = np.real(np.einsum("...ii->...", np.where(finite[:, None, None], rho, 0.0)))
    corrupt = (~finite) | (tr <= 0.0)
    raw_min = np.nan
    state_min = np.nan
    if clamp_psd:
        safe = ~corrupt & ~dead
        if np.any(safe):
            w = np.linalg.eigvalsh(np.where(safe[:, None, None], rho, np.eye(n)))
            wmin = w.min(axis=-1)
            raw_min = float(wmin[safe].min())
            corrupt = corrupt | (safe & (wmin < CORRUPTION_FLOOR))
            clip_rows = safe & ~corrupt & (wmin < CLIP_THRESHOLD)
            if np.any(clip_rows):
                w2, v = np.linalg.eigh(rho[clip_rows])
                w2 = np.clip(w2, 0.0, None)
                rho[clip_rows] = (v * w2[..., None, :]) @ dag(v)
                tr = np.real(np.einsum("...ii->...", np.where(np.isfinite(rho), rho, 0.0)))
                wmin = wmin.copy()
                wmin[clip_rows] = 0.0
            keep = safe & ~corrupt
            if np.any(keep):
                state_min = float(wmin[keep].min())
    tr_safe = np.where(np.abs(tr) > 0.0, tr, 1.0)
    rho = rho / tr_safe[..., None, None]
    alive = ~corrupt & ~dead
    if np.any(alive):
        tr_post = np.real(np.einsum("...ii->...", rho[alive]))
        trace_dev = float(np.abs(tr_post - 1.0).max())
    else:
        trace_dev = 0.0
    stats = {"raw_min_eig": raw_min, "state_min_eig": state_min, "trace_dev": trace_dev}
    return rho, stats, corrupt


def _nan_min(a, b):
    if np.isnan(b):
        return a
    return b if np.isnan(a) else min(a, b)


def run_ensemble(exp, keep_records: bool | None = None) -> EnsembleSummary:
    """Integrate an ensemble of coupled true/companion trajectories.

    The companion (the projected filter in natural or reduced coordinates)
    supplies the feedback signal.  In physical mode the true state
    generates the observation record that drives both; in synthetic mode
    the record is the raw noise and no true state is carried.  Trajectories
    that blow up or corrupt are frozen at their last valid value and
    reported while the rest of the ensemble continues.
    """
    model = exp.build_model()
    ctx = exp.build_family(model)
    spec = exp.controller
    integ = exp.integrator
    n = model.dim
    nbar = spec.target
    edge = nbar in (0, n - 1)
    physical = exp.mode == filters.NoiseMode.PHYSICAL
    companion = exp.companion_kind
    steps, dt, stride = integ.steps, integ.dt, integ.stride
    B = exp.ensemble.trajectories
    if keep_records is None:
        keep_records = exp.outputs.per_trajectory

    dw = np.empty((B, steps))
    for i in range(B):
        dw[i] = NoiseStream(exp.ensemble.base_seed, dt, stream=i).sample_block(steps)

    rho = None
    if physical:
        rho = np.broadcast_to(exp.initial_rho0(), (B, n, n)).astype(complex).copy()
    comp = np.tile(np.asarray(exp.initial_companion(), dtype=float), (B, 1))

    rec_index = [t for t in range(steps + 1) if t % stride == 0 or t == steps]
    T = len(rec_index)
    time_grid = np.array([t * dt for t in rec_index])
    cols = {
        name: np.full((B, T), np.nan)
        for name in (
            "fidelity_to_target",
            "fidelity_mixed",
            "bures_true",
            "bures_proj",
            "u",
            "v_reduction",
            "v_target",
            "xi_norm",
        )
    }

    dead = np.zeros(B, dtype=bool)
    blowups = []
    max_xi = 0.0
    hygiene = {"max_trace_dev": 0.0, "min_eig_state": np.nan, "min_eig_raw": np.nan}
    pops_comp = None
    r = 0

    for t in range(steps + 1):
        if companion == "theta":
            pops_comp = family_populations_theta(ctx, comp)
            xi_view = None
        else:
            pops_comp = family_populations_xi(ctx, comp)
            xi_view = comp
        if spec.kind in feedback.XI_KINDS and xi_view is None:
            with np.errstate(over="ignore"):
                xi_view = theta_to_xi(comp, nbar)
        u = np.asarray(
            feedback.evaluate_control(spec, ctx, xi=xi_view, populations=pops_comp),
            dtype=float,
        )
        u = np.where(dead, 0.0, u)
        if companion == "xi" and np.any(~dead):
            max_xi = max(max_xi, float(np.linalg.norm(comp[~dead], axis=-1).max()))

        if t == rec_index[r]:
            alive = ~dead
            cols["u"][alive, r] = u[alive]
            cols["v_reduction"][alive, r] = reduction_from_populations(pops_comp[alive])
            cols["bures_proj"][alive, r] = _bures_from_target_population(
                pops_comp[alive, nbar]
            )
            with np.errstate(over="ignore"):
                xin = (
                    xi_view if xi_view is not None else theta_to_xi(comp, nbar)
                )
                cols["xi_norm"][alive, r] = np.linalg.norm(xin[alive], axis=-1)
            if physical:
                pops_true = np.real(np.einsum("...ii->...i", rho))
                cols["fidelity_to_target"][alive, r] = pops_true[alive, nbar]
                cols["bures_true"][alive, r] = _bures_from_target_population(
                    pops_true[alive, nbar]
                )
                cols["v_target"][alive, r] = target_from_populations(
                    pops_true[alive], pops_comp[alive], nbar, edge
                )
                if keep_records and np.any(alive):
                    comp_mat = (
                        rho_from_theta(ctx, comp[alive])
                        if companion == "theta"
                        else rho_from_xi(ctx, comp[alive])
                    )
                    cols["fidelity_mixed"][alive, r] = _batched_sqrt_fidelity(
                        rho[alive], comp_mat
                    )
            r += 1
        if t == steps:
            break

        dw_t = dw[:, t]
        if physical:
            raw, dy = filters.step_true(rho, u, dw_t, model, dt)
            rho_new, stats, corrupt = _repair_batch(raw, integ.clamp_psd, dead)
            hygiene["max_trace_dev"] = max(hygiene["max_trace_dev"], stats["trace_dev"])
            hygiene["min_eig_state"] = _nan_min(hygiene["min_eig_state"], stats["state_min_eig"])
            hygiene["min_eig_raw"] = _nan_min(hygiene["min_eig_raw"], stats["raw_min_eig"])
            for i in np.flatnonzero(corrupt & ~dead):
                blowups.append({"trajectory": int(i), "step": t, "reason": "state corruption"})
            rho = np.where((dead | corrupt)[:, None, None], rho, rho_new)
            dead = dead | corrupt
        else:
            dy = dw_t

        if companion == "theta":
            comp_new = filters.step_theta(ctx, comp, dy, u, dt, check=False)
        else:
            comp_new = filters.step_xi(ctx, comp, dy, u, dt, check=False)
        bad = ~np.isfinite(comp_new).all(axis=-1)
        for i in np.flatnonzero(bad & ~dead):
            blowups.append({"trajectory": int(i), "step": t, "reason": "companion blow-up"})
        comp = np.where((dead | bad)[:, None], comp, comp_new)
        dead = dead | bad

    bures_series = cols["bures_true"] if physical else cols["bures_proj"]
    slopes, _ = sample_exponent(time_grid, np.nan_to_num(bures_series, nan=1.0))
    slopes = np.where(dead, np.nan, np.atleast_1d(slopes))

    final_pops = (
        np.real(np.einsum("...ii->...i", rho)) if physical else pops_comp
    )
    final_bures_target = _bures_from_target_population(final_pops[:, nbar])
    converged = (~dead) & (final_bures_target <= CONVERGENCE_BURES)

    def col_mean(name):
        arr = cols[name]
        valid = ~np.isnan(arr)
        cnt = valid.sum(axis=0)
        out = np.full(arr.shape[1], np.nan)
        sel = cnt > 0
        if np.any(sel):
            sums = np.where(valid, arr, 0.0).sum(axis=0)
            out[sel] = sums[sel] / cnt[sel]
        return out

    return EnsembleSummary(
        trajectory_count=B,
        time_grid=time_grid,
        mean_fidelity=col_mean("fidelity_to_target"),
        mean_lyapunov_V=col_mean("v_reduction"),
        mean_bures_true=col_mean("bures_true"),
        mean_bures_proj=col_mean("bures_proj"),
        mean_xi_norm=col_mean("xi_norm"),
        convergence_fraction=float(converged.mean()),
        exponent_estimates=slopes,
        final_populations=final_pops,
        max_xi_norm=max_xi,
        hygiene=hygiene,
        blowups=blowups,
        base_seed=exp.ensemble.base_seed,
        records=TrajectoryRecords(time=time_grid, **cols) if keep_records else None,
        converged=converged,
    )


def simulate_pair(exp):
    """Convenience single-trajectory run returning full records."""
    one = dataclasses.replace(
        exp, ensemble=dataclasses.replace(exp.ensemble, trajectories=1)
    )
    return run_ensemble(one, keep_records=True)
