"""Canonical experiment configurations.

All presets share the four-level system at efficiency 0.5 and the default
step 5 * 2^-12.  Two base states appear:

* ``BASE_STATE_IMAG`` couples levels (0,3) and (1,2) with purely imaginary
  entries.  Its rotation-overlap coefficients all vanish, so the feedback
  laws built from them are identically zero on this family; it is used for
  the population-feedback figure and the open-loop reduction studies.
* ``BASE_STATE_REAL`` couples adjacent levels with real entries, giving
  nonzero rotation overlaps; the reduced-coordinate feedback figures use it.
"""

from __future__ import annotations

import numpy as np

from .config import matrix_to_pairs
from .errors import ConfigError

DIAG_RHO0 = np.diag([0.2, 0.2, 0.3, 0.3]).astype(complex)

BASE_STATE_IMAG = np.array(
    [
        [0.2, 0.0, 0.0, 0.1j],
        [0.0, 0.2, -0.1j, 0.0],
        [0.0, 0.1j, 0.3, 0.0],
        [-0.1j, 0.0, 0.0, 0.3],
    ],
    dtype=complex,
)

BASE_STATE_REAL = np.array(
    [
        [0.2, 0.05, 0.0, 0.0],
        [0.05, 0.2, 0.05, 0.0],
        [0.0, 0.05, 0.3, 0.05],
        [0.0, 0.0, 0.05, 0.3],
    ],
    dtype=complex,
)

_COMMON = {
    "system": {"dim": 4, "eta": 0.5, "omega": 1.0},
    "integrator": {"dt": 5.0 * 2.0**-12, "horizon": 5.0,
                   "renormalize": True, "clamp_psd": True},
}


def _base(mode, rho_bar0, controller, ensemble, initial_extra, outputs=None):
    cfg = {
        "system": dict(_COMMON["system"]),
        "integrator": dict(_COMMON["integrator"]),
        "initial": {"rho_bar0": matrix_to_pairs(rho_bar0), **initial_extra},
        "controller": controller,
        "mode": mode,
        "ensemble": ensemble,
        "outputs": outputs or {"directory": "out", "per_trajectory": True},
    }
    if mode == "physical":
        cfg["initial"].setdefault("rho0", matrix_to_pairs(DIAG_RHO0))
    return cfg


def preset_figure1() -> dict:
    """Population feedback toward the top level on the imaginary-coupled family."""
    return _base(
        "physical",
        BASE_STATE_IMAG,
        {"kind": "rho_theta_power", "alpha_gain": 10.0, "beta_exp": 5.0, "target": 0},
        {"trajectories": 200, "base_seed": 11},
        {"theta0": [0.0, 0.0, 0.0, 0.0]},
    )


def preset_figure2() -> dict:
    """Reduced-coordinate edge feedback on the adjacent-coupled family."""
    return _base(
        "physical",
        BASE_STATE_REAL,
        {"kind": "xi_edge_general", "alpha_gain": 2.0, "beta_exp": 2.0, "target": 0},
        {"trajectories": 200, "base_seed": 12},
        {"xi0": [1.0, 1.0, 1.0]},
    )


def preset_figure3() -> dict:
    """Reduced-coordinate interior feedback toward the second level."""
    return _base(
        "physical",
        BASE_STATE_REAL,
        {
            "kind": "xi_interior_general",
            "alpha_gain": 1.0,
            "beta_exp": 2.0,
            "bump_offset": 2.0,
            "target": 1,
        },
        {"trajectories": 200, "base_seed": 13},
        {"xi0": [1.0, 1.0, 1.0]},
    )


def preset_reduction_open_loop() -> dict:
    """Open-loop physical ensemble for selection statistics."""
    return _base(
        "physical",
        BASE_STATE_IMAG,
        {"kind": "zero", "target": 0},
        {"trajectories": 2000, "base_seed": 14},
        {"theta0": [0.0, 0.0, 0.0, 0.0]},
        outputs={"directory": "out", "per_trajectory": False},
    )


def preset_reduction_synthetic() -> dict:
    """Raw-noise ensemble checking the mean Lyapunov decay bound."""
    return _base(
        "synthetic",
        BASE_STATE_IMAG,
        {"kind": "zero", "target": 0},
        {"trajectories": 1000, "base_seed": 15},
        {"theta0": [0.0, 0.0, 0.0, 0.0]},
        outputs={"directory": "out", "per_trajectory": False},
    )


def preset_assumption_audit() -> dict:
    """Small closed-loop run whose main product is the admissibility report."""
    cfg = _base(
        "physical",
        BASE_STATE_IMAG,
        {"kind": "xi_edge", "alpha_gain": 10.0, "beta_exp": 5.0, "target": 0},
        {"trajectories": 8, "base_seed": 16},
        {"xi0": [1.0, 1.0, 1.0]},
    )
    cfg["integrator"]["horizon"] = 1.25
    return cfg


PRESETS = {
    "figure1": preset_figure1,
    "figure2": preset_figure2,
    "figure3": preset_figure3,
    "reduction_open_loop": preset_reduction_open_loop,
    "reduction_synthetic": preset_reduction_synthetic,
    "assumption_audit": preset_assumption_audit,
}


def preset_dict(name: str) -> dict:
    try:
        builder = PRESETS[name]
    except KeyError:
        raise ConfigError(
            f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}"
        ) from None
    return builder()
