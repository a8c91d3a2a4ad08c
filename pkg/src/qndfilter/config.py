"""Experiment configuration: dataclasses, JSON schema, validation.

Configurations are plain JSON.  Complex matrices are written row-major as
nested lists of two-element ``[re, im]`` pairs.  Example skeleton::

    {
      "system":     {"dim": 4, "eta": 0.5, "omega": 1.0},
      "integrator": {"dt": 0.001220703125, "horizon": 5.0,
                     "renormalize": true, "clamp_psd": true},
      "initial":    {"rho0": [[[0.2,0], ...]], "rho_bar0": [[[0.2,0], ...]],
                     "theta0": [0,0,0,0]},
      "controller": {"kind": "rho_theta_power", "alpha_gain": 10.0,
                     "beta_exp": 5.0, "target": 0},
      "mode":       "physical",
      "ensemble":   {"trajectories": 200, "base_seed": 11},
      "outputs":    {"directory": "out", "per_trajectory": true}
    }

Exactly one of ``initial.theta0`` / ``initial.xi0`` selects the companion
chart.  In synthetic mode ``rho0`` is not used and may be omitted.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError, QndFilterError
from .family import FamilyContext, make_family
from .feedback import ControllerSpec
from .filters import NoiseMode
from .quantum import SystemModel, build_system, dag, trace
from .sde import IntegratorConfig


@dataclass(frozen=True)
class SystemConfig:
    dim: int = 4
    eta: float = 0.5
    omega: float = 1.0


@dataclass(frozen=True)
class EnsembleConfig:
    trajectories: int = 1
    base_seed: int = 0


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "out"
    per_trajectory: bool = True


@dataclass(frozen=True)
class InitialConfig:
    rho_bar0: np.ndarray
    rho0: np.ndarray | None = None
    theta0: np.ndarray | None = None
    xi0: np.ndarray | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    system: SystemConfig
    integrator: IntegratorConfig
    initial: InitialConfig
    controller: ControllerSpec
    mode: NoiseMode
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    outputs: OutputConfig = field(default_factory=OutputConfig)

    @property
    def companion_kind(self) -> str:
        return "xi" if self.initial.xi0 is not None else "theta"

    def build_model(self) -> SystemModel:
        return build_system(self.system.dim, self.system.eta, self.system.omega)

    def build_family(self, model: SystemModel | None = None) -> FamilyContext:
        model = model or self.build_model()
        return make_family(self.initial.rho_bar0, model, self.controller.target)

    def initial_rho0(self) -> np.ndarray:
        if self.initial.rho0 is None:
            raise ConfigError("initial.rho0 is required in physical mode")
        return self.initial.rho0

    def initial_companion(self) -> np.ndarray:
        if self.initial.xi0 is not None:
            return self.initial.xi0
        if self.initial.theta0 is not None:
            return self.initial.theta0
        return np.zeros(self.system.dim)


def matrix_to_pairs(mat: np.ndarray) -> list:
    """Encode a complex matrix as nested [re, im] pairs."""
    mat = np.asarray(mat, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in mat]


def pairs_to_matrix(obj, path: str) -> np.ndarray:
    """Decode nested [re, im] pairs into a complex matrix."""
    try:
        arr = np.asarray(obj, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: expected nested [re, im] pairs ({exc})") from None
    if arr.ndim != 3 or arr.shape[-1] != 2 or arr.shape[0] != arr.shape[1]:
        raise ConfigError(
            f"{path}: expected an NxNx2 nesting of [re, im] pairs, got shape {arr.shape}"
        )
    return arr[..., 0] + 1j * arr[..., 1]


def _require(table: dict, key: str, path: str):
    if key not in table:
        raise ConfigError(f"{path}.{key}: missing required key")
    return table[key]


def _get_number(table, key, path, default=None, required=False):
    if key not in table:
        if required:
            raise ConfigError(f"{path}.{key}: missing required key")
        return default
    val = table[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{path}.{key}: expected a number, got {val!r}")
    return val


def _check_state(mat: np.ndarray, path: str):
    if np.max(np.abs(mat - dag(mat))) > 1e-10:
        raise ConfigError(f"{path}: matrix must be Hermitian")
    if abs(trace(mat) - 1.0) > 1e-8:
        raise ConfigError(f"{path}: matrix must have unit trace, got {trace(mat).real}")


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Build and validate an ExperimentConfig from a JSON-shaped dict."""
    if not isinstance(raw, dict):
        raise ConfigError("top level: expected a JSON object")
    known = {"system", "integrator", "initial", "controller", "mode", "ensemble", "outputs"}
    for key in raw:
        if key not in known:
            raise ConfigError(f"top level: unknown key {key!r}")

    sys_raw = raw.get("system", {})
    system = SystemConfig(
        dim=int(_get_number(sys_raw, "dim", "system", default=4)),
        eta=float(_get_number(sys_raw, "eta", "system", required=True)),
        omega=float(_get_number(sys_raw, "omega", "system", default=1.0)),
    )
    if system.dim < 2:
        raise ConfigError(f"system.dim: must be >= 2, got {system.dim}")
    if not 0.0 < system.eta <= 1.0:
        raise ConfigError(f"system.eta: must lie in (0, 1], got {system.eta}")

    integ_raw = raw.get("integrator", {})
    try:
        integrator = IntegratorConfig(
            dt=float(_get_number(integ_raw, "dt", "integrator", default=5.0 * 2.0**-12)),
            horizon=float(_get_number(integ_raw, "horizon", "integrator", default=5.0)),
            renormalize=bool(integ_raw.get("renormalize", True)),
            clamp_psd=bool(integ_raw.get("clamp_psd", True)),
            record_stride=int(_get_number(integ_raw, "record_stride", "integrator", default=0)),
        )
    except DomainError as exc:
        raise ConfigError(f"integrator: {exc}") from None

    mode_raw = raw.get("mode", "physical")
    try:
        mode = NoiseMode(mode_raw)
    except ValueError:
        raise ConfigError(
            f"mode: expected 'physical' or 'synthetic', got {mode_raw!r}"
        ) from None

    ctrl_raw = raw.get("controller", {"kind": "zero"})
    try:
        controller = ControllerSpec(
            kind=_require(ctrl_raw, "kind", "controller"),
            alpha_gain=float(_get_number(ctrl_raw, "alpha_gain", "controller", default=1.0)),
            beta_exp=float(_get_number(ctrl_raw, "beta_exp", "controller", default=1.0)),
            bump_offset=float(_get_number(ctrl_raw, "bump_offset", "controller", default=2.0)),
            bump_radius=float(_get_number(ctrl_raw, "bump_radius", "controller", default=0.1)),
            target=int(_get_number(ctrl_raw, "target", "controller", default=0)),
        )
    except DomainError as exc:
        raise ConfigError(f"controller: {exc}") from None
    if controller.target >= system.dim:
        raise ConfigError(
            f"controller.target: {controller.target} outside 0..{system.dim - 1}"
        )

    init_raw = raw.get("initial")
    if not isinstance(init_raw, dict):
        raise ConfigError("initial: missing required section")
    rho_bar0 = pairs_to_matrix(_require(init_raw, "rho_bar0", "initial"), "initial.rho_bar0")
    _check_state(rho_bar0, "initial.rho_bar0")
    rho0 = None
    if init_raw.get("rho0") is not None:
        rho0 = pairs_to_matrix(init_raw["rho0"], "initial.rho0")
        _check_state(rho0, "initial.rho0")
    theta0 = xi0 = None
    if init_raw.get("theta0") is not None and init_raw.get("xi0") is not None:
        raise ConfigError("initial: give either theta0 or xi0, not both")
    if init_raw.get("theta0") is not None:
        theta0 = np.asarray(init_raw["theta0"], dtype=float)
        if theta0.shape != (system.dim,):
            raise ConfigError(
                f"initial.theta0: expected {system.dim} components, got shape {theta0.shape}"
            )
    if init_raw.get("xi0") is not None:
        xi0 = np.asarray(init_raw["xi0"], dtype=float)
        if xi0.shape != (system.dim - 1,):
            raise ConfigError(
                f"initial.xi0: expected {system.dim - 1} components, got shape {xi0.shape}"
            )
    for mat, name in ((rho_bar0, "initial.rho_bar0"), (rho0, "initial.rho0")):
        if mat is not None and mat.shape != (system.dim, system.dim):
            raise ConfigError(f"{name}: shape {mat.shape} does not match system.dim")
    initial = InitialConfig(rho_bar0=rho_bar0, rho0=rho0, theta0=theta0, xi0=xi0)

    if mode == NoiseMode.PHYSICAL and rho0 is None:
        raise ConfigError("initial.rho0: required in physical mode")

    ens_raw = raw.get("ensemble", {})
    ensemble = EnsembleConfig(
        trajectories=int(_get_number(ens_raw, "trajectories", "ensemble", default=1)),
        base_seed=int(_get_number(ens_raw, "base_seed", "ensemble", default=0)),
    )
    if ensemble.trajectories < 1:
        raise ConfigError("ensemble.trajectories: must be >= 1")

    out_raw = raw.get("outputs", {})
    outputs = OutputConfig(
        directory=str(out_raw.get("directory", "out")),
        per_trajectory=bool(out_raw.get("per_trajectory", True)),
    )

    exp = ExperimentConfig(
        system=system,
        integrator=integrator,
        initial=initial,
        controller=controller,
        mode=mode,
        ensemble=ensemble,
        outputs=outputs,
    )
    # Building the family surfaces degenerate base states (zero weight on
    # some measurement level) as configuration errors up front.
    try:
        exp.build_family()
    except QndFilterError as exc:
        raise ConfigError(f"initial.rho_bar0: {exc}") from None
    return exp


def parse_config_text(text: str, source: str = "<config>") -> ExperimentConfig:
    """Parse a JSON config, reporting line/column on syntax errors."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return config_from_dict(raw)


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read(), source=str(path))


def apply_overrides(raw: dict, overrides: list) -> dict:
    """Apply ``key.path=value`` overrides to a config dict.

    Values are parsed as JSON literals where possible, else kept as
    strings.  Intermediate objects are created as needed.
    """
    out = json.loads(json.dumps(raw))  # deep copy, JSON types only
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected key.path=value")
        key, _, value = item.partition("=")
        try:
            parsed = json.loads(value)
        except json.JSONDecodeError:
            parsed = value
        node = out
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {item!r}: {part} is not an object")
        node[parts[-1]] = parsed
    return out


def config_to_dict(exp: ExperimentConfig) -> dict:
    """Serialize a config back to its JSON shape (for manifests)."""
    init = {"rho_bar0": matrix_to_pairs(exp.initial.rho_bar0)}
    if exp.initial.rho0 is not None:
        init["rho0"] = matrix_to_pairs(exp.initial.rho0)
    if exp.initial.theta0 is not None:
        init["theta0"] = [float(v) for v in exp.initial.theta0]
    if exp.initial.xi0 is not None:
        init["xi0"] = [float(v) for v in exp.initial.xi0]
    return {
        "system": {
            "dim": exp.system.dim,
            "eta": exp.system.eta,
            "omega": exp.system.omega,
        },
        "integrator": {
            "dt": exp.integrator.dt,
            "horizon": exp.integrator.horizon,
            "renormalize": exp.integrator.renormalize,
            "clamp_psd": exp.integrator.clamp_psd,
            "record_stride": exp.integrator.record_stride,
        },
        "initial": init,
        "controller": {
            "kind": exp.controller.kind,
            "alpha_gain": exp.controller.alpha_gain,
            "beta_exp": exp.controller.beta_exp,
            "bump_offset": exp.controller.bump_offset,
            "bump_radius": exp.controller.bump_radius,
            "target": exp.controller.target,
        },
        "mode": exp.mode.value,
        "ensemble": {
            "trajectories": exp.ensemble.trajectories,
            "base_seed": exp.ensemble.base_seed,
        },
        "outputs": {
            "directory": exp.outputs.directory,
            "per_trajectory": exp.outputs.per_trajectory,
        },
    }
