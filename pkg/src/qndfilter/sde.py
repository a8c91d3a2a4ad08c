"""Stochastic integration primitives: noise streams, Euler steps, state repair."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BlowUpError, DomainError, StateCorruptionError
from .quantum import dag, hermitize, trace

# Eigenvalues below this are unrepairable; above it (but below zero) they
# are clipped during renormalization.
CORRUPTION_FLOOR = -1e-6


@dataclass
class NoiseStream:
    """Reproducible Wiener increments from a counter-based generator.

    Stream ``i`` of a given seed is statistically independent of stream
    ``j != i`` and of the block size used to draw from it, so scalar and
    vectorized consumers see identical sequences.
    """

    seed: int
    dt: float
    stream: int = 0
    cursor: int = field(default=0, init=False)

    def __post_init__(self):
        if self.dt <= 0.0:
            raise DomainError(f"time step must be positive, got {self.dt}")
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream,))
        self._gen = np.random.Generator(np.random.Philox(ss))

    def sample_increment(self) -> float:
        """Draw the next N(0, dt) increment."""
        self.cursor += 1
        return float(self._gen.standard_normal() * np.sqrt(self.dt))

    def sample_block(self, n: int) -> np.ndarray:
        """Draw the next n increments at once; same sequence as n scalar draws."""
        self.cursor += n
        return self._gen.standard_normal(n) * np.sqrt(self.dt)


@dataclass(frozen=True)
class IntegratorConfig:
    """Fixed-step Euler-Maruyama configuration.

    The horizon must be a whole number of steps within rounding;
    ``record_stride`` thins the stored time grid (every step is still
    integrated and checked).
    """

    dt: float = 5.0 * 2.0**-12
    horizon: float = 5.0
    renormalize: bool = True
    clamp_psd: bool = True
    record_stride: int = 0  # 0 means pick automatically (~512 recorded points)

    def __post_init__(self):
        if self.dt <= 0.0:
            raise DomainError(f"time step must be positive, got {self.dt}")
        if self.horizon <= 0.0:
            raise DomainError(f"horizon must be positive, got {self.horizon}")
        ratio = self.horizon / self.dt
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise DomainError(
                f"horizon {self.horizon} is not a whole number of steps of {self.dt}"
            )
        if self.record_stride < 0:
            raise DomainError("record_stride must be >= 0")

    @property
    def steps(self) -> int:
        return int(round(self.horizon / self.dt))

    @property
    def stride(self) -> int:
        if self.record_stride:
            return self.record_stride
        return max(1, self.steps // 512)


def euler_step(state, drift, diffusion, dt: float, dw, step_index: int | None = None):
    """One Euler-Maruyama update: state + drift*dt + diffusion*dw.

    dw may carry leading batch axes; it is broadcast against matrix-valued
    states on the trailing axes.
    """
    state = np.asarray(state)
    drift = np.asarray(drift)
    diffusion = np.asarray(diffusion)
    dw = np.asarray(dw)
    if diffusion.ndim > dw.ndim:
        dw = dw.reshape(dw.shape + (1,) * (diffusion.ndim - dw.ndim))
    out = state + drift * dt + diffusion * dw
    if not np.all(np.isfinite(out)):
        raise BlowUpError("integration produced non-finite values", step_index=step_index)
    return out


def stratonovich_to_ito(drift_strat, diffusion, jacobian_action):
    """Convert a Stratonovich drift field to the equivalent Ito drift.

    ``jacobian_action(x, v)`` must evaluate the directional derivative of
    the diffusion field at x along v.  The corrected drift is
    drift_strat(x) + jacobian_action(x, diffusion(x)) / 2.
    """

    def ito_drift(x):
        return drift_strat(x) + 0.5 * jacobian_action(x, diffusion(x))

    return ito_drift


def renormalize(rho, clamp_psd: bool = True, step_index: int | None = None) -> np.ndarray:
    """Repair a post-step density matrix: hermitize, clip, renormalize.

    Eigenvalues in [CORRUPTION_FLOOR, 0) are clipped to zero when
    ``clamp_psd`` is set; anything below that floor, or a non-positive
    trace, aborts with a corruption error.
    """
    rho = hermitize(np.asarray(rho, dtype=complex))
    tr = np.real(trace(rho))
    if np.any(tr <= 0.0) or not np.all(np.isfinite(rho)):
        raise StateCorruptionError(
            "state trace is non-positive or non-finite", step_index=step_index
        )
    if clamp_psd:
        w = np.linalg.eigvalsh(rho)
        wmin = w.min()
        if wmin < CORRUPTION_FLOOR:
            raise StateCorruptionError(
                f"eigenvalue {wmin:.3e} below corruption floor", step_index=step_index
            )
        if wmin < 0.0:
            w2, v = np.linalg.eigh(rho)
            w2 = np.clip(w2, 0.0, None)
            rho = (v * w2[..., None, :]) @ dag(v)
            tr = np.real(trace(rho))
    return rho / tr[..., None, None]
