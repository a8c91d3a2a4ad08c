"""Angular-momentum operators, measurement superoperators, and state metrics.

All matrix operations broadcast over leading batch axes, so a stack of
states shaped ``(B, N, N)`` moves through the same code path as a single
``(N, N)`` state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, DomainError

# Tolerances for admission into the physical state set.
HERMITICITY_TOL = 1e-12
TRACE_TOL = 1e-10
EIG_FLOOR = -1e-8


def dag(a: np.ndarray) -> np.ndarray:
    """Conjugate transpose on the trailing two axes."""
    return np.conj(np.swapaxes(a, -1, -2))


def hermitize(a: np.ndarray) -> np.ndarray:
    """Average a matrix with its conjugate transpose."""
    return 0.5 * (a + dag(a))


def trace(a: np.ndarray) -> np.ndarray:
    """Trace over the trailing two axes."""
    return np.einsum("...ii->...", a)


def expect(op: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Tr(op @ rho), batched over leading axes of rho."""
    return np.einsum("ij,...ji->...", op, rho)


def _as_matrix(x) -> np.ndarray:
    data = getattr(x, "data", x)
    return np.asarray(data, dtype=complex)


@dataclass(frozen=True)
class DensityMatrix:
    """A Hermitian, unit-trace, positive-semidefinite matrix.

    Positivity is enforced up to a small numerical floor so states emerging
    from a stochastic integrator remain admissible.
    """

    data: np.ndarray

    @classmethod
    def from_array(cls, arr) -> "DensityMatrix":
        a = _as_matrix(arr)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionMismatchError(f"expected a square matrix, got shape {a.shape}")
        if np.max(np.abs(a - dag(a))) > HERMITICITY_TOL:
            raise DomainError("matrix is not Hermitian within tolerance")
        tr = trace(a)
        if abs(tr - 1.0) > TRACE_TOL:
            raise DomainError(f"trace {tr} deviates from 1 beyond tolerance")
        w = np.linalg.eigvalsh(hermitize(a))
        if w.min() < EIG_FLOOR:
            raise DomainError(f"minimum eigenvalue {w.min():.3e} below positivity floor")
        return cls(a)

    @property
    def dim(self) -> int:
        return self.data.shape[-1]


@dataclass(frozen=True)
class SystemModel:
    """An N-level angular-momentum system under dispersive measurement.

    The measured observable is J_z with equally spaced eigenvalues
    lambda_k = J - k for spin J = (N - 1) / 2.  Feedback acts through a
    J_y rotation, so the controlled Hamiltonian is omega*J_z + u*J_y.
    """

    dim: int
    eta: float
    omega: float = 1.0
    spin: float = field(init=False)
    jz: np.ndarray = field(init=False)
    jy: np.ndarray = field(init=False)
    eigenvalues: np.ndarray = field(init=False)
    projectors: tuple = field(init=False)

    def __post_init__(self):
        if not isinstance(self.dim, (int, np.integer)) or self.dim < 2:
            raise DimensionMismatchError(f"dimension must be an integer >= 2, got {self.dim}")
        if not (0.0 < self.eta <= 1.0):
            raise DomainError(f"detector efficiency must lie in (0, 1], got {self.eta}")
        n = self.dim
        j = (n - 1) / 2.0
        lam = j - np.arange(n, dtype=float)
        jz = np.diag(lam).astype(complex)
        # Tridiagonal J_y: (J_y)_{q,q+1} = -i c_{q+1} with c_q = sqrt((2J+1-q) q) / 2.
        c = 0.5 * np.sqrt((2 * j + 1 - np.arange(1, n)) * np.arange(1, n))
        jy = np.zeros((n, n), dtype=complex)
        jy[np.arange(n - 1), np.arange(1, n)] = -1j * c
        jy[np.arange(1, n), np.arange(n - 1)] = 1j * c
        projs = []
        for k in range(n):
            p = np.zeros((n, n), dtype=complex)
            p[k, k] = 1.0
            projs.append(p)
        object.__setattr__(self, "spin", j)
        object.__setattr__(self, "eigenvalues", lam)
        object.__setattr__(self, "jz", jz)
        object.__setattr__(self, "jy", jy)
        object.__setattr__(self, "projectors", tuple(projs))

    def hamiltonian(self, u) -> np.ndarray:
        """omega*J_z + u*J_y, batched if u carries leading axes."""
        u = np.asarray(u)
        return self.omega * self.jz + u[..., None, None] * self.jy


def build_system(dim: int, eta: float, omega: float = 1.0) -> SystemModel:
    """Construct the operator set for an N-level system."""
    return SystemModel(dim=dim, eta=eta, omega=omega)


def _check_square_pair(rho: np.ndarray, op: np.ndarray):
    if rho.shape[-1] != rho.shape[-2]:
        raise DimensionMismatchError(f"state is not square: {rho.shape}")
    if op.shape != rho.shape[-2:]:
        raise DimensionMismatchError(
            f"operator shape {op.shape} does not match state shape {rho.shape[-2:]}"
        )


def superop_F(rho, L) -> np.ndarray:
    """Dissipator L rho L' - (L'L rho + rho L'L)/2, hermitized."""
    rho = _as_matrix(rho)
    L = _as_matrix(L)
    _check_square_pair(rho, L)
    Ld = dag(L)
    LdL = Ld @ L
    out = L @ rho @ Ld - 0.5 * (LdL @ rho + rho @ LdL)
    return hermitize(out)


def superop_G(rho, L, eta: float) -> np.ndarray:
    """Measurement-backaction field sqrt(eta) (L rho + rho L' - Tr[(L+L')rho] rho)."""
    rho = _as_matrix(rho)
    L = _as_matrix(L)
    _check_square_pair(rho, L)
    if not (0.0 < eta <= 1.0):
        raise DomainError(f"detector efficiency must lie in (0, 1], got {eta}")
    m = expect(L + dag(L), rho)
    out = L @ rho + rho @ dag(L) - m[..., None, None] * rho
    return np.sqrt(eta) * hermitize(out)


def superop_Fhat(rho, L, eta: float) -> np.ndarray:
    """Drift of the unnormalized (Zakai) equation in Stratonovich form.

    (1-eta) L rho L' - ((eta L + L') L rho + rho L' (L + eta L')) / 2.
    For Hermitian L this reduces to
    (1-eta) L rho L - (1+eta)/2 (L^2 rho + rho L^2).
    """
    rho = _as_matrix(rho)
    L = _as_matrix(L)
    _check_square_pair(rho, L)
    if not (0.0 < eta <= 1.0):
        raise DomainError(f"detector efficiency must lie in (0, 1], got {eta}")
    Ld = dag(L)
    out = (1.0 - eta) * (L @ rho @ Ld) - 0.5 * (
        ((eta * L + Ld) @ L) @ rho + rho @ (Ld @ (L + eta * Ld))
    )
    return hermitize(out)


def _psd_sqrt(a: np.ndarray) -> np.ndarray:
    """Matrix square root of a Hermitian PSD matrix via eigendecomposition."""
    w, v = np.linalg.eigh(hermitize(a))
    if np.min(w) < EIG_FLOOR:
        raise DomainError(f"matrix has eigenvalue {np.min(w):.3e} below positivity floor")
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)[..., None, :]) @ dag(v)


def fidelity(a, b) -> float:
    """Square-root fidelity Tr sqrt(sqrt(a) b sqrt(a)).

    Equals the nuclear norm of sqrt(a) sqrt(b), which makes the symmetry
    explicit and is numerically stabler than nesting matrix square roots.
    """
    a = _as_matrix(a)
    b = _as_matrix(b)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"shape mismatch: {a.shape} vs {b.shape}")
    sa = _psd_sqrt(a)
    sb = _psd_sqrt(b)
    s = np.linalg.svd(sa @ sb, compute_uv=False)
    return float(np.sum(s)) if s.ndim == 1 else np.sum(s, axis=-1)


def bures_distance(a, b) -> float:
    """Bures distance sqrt(2 - 2 F(a, b)) with F the square-root fidelity.

    For pure b this reduces to sqrt(2 - 2 sqrt(Tr(a b))).
    """
    f = fidelity(a, b)
    return np.sqrt(np.clip(2.0 - 2.0 * f, 0.0, None))


def bures_to_level(populations: np.ndarray, k: int) -> np.ndarray:
    """Bures distance to the basis state A_k from level populations only.

    Valid because A_k is pure: d = sqrt(2 - 2 sqrt(Tr(rho A_k))).
    """
    p = np.clip(np.asarray(populations)[..., k], 0.0, None)
    return np.sqrt(np.clip(2.0 - 2.0 * np.sqrt(p), 0.0, None))


@dataclass(frozen=True)
class ScalarDiagnostics:
    """Scalar functionals of a state used by the reduced diagonal dynamics.

    variance_z   population variance of J_z
    p_n          lambda_n - <J_z>, one entry per level
    theta_n      Tr(i [J_y, rho] A_n), one entry per level
    t_gap        <J_z>_rho - <J_z>_cmp against the comparison state
    """

    variance_z: float
    p_n: np.ndarray
    theta_n: np.ndarray
    t_gap: float


def scalar_diagnostics(rho, model: SystemModel, rho_cmp=None) -> ScalarDiagnostics:
    """Evaluate the scalar functionals driving the diagonal dynamics."""
    rho = _as_matrix(rho)
    _check_square_pair(rho, model.jz)
    lam = model.eigenvalues
    pops = np.real(np.einsum("...ii->...i", rho))
    mean_z = pops @ lam
    var_z = pops @ lam**2 - mean_z**2
    p_n = lam - mean_z[..., None]
    comm = 1j * (model.jy @ rho - rho @ model.jy)
    theta_n = np.real(np.einsum("...ii->...i", comm))
    if rho_cmp is None:
        t_gap = np.zeros_like(mean_z)
    else:
        pops_c = np.real(np.einsum("...ii->...i", _as_matrix(rho_cmp)))
        t_gap = mean_z - pops_c @ lam
    return ScalarDiagnostics(
        variance_z=var_z, p_n=p_n, theta_n=theta_n, t_gap=t_gap
    )
