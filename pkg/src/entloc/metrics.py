"""Entanglement and nonlocality measures for two-qubit states."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .qstate import as_array

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (SIGMA_X, SIGMA_Y, SIGMA_Z)
_YY = np.kron(SIGMA_Y, SIGMA_Y)
#: eigenvalues of a density matrix below this are treated as exact zeros
RANK_TOL = 1e-13


def _sqrtm_psd(m: np.ndarray, rank_tol: float = 0.0) -> np.ndarray:
    w, v = np.linalg.eigh((m + m.conj().T) / 2)
    w = np.where(w > rank_tol, w, 0.0)
    return (v * np.sqrt(w)) @ v.conj().T


def concurrence(rho, rank_tol: float = RANK_TOL) -> float:
    """Wootters concurrence.

    With ``rho = Psi Psi^+`` the lambdas are the singular values of
    ``Psi^T (Y x Y) Psi``, equivalently the square roots of the eigenvalues
    of the Hermitian ``sqrt(rho) rho~ sqrt(rho)``. Eigenvalues of ``rho``
    below ``rank_tol`` are dropped, which avoids the ``sqrt(machine eps)``
    error the square roots would otherwise give on rank-deficient states.
    """
    m = as_array(rho)
    w, v = np.linalg.eigh((m + m.conj().T) / 2)
    keep = w > rank_tol
    psi = v[:, keep] * np.sqrt(w[keep])
    lam = np.zeros(4)
    sv = np.linalg.svd(psi.T @ _YY @ psi, compute_uv=False)
    lam[: sv.size] = sv
    lam = np.sort(lam)[::-1]
    return float(min(1.0, max(0.0, lam[0] - lam[1] - lam[2] - lam[3])))


def correlation_matrix(rho) -> np.ndarray:
    m = as_array(rho)
    return np.array(
        [[np.trace(m @ np.kron(si, sj)).real for sj in PAULIS] for si in PAULIS]
    )


def bell_max(rho) -> float:
    """Maximal CHSH value from the Horodecki criterion, 2*sqrt(m1 + m2)."""
    t = correlation_matrix(rho)
    m = np.sort(np.linalg.eigvalsh(t.T @ t))[::-1]
    return float(2.0 * np.sqrt(max(m[0] + m[1], 0.0)))


def fidelity(rho, sigma) -> float:
    """Uhlmann fidelity Tr^2 sqrt(sqrt(rho) sigma sqrt(rho)).

    Evaluated as the squared nuclear norm of ``sqrt(rho) sqrt(sigma)``.
    """
    a = _sqrtm_psd(as_array(rho), RANK_TOL)
    b = _sqrtm_psd(as_array(sigma), RANK_TOL)
    f = np.sum(np.linalg.svd(a @ b, compute_uv=False)) ** 2
    return float(min(1.0, max(0.0, f)))


def purity(rho) -> float:
    m = as_array(rho)
    return float(np.trace(m @ m).real)


def linear_entropy(rho) -> float:
    """Normalized linear entropy (4/3)(1 - Tr rho^2) of a two-qubit state."""
    return float(min(1.0, max(0.0, 4.0 / 3.0 * (1.0 - purity(rho)))))


def partial_transpose(rho) -> np.ndarray:
    m = as_array(rho).reshape(2, 2, 2, 2)
    return m.transpose(0, 3, 2, 1).reshape(4, 4)


def is_ppt(rho, tol: float = 1e-12) -> bool:
    return bool(np.linalg.eigvalsh(partial_transpose(rho)).min() >= -tol)


@dataclass(frozen=True)
class MetricReport:
    concurrence: float
    bell_max: float
    linear_entropy: float
    purity: float

    def to_dict(self) -> dict:
        return asdict(self)


def report(rho) -> MetricReport:
    return MetricReport(
        concurrence=concurrence(rho),
        bell_max=bell_max(rho),
        linear_entropy=linear_entropy(rho),
        purity=purity(rho),
    )
