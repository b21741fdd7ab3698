"""Dense kets, density matrices and local operations on a few qubits.

Two-qubit operators are always written in the ordered basis
``{|HH>, |HV>, |VH>, |VV>}`` (first factor = photon A). Three-photon
operators use the ordering A (x) B (x) E.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegenerateOutcomeError, InvalidArgumentError

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_TOL = 1e-10
MIN_PROBABILITY = 1e-14
_ALLOWED_DIMS = (2, 4, 8)


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=complex)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Ket:
    """Normalized pure state vector."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amp = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amp.size not in _ALLOWED_DIMS:
            raise InvalidArgumentError(f"ket dimension {amp.size} not in {_ALLOWED_DIMS}")
        norm = np.linalg.norm(amp)
        if norm == 0:
            raise InvalidArgumentError("zero vector is not a state")
        if abs(norm - 1.0) > 1e-12:
            raise InvalidArgumentError(f"ket not normalized (norm={norm!r}); use Ket.normalized")
        object.__setattr__(self, "amplitudes", _readonly(amp))

    @classmethod
    def normalized(cls, amplitudes) -> "Ket":
        amp = np.asarray(amplitudes, dtype=complex).reshape(-1)
        norm = np.linalg.norm(amp)
        if norm == 0:
            raise InvalidArgumentError("zero vector is not a state")
        return cls(amp / norm)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def projector(self) -> np.ndarray:
        return np.outer(self.amplitudes, self.amplitudes.conj())

    def dm(self) -> "DensityMatrix":
        return DensityMatrix(self.projector())

    def __matmul__(self, other: "Ket") -> "Ket":
        return Ket(np.kron(self.amplitudes, other.amplitudes))


H = Ket([1, 0])
V = Ket([0, 1])
D = Ket.normalized([1, 1])
A = Ket.normalized([1, -1])
R = Ket.normalized([1, 1j])
L = Ket.normalized([1, -1j])
POLARIZATIONS = {"H": H, "V": V, "D": D, "A": A, "R": R, "L": L}

SINGLET = Ket.normalized([0, 1, -1, 0])
#: (|HV> + i|VH>)/sqrt(2), the source state of the experiment.
PSI_IN = Ket.normalized([0, 1, 1j, 0])


def polarization(label: str) -> Ket:
    try:
        return POLARIZATIONS[label.upper()]
    except KeyError:
        raise InvalidArgumentError(f"unknown polarization label {label!r}") from None


def orthogonal(ket: Ket) -> Ket:
    """Return the qubit state orthogonal to ``ket`` (fixed phase convention)."""
    if ket.dim != 2:
        raise InvalidArgumentError("orthogonal complement only defined for qubits")
    a, b = ket.amplitudes
    return Ket([-np.conj(b), np.conj(a)])


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian, positive semidefinite, unit-trace operator.

    Eigenvalues in ``[-PSD_TOL, 0)`` are treated as round-off and clipped on
    construction; anything more negative is rejected.
    """

    data: np.ndarray
    check: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        rho = np.asarray(self.data, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise InvalidArgumentError(f"density matrix must be square, got shape {rho.shape}")
        if rho.shape[0] not in _ALLOWED_DIMS:
            raise InvalidArgumentError(f"dimension {rho.shape[0]} not in {_ALLOWED_DIMS}")
        if self.check:
            rho = _validated(rho)
        object.__setattr__(self, "data", _readonly(rho))

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.data, dtype=dtype)

    def __eq__(self, other):
        if not isinstance(other, DensityMatrix):
            return NotImplemented
        return bool(np.array_equal(self.data, other.data))

    __hash__ = None

    def allclose(self, other, atol: float = 1e-12) -> bool:
        return np.allclose(self.data, np.asarray(other), atol=atol, rtol=0)

    def to_dict(self) -> dict:
        return {"dim": self.dim, "re": self.data.real.tolist(), "im": self.data.imag.tolist()}

    @classmethod
    def from_dict(cls, payload: dict) -> "DensityMatrix":
        rho = np.asarray(payload["re"], dtype=float) + 1j * np.asarray(payload["im"], dtype=float)
        if rho.shape != (payload["dim"], payload["dim"]):
            raise InvalidArgumentError("serialized matrix shape does not match 'dim'")
        return cls(rho)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "DensityMatrix":
        return cls.from_dict(json.loads(text))


def _validated(rho: np.ndarray) -> np.ndarray:
    if np.max(np.abs(rho - rho.conj().T)) > HERMITIAN_TOL:
        raise InvalidArgumentError("matrix is not Hermitian")
    rho = (rho + rho.conj().T) / 2
    tr = np.trace(rho).real
    if abs(tr - 1.0) > TRACE_TOL:
        raise InvalidArgumentError(f"trace is {tr!r}, expected 1")
    w, v = np.linalg.eigh(rho)
    if w.min() < -PSD_TOL:
        raise InvalidArgumentError(f"negative eigenvalue {w.min()!r}")
    if w.min() < 0:
        w = np.clip(w, 0, None)
        rho = (v * w) @ v.conj().T
        rho = rho / np.trace(rho).real
    return rho


def as_array(rho) -> np.ndarray:
    if isinstance(rho, DensityMatrix):
        return rho.data
    if isinstance(rho, Ket):
        return rho.projector()
    return np.asarray(rho, dtype=complex)


def maximally_mixed(dim: int) -> DensityMatrix:
    return DensityMatrix(np.eye(dim) / dim)


def psd_project(rho) -> np.ndarray:
    """Clip negative eigenvalues of a Hermitian matrix and renormalize to trace 1."""
    m = as_array(rho)
    m = (m + m.conj().T) / 2
    w, v = np.linalg.eigh(m)
    w = np.clip(w, 0, None)
    if w.sum() <= 0:
        raise InvalidArgumentError("matrix has no positive part")
    w = w / w.sum()
    return (v * w) @ v.conj().T


def tensor(a, b) -> DensityMatrix:
    return DensityMatrix(np.kron(as_array(a), as_array(b)))


def _check_dims(n: int, dims: Sequence[int]) -> list[int]:
    dims = [int(d) for d in dims]
    if any(d < 1 for d in dims) or int(np.prod(dims)) != n:
        raise InvalidArgumentError(f"subsystem dims {dims} do not multiply to {n}")
    return dims


def ptrace(rho: np.ndarray, keep: Sequence[int], dims: Sequence[int]) -> np.ndarray:
    """Partial trace of a (possibly unnormalized) operator, keeping ``keep``."""
    rho = np.asarray(rho, dtype=complex)
    dims = _check_dims(rho.shape[0], dims)
    keep = sorted(set(int(k) for k in keep))
    if any(k < 0 or k >= len(dims) for k in keep):
        raise InvalidArgumentError(f"subsystem indices {keep} out of range")
    n = len(dims)
    t = rho.reshape(dims + dims)
    # trace out from the highest index down so remaining axis numbers stay valid
    for ax in reversed(range(n)):
        if ax not in keep:
            nsub = t.ndim // 2
            t = np.trace(t, axis1=ax, axis2=ax + nsub)
    d = int(np.prod([dims[k] for k in keep])) if keep else 1
    return t.reshape(d, d)


def partial_trace(rho, keep: Sequence[int], dims: Sequence[int]) -> DensityMatrix:
    return DensityMatrix(ptrace(as_array(rho), keep, dims))


def embed(op: np.ndarray, subsystem: int, dims: Sequence[int]) -> np.ndarray:
    """Lift a single-subsystem operator to the full space."""
    out = np.array([[1.0 + 0j]])
    for k, d in enumerate(dims):
        out = np.kron(out, op if k == subsystem else np.eye(d))
    return out


def project(rho, subsystem: int, ket: Ket, dims: Sequence[int]) -> tuple[DensityMatrix, float]:
    """Project one subsystem on ``ket`` and return the state of the rest.

    Returns the renormalized post-measurement state of the remaining
    subsystems together with the outcome probability.
    """
    m = as_array(rho)
    dims = _check_dims(m.shape[0], dims)
    if not 0 <= subsystem < len(dims):
        raise InvalidArgumentError(f"subsystem {subsystem} out of range")
    if ket.dim != dims[subsystem]:
        raise InvalidArgumentError("ket dimension does not match the measured subsystem")
    proj = embed(ket.projector(), subsystem, dims)
    post = proj @ m @ proj
    prob = float(np.trace(post).real)
    if prob < MIN_PROBABILITY:
        raise DegenerateOutcomeError(f"outcome probability {prob:.3g} is zero")
    rest = [k for k in range(len(dims)) if k != subsystem]
    reduced = ptrace(post, rest, dims) / prob
    return DensityMatrix(reduced), prob


@dataclass(frozen=True)
class LocalFilter:
    """Diagonal polarization filter on one arm of a photon pair.

    ``gain_h`` and ``gain_v`` are amplitude transmissions; the intensity
    transmission of a polarization is the gain squared.
    """

    side: str
    gain_h: float = 1.0
    gain_v: float = 1.0

    def __post_init__(self):
        if self.side not in ("A", "B"):
            raise InvalidArgumentError(f"filter side must be 'A' or 'B', got {self.side!r}")
        for g in (self.gain_h, self.gain_v):
            if not 0.0 <= g <= 1.0:
                raise InvalidArgumentError(f"filter gain {g!r} outside [0, 1]")
        if max(self.gain_h, self.gain_v) < 1.0 - 1e-12:
            raise InvalidArgumentError("a filter must fully transmit one polarization")

    @classmethod
    def from_intensities(cls, side: str, t_h: float = 1.0, t_v: float = 1.0) -> "LocalFilter":
        return cls(side, float(np.sqrt(t_h)), float(np.sqrt(t_v)))

    def kraus(self) -> np.ndarray:
        k = np.diag([self.gain_h, self.gain_v]).astype(complex)
        return np.kron(k, np.eye(2)) if self.side == "A" else np.kron(np.eye(2), k)

    @property
    def is_identity(self) -> bool:
        return self.gain_h == 1.0 and self.gain_v == 1.0


def apply_filter(rho, filt: LocalFilter) -> tuple[DensityMatrix, float]:
    """Apply ``filt`` to a two-qubit state; return (normalized state, pass probability)."""
    m = as_array(rho)
    if m.shape != (4, 4):
        raise InvalidArgumentError("filters act on two-qubit (4x4) states")
    k = filt.kraus()
    out = k @ m @ k.conj().T
    prob = float(np.trace(out).real)
    if prob < MIN_PROBABILITY:
        raise DegenerateOutcomeError(f"filter pass probability {prob:.3g} is zero")
    return DensityMatrix(out / prob), prob
