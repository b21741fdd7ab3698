"""Simulated two-photon polarization tomography.

Counts are Poisson with mean ``rate * duration * Born probability`` plus a
constant accidental background ``accidental_rate * duration`` that does not
depend on the setting. The state is reconstructed by linear least squares
over the 16 Pauli-product coefficients, then projected onto the set of
density matrices.
"""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DegenerateOutcomeError, InvalidArgumentError, UnidentifiableError
from .metrics import PAULIS, MetricReport, concurrence, fidelity, linear_entropy, report
from .qstate import DensityMatrix, Ket, as_array, polarization

_BASIS_1Q = (np.eye(2, dtype=complex),) + PAULIS
PAULI_PRODUCTS = tuple(np.kron(a, b) for a, b in itertools.product(_BASIS_1Q, repeat=2))
CSV_COLUMNS = ("setting_label", "coincidences", "duration_s", "accidental_estimate")


@dataclass(frozen=True)
class MeasurementSetting:
    projector_A: Ket
    projector_B: Ket
    label: str

    def __post_init__(self):
        if self.projector_A.dim != 2 or self.projector_B.dim != 2:
            raise InvalidArgumentError("settings project single-photon polarizations")

    @property
    def operator(self) -> np.ndarray:
        return np.kron(self.projector_A.projector(), self.projector_B.projector())


def standard_settings(labels: str = "HVDARL") -> list[MeasurementSetting]:
    """All ordered pairs of the given polarization labels (36 by default)."""
    return [
        MeasurementSetting(polarization(a), polarization(b), a + b)
        for a, b in itertools.product(labels, repeat=2)
    ]


@dataclass(frozen=True)
class CountRecord:
    label: str
    coincidences: float
    duration_s: float
    accidental_estimate: float = 0.0

    def __post_init__(self):
        if self.coincidences < 0 or self.accidental_estimate < 0:
            raise InvalidArgumentError("counts and accidental estimates must be nonnegative")
        if self.duration_s <= 0:
            raise InvalidArgumentError("duration must be positive")


@dataclass(frozen=True)
class ReconstructionResult:
    rho_hat: DensityMatrix
    metrics: MetricReport
    raw: np.ndarray = field(repr=False, compare=False)
    uncertainties: Optional[dict] = None


def simulate_counts(
    rho,
    settings: Sequence[MeasurementSetting],
    rate_per_s: float,
    duration_s: float,
    accidental_rate: float = 0.0,
    seed: int = 0,
) -> list[CountRecord]:
    if rate_per_s <= 0:
        raise InvalidArgumentError("rate_per_s must be positive")
    if duration_s <= 0 or accidental_rate < 0:
        raise InvalidArgumentError("duration must be positive and accidental rate nonnegative")
    m = as_array(rho)
    rng = np.random.default_rng(seed)
    acc = accidental_rate * duration_s
    ops = np.array([s.operator for s in settings])
    born = np.clip(np.einsum("ij,sji->s", m, ops).real, 0.0, None)
    counts = rng.poisson(rate_per_s * duration_s * born + acc)
    return [CountRecord(s.label, int(n), duration_s, acc) for s, n in zip(settings, counts)]


def subtract_accidentals(records: Iterable[CountRecord]) -> list[CountRecord]:
    return [
        replace(r, coincidences=max(0.0, r.coincidences - r.accidental_estimate), accidental_estimate=0.0)
        for r in records
    ]


_PAULI_STACK = np.array(PAULI_PRODUCTS)


def _design(settings: Sequence[MeasurementSetting]) -> np.ndarray:
    ops = np.array([s.operator for s in settings])
    # Tr(S P) for every setting S and Pauli product P
    return np.einsum("sij,pji->sp", ops, _PAULI_STACK).real / 4.0


def linear_inversion(records: Sequence[CountRecord], settings: Sequence[MeasurementSetting]) -> np.ndarray:
    """Least-squares Hermitian estimate with unit trace; may have negative eigenvalues."""
    if len(records) != len(settings):
        raise InvalidArgumentError("one record per setting expected")
    by_label = {s.label: s for s in settings}
    try:
        ordered = [by_label[r.label] for r in records]
    except KeyError as exc:
        raise InvalidArgumentError(f"record for unknown setting {exc.args[0]!r}") from None
    a = _design(ordered)
    if np.linalg.matrix_rank(a) < 16:
        raise UnidentifiableError("measurement settings do not span the two-qubit operator space")
    rates = np.array([r.coincidences / r.duration_s for r in records])
    coef, *_ = np.linalg.lstsq(a, rates, rcond=None)
    x = sum(c * P for c, P in zip(coef, PAULI_PRODUCTS)) / 4.0
    tr = np.trace(x).real
    if tr <= 0:
        raise DegenerateOutcomeError("no signal counts to reconstruct from")
    x = x / tr
    return (x + x.conj().T) / 2


def project_to_states(x: np.ndarray) -> np.ndarray:
    """Closest density matrix in Frobenius norm.

    The eigenvalues are clipped at a common threshold chosen so that the
    clipped spectrum sums to one (projection onto the probability simplex).
    """
    w, v = np.linalg.eigh((x + x.conj().T) / 2)
    u = np.sort(w)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.nonzero(u - css / np.arange(1, len(u) + 1) > 0)[0][-1]
    shift = css[k] / (k + 1)
    lam = np.clip(w - shift, 0.0, None)
    return (v * lam) @ v.conj().T


def reconstruct(records: Sequence[CountRecord], settings: Sequence[MeasurementSetting]) -> ReconstructionResult:
    raw = linear_inversion(records, settings)
    rho = DensityMatrix(project_to_states(raw))
    return ReconstructionResult(rho, report(rho), raw)


def monte_carlo_uncertainty(
    records: Sequence[CountRecord],
    settings: Sequence[MeasurementSetting],
    trials: int = 100,
    seed: int = 0,
    reference=None,
) -> dict:
    """Standard deviations of concurrence, fidelity and linear entropy.

    Each trial redraws every raw count from a Poisson law centred on the
    observed value, subtracts the accidental estimate and reconstructs.
    Trial ``i`` uses the stream ``default_rng([seed, i])``. Fidelity is taken
    with respect to ``reference`` (default: the point estimate).
    """
    if trials < 100:
        raise InvalidArgumentError("at least 100 Monte-Carlo trials are required")
    if reference is None:
        reference = reconstruct(subtract_accidentals(records), settings).rho_hat
    observed = np.array([r.coincidences for r in records], dtype=float)
    samples = {"concurrence": [], "fidelity": [], "linear_entropy": []}
    for i in range(trials):
        rng = np.random.default_rng([seed, i])
        drawn = rng.poisson(observed)
        trial = [replace(r, coincidences=int(n)) for r, n in zip(records, drawn)]
        rho = reconstruct(subtract_accidentals(trial), settings).rho_hat
        samples["concurrence"].append(concurrence(rho))
        samples["fidelity"].append(fidelity(rho, reference))
        samples["linear_entropy"].append(linear_entropy(rho))
    return {k: float(np.std(v, ddof=1)) for k, v in samples.items()}


def records_to_csv(records: Iterable[CountRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow([r.label, format(r.coincidences, ".12g"), format(r.duration_s, ".12g"), format(r.accidental_estimate, ".12g")])
    return buf.getvalue()


def records_from_csv(text: str) -> list[CountRecord]:
    rows = csv.DictReader(io.StringIO(text))
    if tuple(rows.fieldnames or ()) != CSV_COLUMNS:
        raise InvalidArgumentError(f"expected CSV columns {CSV_COLUMNS}")
    return [
        CountRecord(row["setting_label"], float(row["coincidences"]), float(row["duration_s"]), float(row["accidental_estimate"]))
        for row in rows
    ]
