"""Second-quantized reference simulation of the coupling stage.

Photons B and E enter the two input ports of a (possibly polarizing) beam
splitter. States are dictionaries from occupation tuples over eight output
modes ``(port, polarization, tag)`` to amplitudes, tensored with the
polarization of photon A. Distinguishability is an orthogonal internal tag
carried by E; partial distinguishability is a classical mixture of a tagged
and an untagged run. Nothing here reuses the pipeline's coupling operators.
"""

from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateCouplingError, InvalidArgumentError
from .qstate import PSI_IN, SINGLET, DensityMatrix, polarization

PORTS = ("B'", "E'")
POLS = ("H", "V")
TAGS = (0, 1)
MODES = tuple(itertools.product(range(2), range(2), TAGS))
_INDEX = {m: i for i, m in enumerate(MODES)}
PROBABILITY_FLOOR = 1e-14


def mode(port: int, pol: int, tag: int) -> int:
    return _INDEX[(port, pol, tag)]


@dataclass(frozen=True)
class FockState:
    """Two-photon amplitudes keyed by ``(a, occupations)``.

    ``a`` is the polarization index of photon A (0 when A is absent) and
    ``occupations`` counts photons in each of :data:`MODES`.
    """

    terms: dict = field(default_factory=dict)

    def norm(self) -> float:
        return math.sqrt(sum(abs(c) ** 2 for c in self.terms.values()))

    def sector_probabilities(self) -> dict:
        """Probabilities of both photons in B', both in E', or one per port."""
        out = {"both_B": 0.0, "both_E": 0.0, "coincidence": 0.0}
        for (_, occ), c in self.terms.items():
            in_b = sum(n for m, n in zip(MODES, occ) if m[0] == 0)
            key = {2: "both_B", 0: "both_E", 1: "coincidence"}[in_b]
            out[key] += abs(c) ** 2
        return out


def _create(state: dict, k: int, amp: complex) -> dict:
    out: dict = defaultdict(complex)
    for (a, occ), c in state.items():
        n = occ[k]
        new = occ[:k] + (n + 1,) + occ[k + 1 :]
        out[(a, new)] += c * amp * math.sqrt(n + 1)
    return out


def _output_modes(port: int, pol: int, tag: int, t: tuple[float, float]) -> list[tuple[int, float]]:
    """Output creation operators for one input creation operator."""
    tp = t[pol]
    rp = math.sqrt(max(0.0, 1.0 - tp * tp))
    if port == 0:
        return [(mode(0, pol, tag), tp), (mode(1, pol, tag), rp)]
    return [(mode(1, pol, tag), tp), (mode(0, pol, tag), -rp)]


def propagate(
    pair: np.ndarray, e_pol: int, t: tuple[float, float], tag_e: int, with_a: bool = True
) -> FockState:
    """Send photon B (entangled with A via ``pair``) and E through the splitter.

    ``pair`` holds amplitudes ``pair[a, b]``; without photon A it is a
    length-2 vector of B amplitudes. ``t = (t_h, t_v)``.
    """
    vac = tuple([0] * len(MODES))
    total: dict = defaultdict(complex)
    pair = np.asarray(pair, dtype=complex)
    if not with_a:
        pair = pair.reshape(1, 2)
    for a, b in itertools.product(range(pair.shape[0]), range(2)):
        c = pair[a, b]
        if c == 0:
            continue
        for kb, ub in _output_modes(0, b, 0, t):
            for ke, ue in _output_modes(1, e_pol, tag_e, t):
                state = _create(_create({(a, vac): c}, kb, ub), ke, ue)
                for key, v in state.items():
                    total[key] += v
    return FockState({k: v for k, v in total.items() if v != 0})


def coincidence_amplitudes(state: FockState, dim_a: int = 2) -> np.ndarray:
    """Amplitudes ``amp[a, b_pol, b_tag, e_pol, e_tag]`` of the one-per-port sector."""
    amp = np.zeros((dim_a, 2, 2, 2, 2), dtype=complex)
    for (a, occ), c in state.terms.items():
        occupied = [m for m, n in zip(MODES, occ) for _ in range(n)]
        ports = sorted(occupied)
        if [m[0] for m in ports] != [0, 1]:
            continue
        (_, bp, bt), (_, ep, et) = ports
        amp[a, bp, bt, ep, et] += c
    return amp


@dataclass(frozen=True)
class OracleConfig:
    tv: float
    th: float
    p: float = 1.0
    delay_distinguishable: bool = False
    input_state: str = "singlet"

    def __post_init__(self):
        for name in ("tv", "th", "p"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidArgumentError(f"{name}={v!r} outside [0, 1]")
        if self.input_state not in ("singlet", "experimental"):
            raise InvalidArgumentError(f"unknown input state {self.input_state!r}")
        if self.delay_distinguishable:
            object.__setattr__(self, "p", 0.0)

    @classmethod
    def isotropic(cls, T: float, p: float = 1.0, **kw) -> "OracleConfig":
        t = math.sqrt(T)
        return cls(tv=t, th=t, p=p, **kw)


@dataclass(frozen=True)
class OracleResult:
    rho_I: DensityMatrix
    P_I: float
    rho_II: dict
    P_II: dict
    joint_I: np.ndarray
    joint_II: dict
    sectors: dict


def _runs(cfg: OracleConfig) -> list[tuple[float, int]]:
    runs = []
    if cfg.p > 0:
        runs.append((cfg.p, 0))
    if cfg.p < 1:
        runs.append((1.0 - cfg.p, 1))
    return runs


def oracle_stage_states(cfg: OracleConfig, outcomes=("H", "V")) -> OracleResult:
    """Post-selected A-B' states before and after measuring the E' photon.

    ``P_I`` is the coincidence probability and ``P_II[o]`` the joint
    probability of coincidence and outcome ``o``.
    """
    ket = SINGLET if cfg.input_state == "singlet" else PSI_IN
    pair = ket.amplitudes.reshape(2, 2)
    t = (cfg.th, cfg.tv)
    joint_I = np.zeros((4, 4), dtype=complex)
    joint_II = {o: np.zeros((4, 4), dtype=complex) for o in outcomes}
    sectors = defaultdict(float)
    for w_run, tag in _runs(cfg):
        for e_pol in range(2):
            w = w_run * 0.5
            state = propagate(pair, e_pol, t, tag)
            for k, v in state.sector_probabilities().items():
                sectors[k] += w * v
            amp = coincidence_amplitudes(state)
            # rho[(a b), (a' b')] summed over the B' tag and the whole E' photon
            joint_I += w * np.einsum("aiseu,bjseu->aibj", amp, amp.conj()).reshape(4, 4)
            for o in outcomes:
                bra = polarization(o).amplitudes.conj()
                proj = np.einsum("aiseu,e->aisu", amp, bra)
                joint_II[o] += w * np.einsum("aisu,bjsu->aibj", proj, proj.conj()).reshape(4, 4)
    P_I = float(np.trace(joint_I).real)
    if P_I < PROBABILITY_FLOOR:
        raise DegenerateCouplingError("post-selection probability vanishes")
    rho_II, P_II = {}, {}
    for o, m in joint_II.items():
        pj = float(np.trace(m).real)
        P_II[o] = pj
        if pj >= PROBABILITY_FLOOR:
            rho_II[o] = DensityMatrix(m / pj)
    return OracleResult(
        DensityMatrix(joint_I / P_I), P_I, rho_II, P_II, joint_I, joint_II, dict(sectors)
    )


def coincidence_probability(t: tuple[float, float], pol_b: str, pol_e: str, p: float) -> float:
    """Coincidence probability for an ``pol_b`` photon in port B and ``pol_e`` in port E.

    ``pol_e`` must be ``H`` or ``V``.
    """
    if pol_e not in POLS:
        raise InvalidArgumentError("environment polarization must be H or V")
    b = polarization(pol_b).amplitudes
    total = 0.0
    for w, tag in ((p, 0), (1.0 - p, 1)):
        if w == 0:
            continue
        state = propagate(b, POLS.index(pol_e), t, tag, with_a=False)
        total += w * float(np.sum(np.abs(coincidence_amplitudes(state, dim_a=1)) ** 2))
    return total


def oracle_hom_scan(cfg: OracleConfig) -> float:
    """Dip visibility ``1 - C(p)/C(0)`` for two H-polarized photons."""
    t = (cfg.th, cfg.tv)
    ref = coincidence_probability(t, "H", "H", 0.0)
    if ref < PROBABILITY_FLOOR:
        raise DegenerateCouplingError("no coincidences for distinguishable photons")
    return 1.0 - coincidence_probability(t, "H", "H", cfg.p) / ref


def mach_zehnder_transmissivity(T1: float, T2: float, phi: float) -> float:
    """Cross-port probability of two splitters with a phase ``phi`` on one arm.

    Composed explicitly from 2x2 unitaries; this gives
    ``T1 R2 + R1 T2 + 2 sqrt(T1 T2 R1 R2) cos(2 phi)``.
    """

    def splitter(T: float) -> np.ndarray:
        t, r = math.sqrt(T), math.sqrt(1.0 - T)
        return np.array([[t, -r], [r, t]])

    phase = np.diag([np.exp(1j * phi), np.exp(-1j * phi)])
    u = splitter(T2) @ phase @ splitter(T1)
    return float(abs(u[1, 0]) ** 2)
