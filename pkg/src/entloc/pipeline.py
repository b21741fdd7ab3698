"""Stage-by-stage simulation of the localization protocol.

Stage I   the signal photon B meets an unpolarized environmental photon E
          on a beam splitter; one photon per output mode is post-selected.
Stage II  the environmental output photon is projected on ``|H>`` or ``|V>``.
Stage III local polarization filters balance the state and suppress the
          remaining product-state noise.

Every stage is computed numerically from the explicit three-photon operator
(photon order A, B', E'). :func:`closed_form_state` provides the same
matrices from closed-form X-state entries, as an independent check.

Beam-splitter convention: ``a_B^+ -> t a_B'^+ + r a_E'^+`` and
``a_E^+ -> t a_E'^+ - r a_B'^+`` for each polarization, with real ``t`` and
``r = sqrt(1 - t^2)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional

import numpy as np

from . import formulas
from .errors import DegenerateCouplingError, InvalidArgumentError
from .metrics import MetricReport, report
from .qstate import (
    MIN_PROBABILITY,
    PSI_IN,
    SINGLET,
    DensityMatrix,
    Ket,
    LocalFilter,
    apply_filter,
    maximally_mixed,
    polarization,
    ptrace,
)

_REGIMES = {
    "ind": "indistinguishable",
    "indistinguishable": "indistinguishable",
    "dis": "distinguishable",
    "distinguishable": "distinguishable",
    "partial": "partial",
}
_INPUTS = {"singlet": SINGLET, "experimental": PSI_IN}
_SWAP = np.eye(4)[[0, 2, 1, 3]]
_DIMS3 = (2, 2, 2)


@dataclass(frozen=True)
class CouplingConfig:
    """Coupler description.

    Give either the intensity transmissivity ``T`` or the amplitude pair
    ``(tv, th)``. ``p`` is the probability that the photons are
    indistinguishable and must be given exactly when ``regime == "partial"``.
    """

    regime: str
    T: Optional[float] = None
    p: Optional[float] = None
    tv: Optional[float] = None
    th: Optional[float] = None
    input_state: str = "singlet"

    def __post_init__(self):
        try:
            object.__setattr__(self, "regime", _REGIMES[self.regime])
        except KeyError:
            raise InvalidArgumentError(f"unknown regime {self.regime!r}") from None
        has_T = self.T is not None
        has_pair = self.tv is not None or self.th is not None
        if has_T == has_pair:
            raise InvalidArgumentError("give exactly one of T or (tv, th)")
        if has_pair and (self.tv is None or self.th is None):
            raise InvalidArgumentError("tv and th must be given together")
        for name in ("T", "tv", "th", "p"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise InvalidArgumentError(f"{name}={v!r} outside [0, 1]")
        if (self.regime == "partial") != (self.p is not None):
            raise InvalidArgumentError("p must be set exactly when regime is 'partial'")
        if self.input_state not in _INPUTS:
            raise InvalidArgumentError(f"unknown input state {self.input_state!r}")

    @classmethod
    def from_interferometer(cls, T1: float, T2: float, phi: float, regime: str, **kw) -> "CouplingConfig":
        return cls(regime, T=formulas.effective_transmissivity(T1, T2, phi), **kw)

    @property
    def polarizing(self) -> bool:
        return self.T is None

    @property
    def amplitudes(self) -> tuple[float, float]:
        """Amplitude transmissivities ``(t_h, t_v)``."""
        if self.T is not None:
            t = math.sqrt(self.T)
            return t, t
        return float(self.th), float(self.tv)

    @property
    def indistinguishability(self) -> float:
        return {"indistinguishable": 1.0, "distinguishable": 0.0}.get(self.regime, self.p)

    @property
    def input_ket(self) -> Ket:
        return _INPUTS[self.input_state]


@dataclass(frozen=True)
class FilterConfig:
    """Stage III filter settings.

    ``eps`` is the intensity transmission applied to the noisy polarization
    on both arms (amplitude ``sqrt(eps)`` per arm). ``balance`` selects the
    arm of the balancing filter: ``auto`` uses photon A for indistinguishable
    photons and photon B otherwise. ``explicit_gains`` maps an arm to
    intensity transmissions, e.g. ``{"A": {"V": 0.33}}``, applied after the
    other filters. With ``merge_arms`` all filters on one arm are fused into a
    single filter rescaled to unit maximal gain, which yields the same state
    with a larger success probability.
    """

    eps: float = 1.0
    balance: str = "auto"
    explicit_gains: Optional[Mapping[str, Mapping[str, float]]] = None
    merge_arms: bool = False

    def __post_init__(self):
        if not 0.0 < self.eps <= 1.0:
            raise InvalidArgumentError(f"eps={self.eps!r} outside (0, 1]")
        if self.balance not in ("auto", "on_A", "on_B", "none"):
            raise InvalidArgumentError(f"unknown balance branch {self.balance!r}")
        if self.explicit_gains is not None:
            for side, gains in self.explicit_gains.items():
                if side not in ("A", "B"):
                    raise InvalidArgumentError(f"unknown arm {side!r}")
                for pol, g in gains.items():
                    if pol not in ("H", "V") or not 0.0 <= g <= 1.0:
                        raise InvalidArgumentError(f"invalid gain {side}.{pol}={g!r}")


@dataclass(frozen=True)
class StageResult:
    stage: str
    rho: DensityMatrix
    success_probability: float
    cumulative_probability: float
    outcome: Optional[str] = None
    filters: tuple = ()
    metrics: Optional[MetricReport] = field(default=None, compare=False)

    def with_metrics(self) -> "StageResult":
        return replace(self, metrics=report(self.rho))

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "outcome": self.outcome,
            "rho": self.rho.to_dict(),
            "success_probability": self.success_probability,
            "cumulative_probability": self.cumulative_probability,
            "filters": [
                {"side": f.side, "gain_h": f.gain_h, "gain_v": f.gain_v} for f in self.filters
            ],
            "metrics": None if self.metrics is None else self.metrics.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "StageResult":
        m = d.get("metrics")
        return cls(
            stage=d["stage"],
            rho=DensityMatrix.from_dict(d["rho"]),
            success_probability=d["success_probability"],
            cumulative_probability=d["cumulative_probability"],
            outcome=d.get("outcome"),
            filters=tuple(LocalFilter(**f) for f in d.get("filters", ())),
            metrics=None if m is None else MetricReport(**m),
        )


# -- coupling ----------------------------------------------------------------


def coupling_kraus(cfg: CouplingConfig) -> list[tuple[float, np.ndarray]]:
    """Weighted Kraus operators on (B, E) -> (B', E') after post-selection."""
    th, tv = cfg.amplitudes
    rh, rv = math.sqrt(1.0 - th * th), math.sqrt(1.0 - tv * tv)
    kt = np.diag([th, tv]).astype(complex)
    kr = np.diag([rh, rv]).astype(complex)
    transmit = np.kron(kt, kt)
    swap = _SWAP @ np.kron(kr, kr)
    p = cfg.indistinguishability
    ops = []
    if p > 0:
        ops.append((p, transmit - swap))
    if p < 1:
        ops += [(1.0 - p, transmit), (1.0 - p, swap)]
    return ops


def three_photon_state(cfg: CouplingConfig) -> np.ndarray:
    """Unnormalized post-selected A-B'-E' operator; its trace is ``P_I``."""
    pair = cfg.input_ket.projector()
    rho = np.kron(pair, maximally_mixed(2).data)
    out = np.zeros((8, 8), dtype=complex)
    for w, k in coupling_kraus(cfg):
        big = np.kron(np.eye(2), k)
        out += w * big @ rho @ big.conj().T
    return out


def stage_mix(cfg: CouplingConfig) -> StageResult:
    joint = ptrace(three_photon_state(cfg), [0, 1], _DIMS3)
    prob = float(np.trace(joint).real)
    if prob < MIN_PROBABILITY:
        raise DegenerateCouplingError("coincidence probability vanishes")
    return StageResult("I", DensityMatrix(joint / prob), prob, prob)


def _outcome_ket(outcome: str) -> Ket:
    return polarization(outcome)


def _check_transmits(cfg: CouplingConfig) -> None:
    th, tv = cfg.amplitudes
    if th == 0.0 and tv == 0.0:
        raise DegenerateCouplingError("T = 0: the signal photon is never transmitted")


def stage_measure(cfg: CouplingConfig, outcome: str = "H") -> StageResult:
    """Project the environmental output photon on ``outcome``.

    ``success_probability`` is conditional on stage I, ``cumulative_probability``
    is the joint probability of coincidence and outcome.
    """
    _check_transmits(cfg)
    ket = _outcome_ket(outcome)
    rho3 = three_photon_state(cfg)
    p_mix = float(np.trace(rho3).real)
    proj = np.kron(np.eye(4), ket.projector())
    joint = ptrace(proj @ rho3 @ proj, [0, 1], _DIMS3)
    p_joint = float(np.trace(joint).real)
    if p_joint < MIN_PROBABILITY:
        raise DegenerateCouplingError(f"outcome {outcome} never occurs")
    return StageResult(
        "II", DensityMatrix(joint / p_joint), p_joint / p_mix, p_joint, outcome=outcome.upper()
    )


# -- filtering ------------------------------------------------------------------


def _noise_polarization(outcome: str) -> str:
    if outcome not in ("H", "V"):
        raise InvalidArgumentError("balancing and eps filters need an H or V outcome")
    return "V" if outcome == "H" else "H"


def _balance_side(cfg: CouplingConfig, f: FilterConfig) -> Optional[str]:
    if f.balance == "none":
        return None
    if f.balance == "auto":
        return "A" if cfg.indistinguishability == 1.0 else "B"
    return f.balance[-1]


def balancing_filter(rho, side: str) -> Optional[LocalFilter]:
    """Filter equalizing the ``|HV>`` and ``|VH>`` populations from arm ``side``."""
    m = np.asarray(rho)
    hv, vh = m[1, 1].real, m[2, 2].real
    if hv == vh:
        return None
    if hv > vh:
        # attenuate |HV>: photon A's H or photon B's V
        g = math.sqrt(vh / hv)
        return LocalFilter(side, gain_h=g) if side == "A" else LocalFilter(side, gain_v=g)
    g = math.sqrt(hv / vh)
    return LocalFilter(side, gain_v=g) if side == "A" else LocalFilter(side, gain_h=g)


def filter_chain(rho, cfg: CouplingConfig, f: FilterConfig, outcome: str) -> list[LocalFilter]:
    """Ordered filters of stage III: balance, noise suppression, explicit gains."""
    chain: list[LocalFilter] = []
    side = _balance_side(cfg, f)
    if side is not None:
        _noise_polarization(outcome)
        bal = balancing_filter(rho, side)
        if bal is not None:
            chain.append(bal)
    if f.eps < 1.0:
        noisy = _noise_polarization(outcome)
        g = math.sqrt(f.eps)
        for arm in ("A", "B"):
            chain.append(LocalFilter(arm, gain_h=g) if noisy == "H" else LocalFilter(arm, gain_v=g))
    for arm, gains in (f.explicit_gains or {}).items():
        chain.append(LocalFilter.from_intensities(arm, gains.get("H", 1.0), gains.get("V", 1.0)))
    if f.merge_arms:
        chain = merge_filters(chain)
    return chain


def merge_filters(chain) -> list[LocalFilter]:
    """Fuse filters per arm and rescale each to unit maximal gain."""
    out = []
    for arm in ("A", "B"):
        gh = gv = 1.0
        for filt in chain:
            if filt.side == arm:
                gh *= filt.gain_h
                gv *= filt.gain_v
        top = max(gh, gv)
        if top == 0.0:
            raise InvalidArgumentError(f"filters on arm {arm} block both polarizations")
        if (gh, gv) != (1.0, 1.0):
            out.append(LocalFilter(arm, gh / top, gv / top))
    return out


def stage_filter(prev: StageResult, cfg: CouplingConfig, f: FilterConfig) -> StageResult:
    if prev.stage != "II":
        raise InvalidArgumentError("filters act on a stage II result")
    chain = filter_chain(prev.rho, cfg, f, prev.outcome)
    rho, prob = prev.rho, 1.0
    for filt in chain:
        rho, q = apply_filter(rho, filt)
        prob *= q
    return StageResult(
        "III", rho, prob, prev.cumulative_probability * prob, outcome=prev.outcome, filters=tuple(chain)
    )


def run_protocol(cfg: CouplingConfig, f: FilterConfig = FilterConfig(), outcome: str = "H") -> list[StageResult]:
    mixed = stage_mix(cfg)
    measured = stage_measure(cfg, outcome)
    filtered = stage_filter(measured, cfg, f)
    return [s.with_metrics() for s in (mixed, measured, filtered)]


def _require_pair(cfg: CouplingConfig) -> None:
    if not cfg.polarizing:
        raise InvalidArgumentError("polarizing stages need (tv, th)")
    if cfg.tv == 0.0 or cfg.th == 0.0:
        raise DegenerateCouplingError("tv and th must be positive for polarizing stages")


def stage_mix_polarizing(cfg: CouplingConfig) -> StageResult:
    _require_pair(cfg)
    return stage_mix(cfg)


def stage_measure_polarizing(cfg: CouplingConfig, outcome: str = "V") -> StageResult:
    _require_pair(cfg)
    return stage_measure(cfg, outcome)


def stage_filter_polarizing(prev: StageResult, cfg: CouplingConfig, f: FilterConfig) -> StageResult:
    _require_pair(cfg)
    return stage_filter(prev, cfg, f)


# -- closed forms -----------------------------------------------------------------


def x_state_entries(cfg: CouplingConfig, outcome: str) -> dict:
    """Joint probabilities of the stage II X state for a singlet-type input.

    Keys ``cross`` (A carries the outcome polarization, B' the other),
    ``bunch`` (the reverse), ``coh`` (real coherence between the two) and
    ``noise`` (both photons in the polarization opposite to the outcome).
    """
    th, tv = cfg.amplitudes
    s, u = (th, tv) if outcome == "H" else (tv, th)
    S = s * s
    p = cfg.indistinguishability
    return {
        "cross": u * u * S / 4.0,
        "bunch": (p * (2 * S - 1) ** 2 + (1 - p) * (S * S + (1 - S) ** 2)) / 4.0,
        "coh": -u * s * (p * (2 * S - 1) + (1 - p) * S) / 4.0,
        "noise": (1 - th * th) * (1 - tv * tv) / 4.0,
    }


def _x_matrix(e: dict, outcome: str, phase: complex) -> np.ndarray:
    m = np.zeros((4, 4), dtype=complex)
    if outcome == "H":
        m[1, 1], m[2, 2], m[3, 3] = e["cross"], e["bunch"], e["noise"]
    else:
        m[1, 1], m[2, 2], m[0, 0] = e["bunch"], e["cross"], e["noise"]
    m[1, 2] = phase * e["coh"]
    m[2, 1] = np.conj(m[1, 2])
    return m


def closed_form_joint(cfg: CouplingConfig, stage: str, outcome: str = "H") -> np.ndarray:
    """Unnormalized stage I or II matrix from the closed-form entries."""
    if cfg.input_state == "singlet":
        phase = 1.0
    else:
        # the experimental input is the singlet rotated by diag(1, -i) on photon A
        phase = 1j
    if stage == "II":
        return _x_matrix(x_state_entries(cfg, outcome), outcome, phase)
    if stage == "I":
        return sum(_x_matrix(x_state_entries(cfg, o), o, phase) for o in ("H", "V"))
    raise InvalidArgumentError(f"no joint closed form for stage {stage!r}")


def closed_form_state(
    cfg: CouplingConfig, stage: str, outcome: str = "H", f: FilterConfig = FilterConfig()
) -> tuple[np.ndarray, float]:
    """Normalized closed-form matrix and cumulative probability of a stage."""
    if stage in ("I", "II"):
        m = closed_form_joint(cfg, stage, outcome)
        prob = float(np.trace(m).real)
        return m / prob, prob
    if stage != "III":
        raise InvalidArgumentError(f"unknown stage {stage!r}")
    m = closed_form_joint(cfg, "II", outcome)
    prev_prob = float(np.trace(m).real)
    gains = {"A": np.ones(2), "B": np.ones(2)}
    for filt in filter_chain(m / prev_prob, cfg, f, outcome):
        gains[filt.side] *= (filt.gain_h, filt.gain_v)
    g = np.kron(gains["A"], gains["B"])
    out = np.outer(g, g) * m
    prob = float(np.trace(out).real)
    return out / prob, prob
