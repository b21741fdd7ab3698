"""Closed-form results for the localization protocol.

All functions are scalar and pure. Conventions used throughout:

* ``T`` is the intensity transmissivity of the coupler, ``R = 1 - T``.
* ``P_I`` is the probability that the two photons leave the coupler in
  different output modes (coincidence post-selection).
* ``P_II`` is the joint probability of a coincidence *and* the chosen
  polarization outcome on the environmental photon.
* ``P_III`` is the joint probability of everything above *and* passage
  through the local filters (balancing filter followed by an intensity
  gain ``eps`` on the noisy polarization of both photons).

Concurrences returned by the ``max(0, x)`` expressions are reported as 0
when ``x <= THRESHOLD_GUARD`` so that inputs sitting exactly on a published
threshold land on the non-entangled side.
"""

from __future__ import annotations

import math

from .errors import DegenerateCouplingError, InvalidArgumentError, ModelInconsistencyError

SQRT2 = math.sqrt(2.0)
TSIRELSON = 2.0 * SQRT2
THRESHOLD_GUARD = 1e-12


def _unit(name: str, x: float) -> float:
    x = float(x)
    if not 0.0 <= x <= 1.0:
        raise InvalidArgumentError(f"{name}={x!r} outside [0, 1]")
    return x


def _eps(eps: float) -> float:
    eps = float(eps)
    if not 0.0 < eps <= 1.0:
        raise InvalidArgumentError(f"eps={eps!r} outside (0, 1]")
    return eps


def _pos(x: float) -> float:
    return x if x > THRESHOLD_GUARD else 0.0


def is_entangled(c: float) -> bool:
    return c > THRESHOLD_GUARD


def violates_bell(b: float) -> bool:
    return b > 2.0 + THRESHOLD_GUARD


def x_state_bell(hv: float, vh: float, coh: float, noise: float) -> float:
    """Horodecki value for an X state whose only corner population is ``noise``.

    Unnormalized populations are accepted. Valid when the two-photon
    coherence between ``|HH>`` and ``|VV>`` vanishes, as it does for every
    state in this protocol.
    """
    n = hv + vh + noise
    if n <= 0:
        return 0.0
    txx = 2.0 * abs(coh) / n
    tzz = (noise - hv - vh) / n
    return 2.0 * math.sqrt(txx**2 + max(txx**2, tzz**2))


def effective_transmissivity(T1: float, T2: float, phi: float) -> float:
    """Signal-to-signal probability of a two-splitter interferometer, as printed.

    ``T1 + T2 - 2 T1 T2 + sqrt(T1 T2 R1 R2) cos(2 phi)``. The interference
    term of an explicit two-splitter composition carries an extra factor 2
    (see :func:`entloc.fockoracle.mach_zehnder_transmissivity`); this
    function keeps the printed form.
    """
    T1, T2 = _unit("T1", T1), _unit("T2", T2)
    R1, R2 = 1.0 - T1, 1.0 - T2
    t = T1 + T2 - 2.0 * T1 * T2 + math.sqrt(T1 * T2 * R1 * R2) * math.cos(2.0 * phi)
    if t < -1e-9 or t > 1.0 + 1e-9:
        raise ModelInconsistencyError(f"effective transmissivity {t!r} outside [0, 1]")
    return min(1.0, max(0.0, t))


def hom_visibility(p: float, T: float) -> float:
    p, T = _unit("p", p), _unit("T", T)
    R = 1.0 - T
    return p * 2.0 * R * T / (R * R + T * T)


# -- indistinguishable coupling ------------------------------------------------


def ind_balanced_populations(T: float) -> tuple[float, float]:
    """(alpha, delta) of the filtered state: balanced population and noise.

    Branch ``T > |2T-1|`` attenuates the ``T`` amplitude, otherwise the
    bunching amplitude ``(T - R)`` is attenuated.
    """
    R = 1.0 - T
    if T > abs(2.0 * T - 1.0):
        return (2.0 * T - 1.0) ** 2, R * R
    if T == 0.0:
        return 0.0, 0.0
    return T * T, (T * R / (R - T)) ** 2


def indistinguishable_suite(T: float, eps: float = 1.0) -> dict:
    T, eps = _unit("T", T), _eps(eps)
    R = 1.0 - T
    P_I = 1.0 - 3.0 * T * R
    B_I = TSIRELSON * T * abs(1.0 - 2.0 * T) / P_I
    alpha, delta = ind_balanced_populations(T)
    singular = T == 0.0 or T == 0.5
    if singular:
        C_III = 0.0
    else:
        C_III = 1.0 / (1.0 + eps * R * R / (2.0 * (1.0 - 2.0 * T) ** 2))
    return {
        "F_I": (1.0 - 3.0 * T) ** 2 / (4.0 * P_I),
        "C_I": _pos((3.0 * T * T - 1.0) / (2.0 * P_I)),
        "B_I": B_I,
        "P_I": P_I,
        "C_II": T * abs(2.0 * T - 1.0) / P_I,
        "P_II": P_I / 2.0,
        "B_II": B_I,
        "C_III": C_III,
        "P_III": (2.0 * eps * alpha + eps * eps * delta) / 4.0,
        "B_III": x_state_bell(eps * alpha, eps * alpha, eps * alpha, eps * eps * delta),
        "C_III_limit": 0.0 if singular else 1.0,
        "B_III_limit": 2.0 if singular else TSIRELSON,
        "singular": singular,
    }


# -- fully distinguishable coupling ---------------------------------------------


def distinguishable_suite(T: float, eps: float = 1.0) -> dict:
    T, eps = _unit("T", T), _eps(eps)
    R = 1.0 - T
    P_I = T * T + R * R
    B_I = TSIRELSON * T * T / P_I
    xi = T**3 / math.sqrt(P_I)
    denom = 2.0 * eps * T * T + eps * eps * R * R
    return {
        "F_I": (5.0 * T * T - 2.0 * T + 1.0) / (4.0 * P_I),
        "C_I": _pos((T * T + 2.0 * T - 1.0) / (2.0 * P_I)),
        "B_I": B_I,
        "P_I": P_I,
        "C_II": T * T / P_I,
        "P_II": P_I / 2.0,
        "B_II": B_I,
        "C_III": 2.0 * eps * xi / denom,
        "P_III": denom / 4.0,
        "B_III": x_state_bell(eps * T * T, eps * T * T, eps * xi, eps * eps * R * R),
        "C_III_limit": T / math.sqrt(P_I),
        "B_III_limit": 2.0 * math.sqrt(1.0 + T * T / P_I),
        "singular": False,
    }


# -- partially distinguishable coupling -----------------------------------------


def entanglement_loss_p(T: float) -> float:
    """Smallest ``p`` above which the unmeasured pair is separable."""
    T = _unit("T", T)
    if T in (0.0, 1.0):
        return math.inf if T == 1.0 else -math.inf
    return (T * T + 2.0 * T - 1.0) / (2.0 * T * (1.0 - T))


def bell_violation_p(T: float) -> float:
    """Upper bound on ``p`` for which the unmeasured pair violates CHSH."""
    T = _unit("T", T)
    if T == 0.0:
        return -math.inf
    if T == 1.0:
        return math.inf
    return SQRT2 + 1.0 / (1.0 - T) - (1.0 + SQRT2) / T


def _signal_amp(p: float, T: float) -> float:
    return abs(T - p * (1.0 - T))


def _signal_pop(p: float, T: float) -> float:
    # post-measurement population of the bunching-affected component
    return 1.0 - 2.0 * (1.0 + p) * T * (1.0 - T)


def eps_window(p: float, T: float) -> tuple[float, float]:
    """Open interval of ``eps`` on which the coherence term dominates the Bell value."""
    p, T = _unit("p", p), _unit("T", T)
    R = 1.0 - T
    root = math.sqrt(max(_signal_pop(p, T), 0.0))
    a = _signal_amp(p, T)
    if R == 0.0 or root == 0.0:
        return (math.nan, math.nan)
    scale = 2.0 * T * T / (R * R * root)
    return scale * (root - a), scale * (root + a)


def eps_violation_bounds(p: float, T: float) -> dict:
    """Largest ``eps`` giving a CHSH violation, per Bell branch.

    ``coherence_branch`` applies inside :func:`eps_window`, ``population_branch``
    outside it.
    """
    p, T = _unit("p", p), _unit("T", T)
    R = 1.0 - T
    if R == 0.0 or T == 0.0 or _signal_pop(p, T) <= 0.0:
        return {"coherence_branch": math.nan, "population_branch": math.nan}
    x = _signal_amp(p, T) / math.sqrt(_signal_pop(p, T))
    return {
        "coherence_branch": 2.0 * T * T / (R * R) * (SQRT2 * x - 1.0),
        "population_branch": T * T * x * x / (2.0 * R * R),
    }


def partial_bell_iii(p: float, T: float, eps: float) -> float:
    """Bell factor after balancing and filtering, choosing the branch by ``eps``."""
    p, T, eps = _unit("p", p), _unit("T", T), _eps(eps)
    R = 1.0 - T
    vh = _signal_pop(p, T)
    a = _signal_amp(p, T)
    if vh <= 0.0:
        return 2.0
    root = math.sqrt(vh)
    lo, hi = eps_window(p, T)
    denom = 2.0 * T * T + R * R * eps
    if denom == 0.0:
        return 2.0
    if lo < eps < hi:
        return 4.0 * SQRT2 * T * T * a / (root * denom)
    inner = 4.0 * T**4 * a * a / vh + (R * R * eps - 2.0 * T * T) ** 2
    return 2.0 * math.sqrt(inner) / denom


def partial_suite(p: float, T: float, eps: float = 1.0) -> dict:
    """Mixture of indistinguishable (weight ``p``) and distinguishable couplings.

    ``C_I_meas`` is the concurrence right after the environment measurement.
    The filtered quantities assume the balancing filter lowers the
    bunching-affected population to ``T**2``, which is a passive operation
    only when ``_signal_pop(p, T) >= T**2``.
    """
    p, T, eps = _unit("p", p), _unit("T", T), _eps(eps)
    R = 1.0 - T
    P = 1.0 - (2.0 + p) * T * R
    F = ((4.0 * p + 5.0) * T * T - 2.0 * (2.0 * p + 1.0) * T + 1.0) / (4.0 * P)
    a = _signal_amp(p, T)
    vh = _signal_pop(p, T)
    singular = vh <= 0.0 or T == 0.0
    root = math.sqrt(vh) if vh > 0.0 else 0.0
    if singular:
        C_III = C_III_limit = 0.0
        B_III_limit = 2.0
    else:
        C_III = 2.0 * T * T * a / (root * (eps * R * R + 2.0 * T * T))
        C_III_limit = a / root
        B_III_limit = 2.0 * math.sqrt(1.0 + a * a / vh)
    return {
        "F": F,
        "C": _pos(2.0 * F - 1.0),
        "B": TSIRELSON * T * a / P,
        "P": P,
        "C_I_meas": _pos(T * a / P),
        "P_II": P / 2.0,
        "C_III": C_III,
        "P_III": (2.0 * eps * T * T + eps * eps * R * R) / 4.0,
        "B_III": partial_bell_iii(p, T, eps),
        "C_III_limit": C_III_limit,
        "B_III_limit": B_III_limit,
        "eps_window": eps_window(p, T),
        "passive_balance": vh >= T * T,
        "singular": singular,
    }


# -- polarization-dependent coupling ----------------------------------------------


def polarizing_ind_branch(tv: float, th: float) -> str:
    """Which photon-A filter balances the state after projecting E on ``|V>``.

    ``"V"`` attenuates the ``t_v t_h`` amplitude, ``"H"`` the bunching
    amplitude ``(2 t_v^2 - 1)``.
    """
    if tv == 0.0:
        return "H"
    return "V" if th > abs(2.0 * tv * tv - 1.0) / tv else "H"


def polarizing_suite(tv: float, th: float, eps: float = 1.0, regime: str = "ind") -> dict:
    """Formulas for a coupler with amplitude transmissivities ``tv`` and ``th``.

    The environmental photon is projected on ``|V>``; the noise term then
    sits on ``|HH>`` and the second filter attenuates ``H`` on both photons.
    """
    tv, th, eps = _unit("tv", tv), _unit("th", th), _eps(eps)
    if tv == 0.0 and th == 0.0:
        raise DegenerateCouplingError("tv = th = 0: the signal photon is never transmitted")
    Tv, Th = tv * tv, th * th
    Rv, Rh = 1.0 - Tv, 1.0 - Th
    if regime in ("ind", "indistinguishable"):
        P_I = (2.0 * Tv * Th + (1.0 - 2.0 * Tv) ** 2 + (1.0 - 2.0 * Th) ** 2 + 2.0 * Rv * Rh) / 4.0
        P_II = (Tv * Th + (1.0 - 2.0 * Tv) ** 2 + Rv * Rh) / 4.0
        C_I = _pos((2.0 * tv * th * abs(Th - 1.0 + Tv) - Rv * Rh) / (2.0 * P_I))
        C_II = th * tv * abs(1.0 - 2.0 * Tv) / (2.0 * P_II)
        branch = polarizing_ind_branch(tv, th)
        if branch == "V":
            P_III = (2.0 * eps * (1.0 - 2.0 * Tv) ** 2 + eps * eps * Rv * Rh) / 4.0
            num = eps * (1.0 - 2.0 * Tv) ** 2
        else:
            bunch = (1.0 - 2.0 * Tv) ** 2
            noise = Rv * Rh * Tv * Th / bunch if bunch > 0 else 0.0
            P_III = (2.0 * eps * Tv * Th + eps * eps * noise) / 4.0
            num = eps * Tv * Th
        C_III = num / (2.0 * P_III) if P_III > 0 else 0.0
        singular = Tv == 0.5 or th == 0.0 or tv == 0.0
        C_III_limit = 0.0 if singular else 1.0
    elif regime in ("dis", "distinguishable"):
        P_I = (2.0 * Rv * Rh + Rh * Rh + Th * (Th + Tv) + Rv * Rv + Tv * (Th + Tv)) / 4.0
        P_II = (Th * Tv + Tv * Tv + Rv * Rv + Rv * Rh) / 4.0
        C_I = _pos((th * tv * (Th + Tv) - Rv * Rh) / (2.0 * P_I))
        C_II = th * tv**3 / (2.0 * P_II)
        P_III = (2.0 * eps * Tv * Th + eps * eps * Rv * Rh) / 4.0
        root = math.sqrt(Tv * Tv + Rv * Rv)
        C_III = eps * Tv * Tv * Th / (2.0 * P_III * root) if P_III > 0 else 0.0
        C_III_limit = Tv / root
        branch = "V"
        singular = tv == 0.0 or th == 0.0
    else:
        raise InvalidArgumentError(f"unknown regime {regime!r}")
    return {
        "C_I": C_I,
        "P_I": P_I,
        "C_II": C_II,
        "P_II": P_II,
        "C_III": C_III,
        "P_III": P_III,
        "C_III_limit": C_III_limit,
        "branch": branch,
        "singular": singular,
    }
