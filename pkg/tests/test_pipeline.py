import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from entloc import formulas as fm
from entloc.errors import DegenerateCouplingError, InvalidArgumentError
from entloc.metrics import bell_max, concurrence, fidelity, linear_entropy
from entloc.pipeline import (
    CouplingConfig,
    FilterConfig,
    StageResult,
    closed_form_state,
    run_protocol,
    stage_filter,
    stage_measure,
    stage_measure_polarizing,
    stage_mix,
    stage_mix_polarizing,
    stage_filter_polarizing,
)
from entloc.qstate import PSI_IN, SINGLET

T_GRID = [round(0.1 * k, 10) for k in range(1, 10)]
P_GRID = [0.0, 0.5, 0.85, 1.0]
EPS_GRID = [1.0, 0.33, 0.1, 0.005]
XX = np.kron([[0, 1], [1, 0]], [[0, 1], [1, 0]])


def config(T, p, **kw):
    if p == 1.0:
        return CouplingConfig("ind", T=T, **kw)
    if p == 0.0:
        return CouplingConfig("dis", T=T, **kw)
    return CouplingConfig("partial", T=T, p=p, **kw)


class TestConfig:
    def test_exactly_one_transmissivity(self):
        with pytest.raises(InvalidArgumentError):
            CouplingConfig("ind")
        with pytest.raises(InvalidArgumentError):
            CouplingConfig("ind", T=0.5, tv=0.5, th=0.5)
        with pytest.raises(InvalidArgumentError):
            CouplingConfig("ind", tv=0.5)

    def test_p_only_for_partial(self):
        with pytest.raises(InvalidArgumentError):
            CouplingConfig("partial", T=0.5)
        with pytest.raises(InvalidArgumentError):
            CouplingConfig("ind", T=0.5, p=0.3)

    def test_aliases_and_ranges(self):
        assert CouplingConfig("dis", T=0.3).regime == "distinguishable"
        with pytest.raises(InvalidArgumentError):
            CouplingConfig("bogus", T=0.3)
        with pytest.raises(InvalidArgumentError):
            CouplingConfig("ind", T=1.3)
        with pytest.raises(InvalidArgumentError):
            CouplingConfig("ind", T=0.3, input_state="bell")

    def test_from_interferometer(self):
        cfg = CouplingConfig.from_interferometer(0.5, 0.5, math.pi / 2, "ind")
        assert cfg.T == pytest.approx(0.25)

    def test_filter_config(self):
        with pytest.raises(InvalidArgumentError):
            FilterConfig(eps=0)
        with pytest.raises(InvalidArgumentError):
            FilterConfig(eps=1.2)
        with pytest.raises(InvalidArgumentError):
            FilterConfig(balance="left")
        with pytest.raises(InvalidArgumentError):
            FilterConfig(explicit_gains={"A": {"V": 1.5}})
        with pytest.raises(InvalidArgumentError):
            FilterConfig(explicit_gains={"C": {"V": 0.5}})


class TestStageMix:
    def test_no_coupling_returns_input(self):
        for state, ket in (("singlet", SINGLET), ("experimental", PSI_IN)):
            s = stage_mix(CouplingConfig("ind", T=1.0, input_state=state))
            assert s.success_probability == pytest.approx(1)
            assert s.rho.allclose(ket.projector())

    @pytest.mark.parametrize("T", T_GRID)
    def test_indistinguishable_is_werner(self, T):
        s = stage_mix(CouplingConfig("ind", T=T))
        F = fm.indistinguishable_suite(T)["F_I"]
        proj = SINGLET.projector()
        werner = F * proj + (1 - F) * (np.eye(4) - proj) / 3
        assert s.rho.allclose(werner)

    def test_distinguishable_published_point(self):
        s = stage_mix(CouplingConfig("dis", T=0.4))
        assert concurrence(s.rho) == 0
        assert linear_entropy(s.rho) == pytest.approx(0.90, abs=0.01)
        assert s.success_probability == pytest.approx(0.52)

    def test_partial_published_point(self):
        s = stage_mix(CouplingConfig("partial", T=0.3, p=0.85))
        assert concurrence(s.rho) == 0
        assert s.success_probability == pytest.approx(0.4015, abs=1e-12)

    @given(st.floats(0.01, 1), st.floats(0, 1))
    def test_partial_fidelity(self, T, p):
        s = stage_mix(CouplingConfig("partial", T=T, p=p))
        suite = fm.partial_suite(p, T)
        assert fidelity(s.rho, SINGLET.projector()) == pytest.approx(suite["F"], abs=1e-9)
        assert s.success_probability == pytest.approx(suite["P"], abs=1e-12)


class TestStageMeasure:
    def test_bunching_kills_entanglement(self):
        assert concurrence(stage_measure(CouplingConfig("ind", T=0.5)).rho) == pytest.approx(0, abs=1e-12)

    def test_distinguishable_point(self):
        s = stage_measure(CouplingConfig("dis", T=0.4), "H")
        assert concurrence(s.rho) == pytest.approx(0.4**2 / 0.52, abs=1e-12)
        assert s.cumulative_probability == pytest.approx(0.26, abs=1e-12)
        assert s.success_probability == pytest.approx(0.5)
        assert linear_entropy(s.rho) == pytest.approx(0.74, abs=0.01)

    def test_partial_point(self):
        s = stage_measure(CouplingConfig("partial", T=0.3, p=0.85))
        assert concurrence(s.rho) == pytest.approx(0.2204, abs=1e-4)
        assert s.cumulative_probability == pytest.approx(0.20075, abs=1e-12)

    def test_zero_transmission(self):
        with pytest.raises(DegenerateCouplingError):
            stage_measure(CouplingConfig("ind", T=0.0))

    @pytest.mark.parametrize("T,p", list(itertools.product(T_GRID, P_GRID)))
    def test_outcome_symmetry(self, T, p):
        h = stage_measure(config(T, p), "H")
        v = stage_measure(config(T, p), "V")
        assert np.allclose(XX @ h.rho.data @ XX, v.rho.data, atol=1e-12)
        assert h.cumulative_probability == pytest.approx(v.cumulative_probability, abs=1e-12)

    @pytest.mark.parametrize("T,p", list(itertools.product(T_GRID, P_GRID)))
    def test_outcome_symmetry_experimental_input(self, T, p):
        h = stage_measure(config(T, p, input_state="experimental"), "H")
        v = stage_measure(config(T, p, input_state="experimental"), "V")
        assert concurrence(h.rho) == pytest.approx(concurrence(v.rho), abs=1e-10)
        assert bell_max(h.rho) == pytest.approx(bell_max(v.rho), abs=1e-10)

    def test_diagonal_outcome_allowed(self):
        s = stage_measure(CouplingConfig("dis", T=0.4), "D")
        assert s.cumulative_probability == pytest.approx(0.26)
        with pytest.raises(InvalidArgumentError):
            stage_filter(s, CouplingConfig("dis", T=0.4), FilterConfig(eps=0.5))


class TestClosedForms:
    @pytest.mark.parametrize("T,p", list(itertools.product(T_GRID, P_GRID)))
    @pytest.mark.parametrize("state", ["singlet", "experimental"])
    def test_numeric_equals_closed_form(self, T, p, state):
        cfg = config(T, p, input_state=state)
        for outcome, eps, merge in itertools.product("HV", EPS_GRID, (False, True)):
            f = FilterConfig(eps=eps, merge_arms=merge)
            stages = [stage_mix(cfg), stage_measure(cfg, outcome)]
            stages.append(stage_filter(stages[1], cfg, f))
            for s in stages:
                m, prob = closed_form_state(cfg, s.stage, outcome, f)
                assert np.abs(m - s.rho.data).max() < 1e-12
                assert abs(prob - s.cumulative_probability) < 1e-12

    @pytest.mark.parametrize("T", T_GRID)
    def test_experimental_input_keeps_metrics(self, T):
        for p in P_GRID:
            a = run_protocol(config(T, p), FilterConfig(eps=0.1))
            b = run_protocol(config(T, p, input_state="experimental"), FilterConfig(eps=0.1))
            for x, y in zip(a, b):
                assert x.metrics.concurrence == pytest.approx(y.metrics.concurrence, abs=1e-10)
                assert x.cumulative_probability == pytest.approx(y.cumulative_probability, abs=1e-12)

    def test_unknown_stage(self):
        with pytest.raises(InvalidArgumentError):
            closed_form_state(CouplingConfig("ind", T=0.3), "IV")


class TestFilter:
    def test_identity_filters(self):
        cfg = CouplingConfig("dis", T=0.4)
        prev = stage_measure(cfg)
        out = stage_filter(prev, cfg, FilterConfig(eps=1.0, balance="none"))
        assert out.success_probability == 1.0
        assert out.rho.allclose(prev.rho)

    def test_distinguishable_formula(self):
        cfg = CouplingConfig("dis", T=0.4)
        out = stage_filter(stage_measure(cfg), cfg, FilterConfig(eps=0.33))
        R, T, eps = 0.6, 0.4, 0.33
        xi = T**3 / math.sqrt(T**2 + R**2)
        expected = 2 * eps * xi / (2 * eps * T**2 + eps**2 * R**2)
        assert concurrence(out.rho) == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(0.405, abs=1e-3)

    def test_indistinguishable_limit(self):
        cfg = CouplingConfig("ind", T=0.75)
        out = stage_filter(stage_measure(cfg), cfg, FilterConfig(eps=1e-8))
        assert concurrence(out.rho) == pytest.approx(1, abs=1e-7)

    def test_requires_stage_two(self):
        cfg = CouplingConfig("ind", T=0.75)
        with pytest.raises(InvalidArgumentError):
            stage_filter(stage_mix(cfg), cfg, FilterConfig())

    @pytest.mark.parametrize("T", [0.2, 0.3, 0.4, 0.6, 0.75, 0.9])
    @pytest.mark.parametrize("side", ["on_A", "on_B"])
    def test_balance_from_either_arm(self, T, side):
        # both arms equalize the populations; the noise weight differs between them
        cfg = CouplingConfig("ind", T=T)
        out = stage_filter(stage_measure(cfg), cfg, FilterConfig(balance=side))
        m = out.rho.data
        assert m[1, 1].real == pytest.approx(m[2, 2].real, abs=1e-12)
        assert abs(m[1, 2]) == pytest.approx(m[1, 1].real, abs=1e-12)

    def test_merge_keeps_state_and_raises_probability(self):
        cfg = CouplingConfig("partial", T=0.3, p=0.85)
        prev = stage_measure(cfg)
        a = stage_filter(prev, cfg, FilterConfig(eps=0.121))
        b = stage_filter(prev, cfg, FilterConfig(eps=0.121, merge_arms=True))
        assert a.rho.allclose(b.rho)
        assert b.success_probability > a.success_probability
        gains = {f.side: f for f in b.filters}
        # the merged filters are the published intensity attenuations 0.121 and about 0.30
        assert gains["A"].gain_v ** 2 == pytest.approx(0.121, abs=1e-12)
        assert gains["B"].gain_v ** 2 == pytest.approx(0.30, abs=0.005)


class TestRunProtocol:
    def test_distinguishable_published_attenuation(self):
        cfg = CouplingConfig("dis", T=0.4)
        f = FilterConfig(balance="none", explicit_gains={"A": {"V": 0.33}})
        stages = run_protocol(cfg, f)
        assert 0.11 <= stages[2].cumulative_probability <= 0.12
        assert stages[2].metrics.concurrence == pytest.approx(0.408, abs=1e-3)

    def test_no_coupling(self):
        for s in run_protocol(CouplingConfig("ind", T=1.0), FilterConfig(eps=0.5)):
            assert s.rho.allclose(SINGLET.projector())

    def test_partial_back_solved_eps(self):
        stages = run_protocol(CouplingConfig("partial", T=0.3, p=0.85), FilterConfig(eps=0.121))
        assert stages[2].metrics.concurrence == pytest.approx(0.47, abs=2e-3)
        # joint success of the literal filter chain; see the README for the published 0.09
        assert stages[2].cumulative_probability == pytest.approx(0.00724, abs=1e-5)

    @pytest.mark.parametrize("T,p,eps", list(itertools.product(T_GRID, P_GRID, EPS_GRID[1:])))
    def test_invariants(self, T, p, eps):
        stages = run_protocol(config(T, p), FilterConfig(eps=eps))
        prod = 1.0
        for s in stages:
            prod *= s.success_probability
            assert s.cumulative_probability == pytest.approx(prod, abs=1e-12)
        assert stages[1].metrics.bell_max == pytest.approx(stages[0].metrics.bell_max, abs=1e-10)
        if (T, eps) != (0.1, 0.33) or p == 1.0:
            assert stages[2].metrics.concurrence >= stages[1].metrics.concurrence - 1e-12

    @pytest.mark.parametrize("p", [0.0, 0.5, 0.85])
    def test_weak_filter_can_lose_at_small_T(self, p):
        # arm-B balancing costs more coherence than a weak noise filter wins back
        stages = run_protocol(config(0.1, p), FilterConfig(eps=0.33))
        assert stages[2].metrics.concurrence < stages[1].metrics.concurrence
        m, _ = closed_form_state(config(0.1, p), "III", "H", FilterConfig(eps=0.33))
        assert concurrence(m) == pytest.approx(stages[2].metrics.concurrence, abs=1e-12)

    @pytest.mark.parametrize("T,p", list(itertools.product(T_GRID, [0.0, 0.5, 0.85])))
    @pytest.mark.parametrize("eps", EPS_GRID)
    def test_partial_formulas_where_balance_is_passive(self, T, p, eps):
        suite = fm.partial_suite(p, T, eps)
        if not suite["passive_balance"]:
            return
        stages = run_protocol(config(T, p), FilterConfig(eps=eps))
        assert stages[1].metrics.concurrence == pytest.approx(suite["C_I_meas"], abs=1e-12)
        assert stages[2].metrics.concurrence == pytest.approx(suite["C_III"], abs=1e-12)
        assert stages[2].metrics.bell_max == pytest.approx(suite["B_III"], abs=1e-10)
        assert stages[2].cumulative_probability == pytest.approx(suite["P_III"], abs=1e-12)

    @pytest.mark.parametrize("T", T_GRID)
    @pytest.mark.parametrize("eps", EPS_GRID)
    def test_indistinguishable_formulas(self, T, eps):
        suite = fm.indistinguishable_suite(T, eps)
        stages = run_protocol(CouplingConfig("ind", T=T), FilterConfig(eps=eps))
        for s, key in zip(stages, ("I", "II", "III")):
            assert s.metrics.concurrence == pytest.approx(suite[f"C_{key}"], abs=1e-12)
            assert s.cumulative_probability == pytest.approx(suite[f"P_{key}"], abs=1e-12)
        assert stages[2].metrics.bell_max == pytest.approx(suite["B_III"], abs=1e-10)

    def test_json_roundtrip(self):
        stages = run_protocol(CouplingConfig("partial", T=0.3, p=0.85), FilterConfig(eps=0.121))
        for s in stages:
            payload = json.loads(s.to_json())
            assert set(payload) >= {"stage", "rho", "success_probability", "cumulative_probability", "metrics"}
            back = StageResult.from_dict(payload)
            assert back == s
            assert back.metrics == s.metrics


class TestPolarizing:
    def test_isotropic_reduction(self):
        t = math.sqrt(0.8)
        f = FilterConfig(eps=0.2)
        a = run_protocol(CouplingConfig("ind", tv=t, th=t), f)
        b = run_protocol(CouplingConfig("ind", T=0.8), f)
        for x, y in zip(a, b):
            assert x.rho.allclose(y.rho)

    def test_dead_zone(self):
        s = stage_measure_polarizing(CouplingConfig("ind", tv=math.sqrt(0.5), th=0.6), "V")
        assert concurrence(s.rho) == pytest.approx(0, abs=1e-12)

    def test_distinguishable_limit(self):
        t = math.sqrt(0.4)
        cfg = CouplingConfig("dis", tv=t, th=t)
        out = stage_filter_polarizing(stage_measure_polarizing(cfg), cfg, FilterConfig(eps=1e-9))
        assert concurrence(out.rho) == pytest.approx(0.4 / math.sqrt(0.52), abs=1e-6)

    def test_requires_pair(self):
        with pytest.raises(InvalidArgumentError):
            stage_mix_polarizing(CouplingConfig("ind", T=0.5))
        with pytest.raises(DegenerateCouplingError):
            stage_mix_polarizing(CouplingConfig("ind", tv=0.0, th=0.5))

    @pytest.mark.parametrize("tv,th", list(itertools.product([0.3, 0.5, 0.65, 0.8, 0.95], repeat=2)))
    @pytest.mark.parametrize("eps", [1.0, 0.33, 0.01])
    @pytest.mark.parametrize("regime", ["ind", "dis"])
    def test_appendix_closed_forms(self, tv, th, eps, regime):
        suite = fm.polarizing_suite(tv, th, eps, regime)
        cfg = CouplingConfig(regime, tv=tv, th=th)
        mixed = stage_mix_polarizing(cfg)
        measured = stage_measure_polarizing(cfg, "V")
        assert concurrence(mixed.rho) == pytest.approx(suite["C_I"], abs=1e-12)
        assert mixed.cumulative_probability == pytest.approx(suite["P_I"], abs=1e-12)
        assert concurrence(measured.rho) == pytest.approx(suite["C_II"], abs=1e-12)
        assert measured.cumulative_probability == pytest.approx(suite["P_II"], abs=1e-12)
        if regime == "dis" and tv**4 + (1 - tv**2) ** 2 < tv**2 * th**2:
            # the published filter would need gain above one here
            return
        out = stage_filter_polarizing(measured, cfg, FilterConfig(eps=eps))
        assert concurrence(out.rho) == pytest.approx(suite["C_III"], abs=1e-12)
        assert out.cumulative_probability == pytest.approx(suite["P_III"], abs=1e-12)
