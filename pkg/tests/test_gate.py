import itertools

import pytest

from conftest import CASE_VALUES
from src.base.domain import Action
from src.cohort.features import MISSING
from src.engine.gate import (
    SUPPORT_DOMAINS,
    GateDecision,
    GateThresholds,
    apply_gate,
    balance_gate,
    support_flags,
)


def test_gate_exhaustive():
    thresholds = GateThresholds()
    for bits in itertools.product([False, True], repeat=len(SUPPORT_DOMAINS)):
        flags = dict(zip(SUPPORT_DOMAINS, bits))
        count = sum(bits)
        for action in Action:
            outcome = apply_gate(action, flags, thresholds)
            assert outcome.support_count == count
            if action is Action.INVESTIGATE_O and count < 2:
                assert outcome.final_action is Action.TREAT_S
                assert outcome.gate is GateDecision.DOWNGRADE_TO_TREAT_S
            else:
                assert outcome.final_action is action
                assert outcome.gate is GateDecision.NONE


def test_case_evidence_supports_only_hemodynamic():
    outcome = balance_gate(Action.INVESTIGATE_O, CASE_VALUES, GateThresholds())
    assert outcome.support_flags == {
        "hemodynamic": True, "perfusion": False, "renal": False, "pressor": False, "organ": False,
    }
    assert outcome.support_count == 1
    assert outcome.final_action is Action.TREAT_S


@pytest.mark.parametrize("evidence, domain", [
    ({"map_low_minutes_last1h_thr65": 10}, "hemodynamic"),
    ({"map_median_last1h": 64.0}, "hemodynamic"),
    ({"lactate_latest_6h": 2.0}, "perfusion"),
    ({"urine_output_mlkghr_6h": 0.49}, "renal"),
    ({"norepi_eq_dose_max_1h": 0.01}, "pressor"),
    ({"sofa_total": 8}, "organ"),
])
def test_support_thresholds(evidence, domain):
    flags = support_flags(evidence, GateThresholds())
    assert [d for d, on in flags.items() if on] == [domain]


def test_boundary_values_do_not_support():
    evidence = {
        "map_low_minutes_last1h_thr65": 9,
        "map_median_last1h": 65.0,
        "lactate_latest_6h": 1.99,
        "urine_output_mlkghr_6h": 0.5,
        "norepi_eq_dose_max_1h": 0.0,
        "sofa_total": 7,
    }
    assert not any(support_flags(evidence, GateThresholds()).values())


def test_missing_evidence_counts_as_no_support():
    evidence = {k: MISSING for k in CASE_VALUES}
    outcome = balance_gate(Action.INVESTIGATE_O, evidence, GateThresholds())
    assert outcome.support_count == 0
    assert outcome.final_action is Action.TREAT_S


def test_two_domains_keep_escalation():
    evidence = {"lactate_latest_6h": 3.1, "sofa_total": 9}
    outcome = balance_gate(Action.INVESTIGATE_O, evidence, GateThresholds())
    assert outcome.final_action is Action.INVESTIGATE_O
    assert outcome.gate is GateDecision.NONE


def test_min_support_is_configurable():
    evidence = {"lactate_latest_6h": 3.1}
    assert balance_gate(Action.INVESTIGATE_O, evidence, GateThresholds(min_support=1)).final_action \
        is Action.INVESTIGATE_O
