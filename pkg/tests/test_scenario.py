"""Scenario configuration, the storage run report, and the attack sweeps."""
from __future__ import annotations

import dataclasses

import pytest

from gset import (
    RunReport,
    Scenario,
    ScenarioConfig,
    ScenarioError,
    build_scenario,
    run_storage_scenario,
)
from gset.attacks import (
    REPLAY_CORE,
    TAMPER_EXPECTATIONS,
    TAMPER_TARGETS,
    eavesdrop_check,
    replay_sweep,
    run_attack_suite,
    tamper_sweep,
)
from gset.scenario import ini_overrides


# --- configuration ------------------------------------------------------------


def test_default_config_prices_to_thirty():
    config = ScenarioConfig()
    assert config.rate == 10
    assert config.quantity == 3
    assert config.expected_price == 30


def test_config_requires_distinct_actor_ids():
    config = dataclasses.replace(ScenarioConfig(), provider_id="SR")
    with pytest.raises(ScenarioError):
        build_scenario(config)


def test_ini_overrides_full_round_trip(tmp_path):
    path = tmp_path / "scenario.ini"
    path.write_text(
        "[scenario]\n"
        "seed = 11\n"
        "quantity = 4\n"
        "rate = 25\n"
        "authorized_limit = 150\n"
        "credit_limit = 900\n"
        "adversary_spec = drop:PriceQuote:1\n"
    )
    overrides = ini_overrides(path)
    assert overrides == {
        "seed": 11,
        "quantity": 4,
        "rate": 25,
        "authorized_limit": 150,
        "credit_limit": 900,
        "adversary_spec": "drop:PriceQuote:1",
    }
    config = ScenarioConfig.from_ini(path)
    assert config.expected_price == 100
    assert config.seed == 11


def test_ini_rejects_unknown_keys(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[scenario]\nnot_a_field = 1\n")
    with pytest.raises(ScenarioError):
        ini_overrides(path)


def test_ini_rejects_bad_integers(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[scenario]\nseed = banana\n")
    with pytest.raises(ScenarioError):
        ini_overrides(path)


def test_ini_requires_scenario_section(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[other]\nseed = 3\n")
    with pytest.raises(ScenarioError):
        ini_overrides(path)


def test_missing_ini_file_is_an_error(tmp_path):
    with pytest.raises(ScenarioError):
        ini_overrides(tmp_path / "nope.ini")


# --- scenario construction -------------------------------------------------------


def test_scenario_account_ref_is_seed_stable():
    a = build_scenario(ScenarioConfig())
    b = build_scenario(ScenarioConfig())
    assert a.account_ref == b.account_ref
    assert a.account_ref.startswith("ACCT-")
    c = build_scenario(ScenarioConfig(seed=8))
    assert c.account_ref != a.account_ref


def test_scenario_objects_match_config():
    scenario = build_scenario(ScenarioConfig(object_count=5, object_size=32))
    assert len(scenario.objects) == 5
    assert all(len(obj) == 32 for obj in scenario.objects)


def test_scenario_markers_cover_both_sides():
    scenario = build_scenario(ScenarioConfig())
    assert scenario.account_ref.encode() in scenario.markers.payment_markers
    assert b"mobile-storage" in scenario.markers.usage_markers


# --- run reports ----------------------------------------------------------------


def test_denial_outcomes_from_config():
    # limit below price, requester-side sanity off at scenario level
    over = run_storage_scenario(
        dataclasses.replace(ScenarioConfig(), authorized_limit=20)
    )
    assert over.business_outcome == "DENIED:OVER_LIMIT"
    assert over.holds_created == 0

    broke = run_storage_scenario(
        dataclasses.replace(ScenarioConfig(), credit_limit=29)
    )
    assert broke.business_outcome == "DENIED:INSUFFICIENT_CREDIT"
    assert broke.holds_created == 0


def test_describe_is_deterministic_and_line_oriented():
    a = run_storage_scenario(ScenarioConfig()).describe()
    b = run_storage_scenario(ScenarioConfig()).describe()
    assert a == b
    assert len(a) >= 5
    assert any(line.startswith("outcome") for line in a)


def test_complete_success_requires_every_book_to_balance():
    report = run_storage_scenario(ScenarioConfig())
    assert report.complete_success()
    tweaked = dataclasses.replace(report, settle_count=0)
    assert not tweaked.complete_success()
    tweaked = dataclasses.replace(report, objects_retrieved=2)
    assert not tweaked.complete_success()


# --- attack sweeps (small scale; the acceptance gate runs them full-size) ---------


def test_tamper_targets_cover_all_signed_wire_types():
    for name in (
        "PriceQuote",
        "AuthorizationRequest",
        "AuthorizeAndHold",
        "AuthOutcome",
        "HoldRequest",
        "HoldResponse",
        "SettleRequest",
        "SettleResponse",
        "CaptureRequest",
        "CaptureResponse",
        "ObjectUpload",
        "ServiceGrant",
        "ServiceComplete",
        "AuthDecision",
        "TicketRedeemRequest",
        "TicketRedeemResponse",
    ):
        assert name in TAMPER_TARGETS, name


def test_tamper_sweep_stays_clean_at_small_scale():
    sweep = tamper_sweep(seed=7, mutations_per_type=3)
    assert sweep.ok, sweep.findings[:5]
    assert sweep.runs == len(TAMPER_TARGETS) * 3


def test_replay_sweep_stays_clean():
    sweep = replay_sweep(seed=7)
    assert sweep.ok, sweep.findings[:5]
    assert sweep.runs == len(TAMPER_TARGETS)


def test_eavesdrop_check_passes():
    sweep = eavesdrop_check(seed=7)
    assert sweep.ok, sweep.findings[:5]


def test_attack_suite_report_is_deterministic():
    a = run_attack_suite(seed=7, iterations=2)
    b = run_attack_suite(seed=7, iterations=2)
    assert a.ok
    assert a.render() == b.render()
    assert "[PASS]" in a.render()


def test_attack_suite_rejects_nonpositive_iterations():
    with pytest.raises(ValueError):
        run_attack_suite(seed=7, iterations=0)


def test_replay_core_targets_are_authorization_and_capture_legs():
    assert set(REPLAY_CORE) == {
        "AuthorizationRequest",
        "AuthorizeAndHold",
        "HoldRequest",
        "CaptureRequest",
        "SettleRequest",
    }
    assert set(REPLAY_CORE) <= set(TAMPER_EXPECTATIONS)
