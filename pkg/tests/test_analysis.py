"""Verification predicates and the method comparison harness."""
import numpy as np
import pytest

from edgeshare.analysis import (
    compare_methods,
    core_verify,
    superadditivity_audit,
    verify_scenario,
)
from edgeshare.engine import CharacteristicTable, build_characteristic_table, fast_core, shapley_payoffs
from edgeshare.model import Coalition, generate_scenario

# fixed three-provider reference game used as a regression instance:
# worths of {1},{2},{3},{1,2},{1,3},{2,3},{1,2,3}
REFERENCE_VALUES = {
    0b001: 36.0,
    0b010: 4.37,
    0b100: 4.31,
    0b011: 44.545,
    0b101: 44.623,
    0b110: 17.37,
    0b111: 62.06,
}
REFERENCE_TABLE = CharacteristicTable(n_players=3, values=REFERENCE_VALUES, reports={})


# ---------------------------------------------------------------------------
# core_verify


def test_reference_payoffs_sit_in_core():
    report = core_verify(np.array([40.34, 10.90, 10.81]), REFERENCE_TABLE, tol=1e-2)
    assert report.in_core
    assert report.is_group_rational and report.is_individually_rational
    assert report.violated_coalitions() == []


def test_greedy_grab_violates_individual_rationality():
    report = core_verify(np.array([62.06, 0.0, 0.0]), REFERENCE_TABLE, tol=1e-6)
    assert not report.in_core
    assert not report.is_individually_rational
    masks = [c.mask for c, _ in report.violated_coalitions()]
    assert 0b010 in masks and 0b100 in masks


def test_single_player_core():
    table = CharacteristicTable(n_players=1, values={1: 7.5}, reports={})
    assert core_verify(np.array([7.5]), table, tol=1e-9).in_core


def test_core_requires_complete_table():
    partial = CharacteristicTable(n_players=2, values={1: 1.0}, reports={})
    with pytest.raises(ValueError, match="complete"):
        core_verify(np.array([1.0, 0.0]), partial, tol=1e-6)


def test_deficit_magnitude_reported():
    table = CharacteristicTable(n_players=2, values={1: 1.0, 2: 1.0, 3: 4.0}, reports={})
    report = core_verify(np.array([3.5, 0.5]), table, tol=1e-6)
    ((coal, deficit),) = report.violated_coalitions()
    assert coal.mask == 0b10
    assert deficit == pytest.approx(0.5)
    assert report.worst_deficit == pytest.approx(0.5)


def test_overpaying_breaks_group_rationality():
    report = core_verify(np.array([100.0, 100.0, 100.0]), REFERENCE_TABLE, tol=1e-6)
    assert report.violated_coalitions() == []  # nobody wants to defect
    assert not report.is_group_rational and not report.in_core


# ---------------------------------------------------------------------------
# superadditivity_audit


def test_reference_values_are_superadditive():
    report = superadditivity_audit(REFERENCE_TABLE, tol=1e-9)
    assert report.ok and not report.violations
    assert report.pairs_checked == 6  # unordered disjoint nonempty pairs of 3


def test_injected_violation_is_flagged():
    table = CharacteristicTable(
        n_players=2, values={1: 3.0, 2: 2.0, 3: 4.0}, reports={})
    report = superadditivity_audit(table, tol=1e-9)
    assert not report.ok
    ((m1, m2, gap),) = report.violations
    assert {m1, m2} == {1, 2}
    assert gap == pytest.approx(1.0)
    assert report.worst_gap == pytest.approx(1.0)


def test_single_player_vacuously_superadditive():
    table = CharacteristicTable(n_players=1, values={1: 2.0}, reports={})
    report = superadditivity_audit(table, tol=1e-9)
    assert report.ok and report.pairs_checked == 0


# ---------------------------------------------------------------------------
# compare_methods


def test_solve_counts_three_players():
    s = generate_scenario(3, 2, 2, utility="linear", seed=0)
    rep = compare_methods(s, repetitions=2)
    assert rep.stats["shapley"].solves == 7
    assert rep.stats["fast"].solves == 6


def test_solve_counts_ten_players():
    s = generate_scenario(10, 1, 1, utility="linear", seed=1)
    rep = compare_methods(s, repetitions=1, include_shapley=True)
    assert rep.stats["shapley"].solves == 2**10 - 1
    assert rep.stats["fast"].solves == 20


def test_shapley_skipped_above_player_limit():
    s = generate_scenario(13, 1, 1, utility="linear", seed=2)
    rep = compare_methods(s, repetitions=1)
    assert "shapley" not in rep.stats and "fast" in rep.stats
    assert rep.speedup_pct is None


def test_totals_agree_for_exact_solves():
    s = generate_scenario(3, 3, 3, utility="linear", seed=3)
    rep = compare_methods(s, repetitions=2)
    assert rep.stats["shapley"].total == pytest.approx(rep.stats["fast"].total, abs=1e-6)
    assert rep.grand_value == pytest.approx(rep.stats["shapley"].total, abs=1e-6)


def test_standalone_values_match_singletons():
    s = generate_scenario(3, 2, 2, utility="linear", seed=4)
    rep = compare_methods(s, repetitions=1)
    table = build_characteristic_table(s, masks=[1, 2, 4])
    want = [table.value(1 << n) for n in range(3)]
    assert np.allclose(rep.standalone, want, atol=1e-9)


def test_timing_fields_populated():
    s = generate_scenario(2, 2, 2, utility="linear", seed=5)
    rep = compare_methods(s, repetitions=3)
    for stat in rep.stats.values():
        assert len(stat.times_ms) == 3
        assert stat.median_ms > 0
    assert rep.speedup_pct is not None


# ---------------------------------------------------------------------------
# verify_scenario bundle


def test_verify_scenario_bundles_reports():
    s = generate_scenario(2, 2, 2, utility="linear", seed=6)
    phi, table = shapley_payoffs(s)
    fast = fast_core(s)
    core_reports, sa = verify_scenario(
        s, table, {"shapley": phi, "fast": fast.payoffs}, tol=1e-6)
    assert set(core_reports) == {"shapley", "fast"}
    # two players: superadditive game always has both vectors in the core
    assert core_reports["shapley"].in_core and core_reports["fast"].in_core
    assert sa.ok
