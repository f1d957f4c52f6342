"""
数值验证套件测试：少量随机实例上各项检查都应通过
"""

import numpy as np
import pytest

from core.b2mapo_optimizer import SchemeConfig, run_round
from core.exceptions import InputError
from core.models import BatchSequence, BoundReport, SchemeMode
from core.policies import PolicySet
from core.utils import read_csv
from core.verify_suite import (
    BOUNDS_HEADER,
    chain_from_report,
    check_a2po_equivalence,
    check_advantage_bound,
    check_advantage_discrepancy,
    check_corollary1,
    check_distillation,
    check_happo_bound,
    check_incremental_tightening,
    check_joint_bound,
    check_lemma1,
    check_lemma2,
    check_mappo_bound,
    check_performance_difference,
    check_single_batch_bound,
    check_theorem2_equivalence,
    check_theorem3_distillation,
    check_tv_product,
    check_visitation_series,
    sample_update_chain,
    single_batch_bound,
    summarize_reports,
    tightening_sequence,
    write_bounds_csv,
)


def _assert_all_pass(reports):
    failed = [(r.statement, r.seed, r.lhs, r.rhs) for r in reports if not r.passed]
    assert not failed


@pytest.mark.parametrize(
    "check, statement",
    [
        (lambda: check_tv_product(20), "tv_product"),
        (lambda: check_advantage_bound(10), "advantage_bound"),
        (lambda: check_advantage_discrepancy(5, horizon=6), "advantage_discrepancy"),
        (lambda: check_visitation_series(5, horizon=300), "visitation_series"),
        (lambda: check_performance_difference(5), "performance_difference"),
        (lambda: check_mappo_bound(10), "mappo"),
        (lambda: check_happo_bound(5), "happo"),
    ],
)
def test_closed_form_checks_pass(check, statement):
    reports = check()
    assert reports
    assert {r.statement for r in reports} == {statement}
    _assert_all_pass(reports)


def test_single_batch_checks_pass():
    reports = check_single_batch_bound(3, seed=1)
    assert {r.statement for r in reports} == {"single_batch", "single_batch/behavior"}
    _assert_all_pass(reports)


def test_joint_checks_pass():
    reports = check_joint_bound(3, seed=2)
    assert {r.statement for r in reports} == {
        "joint",
        "joint/pre-relaxation",
        "joint/behavior",
    }
    _assert_all_pass(reports)


def test_tightening_is_monotone():
    _assert_all_pass(check_incremental_tightening(3, seed=3))
    chain = sample_update_chain(11, n_batches=2)
    expressions = tightening_sequence(chain)
    assert len(expressions) == 3
    assert all(b <= a + 1e-9 for a, b in zip(expressions, expressions[1:]))


def test_a2po_equivalence():
    """a2po 训练器规划出的顺序逐轮都是单智能体批次，同顺序的 b2mapo-fixed 与之逐参数一致"""
    report = check_a2po_equivalence(seed=4)
    assert report.statement == "a2po_equivalence"
    assert report.passed
    assert report.extras["parameter_gap"] <= 1e-12
    orders = report.extras["orders"]
    assert len(orders) == 3
    assert orders[0] == "[{1},{2},{3}]"
    for order in orders:
        assert "," not in order.replace("},{", "")


def test_distillation_reports_median_over_seeds():
    reports = check_distillation(seed=0, rounds=2, n_seeds=3)
    constructions = [r for r in reports if r.statement == "distill/construction"]
    trained = [r for r in reports if r.statement == "distill/trained"]
    assert [r.seed for r in constructions] == [0, 1, 2]
    assert all(r.passed for r in constructions)
    assert len(trained) == 1
    gaps = trained[0].extras["gaps"]
    assert sorted(gaps) == [0, 1, 2]
    assert trained[0].lhs == pytest.approx(np.median(list(gaps.values())))
    assert all(kl >= 0.0 for kl in trained[0].extras["kl"].values())
    with pytest.raises(InputError):
        check_distillation(n_seeds=0)


def test_happo_bound_uses_per_term_epsilons():
    """α^i 项用 ε^{π̂^{i-1}}、前序项用 ε^π；未更新的实例左端为 0"""
    reports = check_happo_bound(5, seed=7)
    _assert_all_pass(reports)
    assert reports[0].lhs == pytest.approx(0.0, abs=1e-9)
    assert all(r.extras["uncontrollable"] >= 0.0 for r in reports)


def test_operation_aliases():
    assert check_corollary1 is check_tv_product
    assert check_lemma1 is check_advantage_bound
    assert check_lemma2 is check_advantage_discrepancy
    assert check_theorem2_equivalence is check_a2po_equivalence
    assert check_theorem3_distillation is check_distillation


def test_single_batch_bound_value():
    """γ=0.5、Σα=1 时漂移项为 2-1=1，4·1·1·1 = 4"""
    assert single_batch_bound(1.0, 1.0, 5.0, 0.0, 0.5) == pytest.approx(4.0)
    assert single_batch_bound(0.0, 0.3, 0.3, 0.5, 0.5) == pytest.approx(1.0)


def test_chain_from_report_requires_recorded_chain(random_game):
    config = SchemeConfig(
        mode=SchemeMode.B2MAPO_FIXED,
        fixed_sequence=BatchSequence.single(2),
        n_episodes=2,
        horizon=4,
    )
    policy_set = PolicySet.create(random_game, BatchSequence.single(2))
    report = run_round(random_game, policy_set, config, seed=0)
    with pytest.raises(InputError):
        chain_from_report(random_game, report, config)


def test_summarize_and_write(tmp_path):
    reports = [
        BoundReport("mappo", 1, 0.1, 0.5, 1e-9),
        BoundReport("mappo", 2, 0.4, 0.5, 1e-9),
        BoundReport("happo", 3, 0.6, 0.5, 1e-9),
    ]
    summary = summarize_reports(reports)
    assert summary["mappo"]["checks"] == 2
    assert summary["mappo"]["failures"] == 0
    assert summary["mappo"]["min_slack"] == pytest.approx(0.1)
    assert summary["happo"]["failures"] == 1

    rows = read_csv(write_bounds_csv(reports, tmp_path / "bounds.csv"))
    assert list(rows[0]) == BOUNDS_HEADER
    assert [row["pass"] for row in rows] == ["1", "1", "0"]
