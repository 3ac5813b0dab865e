import numpy as np
import pytest

from causalsynth.errors import ConfigError, PositivityError
from causalsynth.positivity import (
    extreme_threshold,
    flag_extreme,
    pair_augment,
)
from causalsynth.tabular import ColumnSpec, Schema, Table

FULL = Schema(
    (
        ColumnSpec("W1", "covariate", "binary"),
        ColumnSpec("W2", "covariate", "binary"),
        ColumnSpec("A", "treatment", "binary"),
        ColumnSpec("Y", "outcome", "binary"),
    )
)


def full_table(rows):
    return Table(FULL, np.array(rows, float))


# ---------------------------------------------------------------------------
# threshold
# ---------------------------------------------------------------------------


def test_threshold_at_100():
    assert extreme_threshold(100) == pytest.approx(0.021715, abs=1e-6)


def test_threshold_at_5740():
    assert extreme_threshold(5740) == pytest.approx(0.001525, abs=1e-6)


def test_threshold_strictly_decreasing():
    assert extreme_threshold(1000) > extreme_threshold(2000)


def test_threshold_rejects_tiny_n():
    for n in (0, 1, 7):
        with pytest.raises(ConfigError):
            extreme_threshold(n)
    assert 0.0 < extreme_threshold(8) < 0.5


# ---------------------------------------------------------------------------
# flagging
# ---------------------------------------------------------------------------


def test_interior_scores_are_unflagged():
    flags = flag_extreme(np.full(5, 0.5), 0.01, "both")
    assert flags.n_low == 0 and flags.n_high == 0
    assert list(flags.flags) == ["none"] * 5


def test_flags_split_by_tail():
    flags = flag_extreme(np.array([0.001, 0.5, 0.999]), 0.01, "both")
    assert list(flags.flags) == ["low", "none", "high"]


def test_low_only_ignores_the_high_tail():
    flags = flag_extreme(np.array([0.001, 0.999]), 0.01, "low")
    assert list(flags.flags) == ["low", "none"]


def test_flag_boundary_is_strict():
    flags = flag_extreme(np.array([0.01, 0.99]), 0.01, "both")
    assert list(flags.flags) == ["none", "none"]


def test_flagged_fraction_tracks_the_score_law():
    rng = np.random.default_rng(3)
    tau = 0.05
    scores = rng.uniform(size=20000)
    flags = flag_extreme(scores, tau, "both")
    expect = tau * 20000
    sigma = np.sqrt(20000 * tau * (1 - tau))
    assert abs(flags.n_low - expect) <= 3 * sigma
    assert abs(flags.n_high - expect) <= 3 * sigma


def test_flag_threshold_domain():
    with pytest.raises(ConfigError):
        flag_extreme(np.array([0.5]), 0.6, "both")
    with pytest.raises(ConfigError):
        flag_extreme(np.array([0.5]), 0.01, "sideways")


# ---------------------------------------------------------------------------
# pairing
# ---------------------------------------------------------------------------


def test_no_flags_is_a_no_op():
    table = full_table([[0, 0, 1, 0], [1, 1, 0, 1]])
    pool = full_table([[0, 1, 1, 1]])
    flags = flag_extreme(np.array([0.4, 0.6]), 0.01, "both")
    augmented, plan = pair_augment(table, pool, flags)
    assert augmented == table
    assert plan.matches == ()


def test_nearest_match_geometry():
    table = full_table([[0, 0, 0, 0]])
    pool = full_table(
        [
            [1, 1, 1, 1],  # distance sqrt(2)
            [0, 0, 1, 1],  # distance 0
            [0, 0, 0, 0],  # right covariates, wrong arm
        ]
    )
    flags = flag_extreme(np.array([0.001]), 0.01, "both")
    augmented, plan = pair_augment(table, pool, flags)
    assert augmented.n_rows == 2
    match = plan.matches[0]
    assert match.pool_row == 1
    assert match.distance == 0.0
    assert match.matched_treatment == 1.0
    assert np.array_equal(augmented.data[1], pool.data[1])


def test_low_flags_borrow_treated_high_flags_borrow_control():
    table = full_table([[0, 0, 0, 0], [1, 1, 1, 1]])
    pool = full_table([[0, 0, 1, 1], [1, 1, 0, 0]])
    flags = flag_extreme(np.array([0.001, 0.999]), 0.01, "both")
    _, plan = pair_augment(table, pool, flags)
    by_source = {m.source_row: m for m in plan.matches}
    assert by_source[0].tail == "low" and by_source[0].matched_treatment == 1.0
    assert by_source[1].tail == "high" and by_source[1].matched_treatment == 0.0


def test_original_rows_are_an_untouched_prefix():
    rng = np.random.default_rng(8)
    table = full_table(rng.integers(0, 2, (30, 4)))
    pool = full_table(rng.integers(0, 2, (60, 4)))
    scores = rng.uniform(0.0005, 0.0015, 30)
    flags = flag_extreme(scores, 0.01, "both")
    augmented, plan = pair_augment(table, pool, flags)
    assert np.array_equal(augmented.data[:30], table.data)
    assert augmented.n_rows == 30 + len(plan.matches)


def test_match_distances_are_exhaustive_minima():
    rng = np.random.default_rng(9)
    table = full_table(rng.integers(0, 2, (12, 4)))
    pool = full_table(rng.integers(0, 2, (25, 4)))
    scores = np.full(12, 0.001)
    flags = flag_extreme(scores, 0.01, "both")
    _, plan = pair_augment(table, pool, flags)
    pool_treated = pool.data[pool.data[:, 2] == 1]
    for match in plan.matches:
        src = table.data[match.source_row, :2]
        dists = np.sqrt(np.sum((pool_treated[:, :2] - src) ** 2, axis=1))
        assert match.distance == np.min(dists)


def test_ties_break_to_the_lowest_pool_index():
    table = full_table([[0, 0, 0, 0]])
    pool = full_table([[0, 0, 1, 0], [0, 0, 1, 1]])  # equal distance 0
    flags = flag_extreme(np.array([0.001]), 0.01, "both")
    _, plan = pair_augment(table, pool, flags)
    assert plan.matches[0].pool_row == 0


def test_pairing_is_deterministic():
    rng = np.random.default_rng(10)
    table = full_table(rng.integers(0, 2, (20, 4)))
    pool = full_table(rng.integers(0, 2, (40, 4)))
    flags = flag_extreme(rng.uniform(size=20), 0.2, "both")
    a1, p1 = pair_augment(table, pool, flags)
    a2, p2 = pair_augment(table, pool, flags)
    assert a1 == a2
    assert p1.matches == p2.matches


def test_missing_complementary_arm_is_reported():
    table = full_table([[0, 0, 0, 0]])
    pool = full_table([[0, 0, 0, 1]])  # only control rows
    flags = flag_extreme(np.array([0.001]), 0.01, "both")
    with pytest.raises(PositivityError) as err:
        pair_augment(table, pool, flags)
    assert "low" in str(err.value)


def test_flag_length_must_match_table():
    table = full_table([[0, 0, 0, 0], [1, 1, 1, 1]])
    pool = full_table([[0, 0, 1, 1]])
    flags = flag_extreme(np.array([0.001]), 0.01, "both")
    with pytest.raises(PositivityError):
        pair_augment(table, pool, flags)
