import numpy as np
import pytest
from scipy import stats

from causalsynth.errors import ConfigError, DataError, SchemaError
from causalsynth.generators import (
    FilterPolicy,
    GeneratorSpec,
    dcr_filter,
    dcr_report,
    fit_generator,
    fit_joint_generator,
    import_external_covariates,
    load_generator,
    sample_covariates,
    save_generator,
)
from causalsynth.tabular import ColumnSpec, Schema, Table


def cov_schema(specs):
    return Schema(tuple(specs))


def binary_cov_schema(names):
    return cov_schema([ColumnSpec(n, "covariate", "binary") for n in names])


def one_column_table(values):
    schema = binary_cov_schema(["B"])
    return Table(schema, np.asarray(values, float).reshape(-1, 1))


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------


def test_independent_marginal_is_the_sample_frequency():
    values = np.zeros(1000)
    values[:600] = 1.0
    gen = fit_generator(
        one_column_table(values), GeneratorSpec(mode="independent", smoothing=0.0), 7
    )
    assert gen.columns["B"]["probs"][1] == 0.6


def test_chain_learns_a_perfect_conditional():
    rng = np.random.default_rng(5)
    w1 = rng.integers(0, 2, 400).astype(float)
    data = np.column_stack([w1, w1])
    table = Table(binary_cov_schema(["W1", "W2"]), data)
    gen = fit_generator(table, GeneratorSpec(mode="chain", smoothing=0.0), 1)
    sample = sample_covariates(gen, 5000, 9)
    s1, s2 = sample.column("W1"), sample.column("W2")
    cond = np.mean(s2[s1 == 1])
    assert cond >= 0.99


def test_random_permutation_order_is_seed_deterministic():
    rng = np.random.default_rng(6)
    table = Table(
        binary_cov_schema(["W1", "W2", "W3", "W4"]),
        rng.integers(0, 2, (50, 4)).astype(float),
    )
    spec = GeneratorSpec(mode="chain", order_policy="random-permutation")
    g1 = fit_generator(table, spec, 3)
    g2 = fit_generator(table, spec, 3)
    assert g1.column_order == g2.column_order
    assert sorted(g1.column_order) == ["W1", "W2", "W3", "W4"]


def test_fit_rejects_non_covariate_columns():
    schema = Schema(
        (
            ColumnSpec("W1", "covariate", "binary"),
            ColumnSpec("A", "treatment", "binary"),
            ColumnSpec("Y", "outcome", "binary"),
        )
    )
    table = Table(schema, np.zeros((20, 3)))
    with pytest.raises(SchemaError):
        fit_generator(table, GeneratorSpec(), 1)


def test_fit_rejects_tiny_tables():
    with pytest.raises(DataError):
        fit_generator(one_column_table([0, 1, 0]), GeneratorSpec(), 1)


def test_absent_categorical_level_without_smoothing_is_reported():
    schema = cov_schema([ColumnSpec("C", "covariate", "categorical", levels=3)])
    table = Table(schema, np.array([[0.0], [1.0]] * 10))
    with pytest.raises(DataError) as err:
        fit_generator(table, GeneratorSpec(mode="independent", smoothing=0.0), 1)
    assert "C" in str(err.value)
    fit_generator(table, GeneratorSpec(mode="independent", smoothing=1.0), 1)


def test_generator_spec_validation():
    with pytest.raises(ConfigError):
        GeneratorSpec(continuous_bins=1)
    with pytest.raises(ConfigError):
        GeneratorSpec(smoothing=-0.5)
    with pytest.raises(ConfigError):
        GeneratorSpec(mode="neural")


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def test_degenerate_marginal_samples_constant():
    gen = fit_generator(
        one_column_table(np.ones(50)), GeneratorSpec(mode="independent", smoothing=0.0), 1
    )
    sample = sample_covariates(gen, 200, 4)
    assert np.all(sample.column("B") == 1.0)


def test_sample_frequency_concentrates():
    values = np.zeros(2000)
    values[:1000] = 1.0
    gen = fit_generator(
        one_column_table(values), GeneratorSpec(mode="independent", smoothing=0.0), 2
    )
    sample = sample_covariates(gen, 10000, 8)
    assert np.mean(sample.column("B")) == pytest.approx(0.5, abs=0.015)


def test_sampling_is_deterministic_in_seed():
    rng = np.random.default_rng(10)
    table = Table(
        binary_cov_schema(["W1", "W2"]), rng.integers(0, 2, (100, 2)).astype(float)
    )
    gen = fit_generator(table, GeneratorSpec(mode="chain"), 5)
    assert sample_covariates(gen, 64, 3) == sample_covariates(gen, 64, 3)
    assert sample_covariates(gen, 64, 3) != sample_covariates(gen, 64, 4)


def test_chain_tracks_dependence_better_than_independent():
    rng = np.random.default_rng(14)
    n = 2000
    w1 = rng.integers(0, 2, n).astype(float)
    keep = rng.uniform(size=n) < 0.9
    w2 = np.where(keep, w1, 1.0 - w1)
    table = Table(binary_cov_schema(["W1", "W2"]), np.column_stack([w1, w2]))
    truth = np.corrcoef(w1, w2)[0, 1]
    for seed in range(5):
        chain = fit_generator(table, GeneratorSpec(mode="chain"), seed)
        indep = fit_generator(table, GeneratorSpec(mode="independent"), seed)
        sc = sample_covariates(chain, 5000, 100 + seed)
        si = sample_covariates(indep, 5000, 100 + seed)
        corr_chain = np.corrcoef(sc.column("W1"), sc.column("W2"))[0, 1]
        corr_indep = np.corrcoef(si.column("W1"), si.column("W2"))[0, 1]
        assert abs(corr_chain - truth) < abs(corr_indep - truth)
        assert corr_chain > 0.9 * truth


def test_independent_sampler_passes_chi_square_battery():
    rng = np.random.default_rng(20)
    d = 3
    table = Table(
        binary_cov_schema([f"W{i}" for i in range(1, d + 1)]),
        rng.integers(0, 2, (500, d)).astype(float),
    )
    gen = fit_generator(table, GeneratorSpec(mode="independent", smoothing=0.0), 9)
    marginals = [gen.columns[f"W{i}"]["probs"][1] for i in range(1, d + 1)]
    rejections = 0
    m = 10000
    for seed in range(20):
        sample = sample_covariates(gen, m, 1000 + seed)
        chi2 = 0.0
        for i, p in enumerate(marginals, start=1):
            ones = float(np.sum(sample.column(f"W{i}")))
            expected = np.array([m * (1 - p), m * p])
            observed = np.array([m - ones, ones])
            chi2 += float(np.sum((observed - expected) ** 2 / expected))
        if chi2 > stats.chi2.ppf(0.99, df=d):
            rejections += 1
    assert rejections <= 2


def test_continuous_chain_decodes_within_range():
    rng = np.random.default_rng(30)
    x = rng.normal(0.0, 2.0, 300)
    b = rng.integers(0, 2, 300).astype(float)
    schema = cov_schema(
        [ColumnSpec("X", "covariate", "continuous"), ColumnSpec("B", "covariate", "binary")]
    )
    table = Table(schema, np.column_stack([x, b]))
    gen = fit_generator(table, GeneratorSpec(mode="chain", continuous_bins=8), 2)
    sample = sample_covariates(gen, 2000, 6)
    sx = sample.column("X")
    assert sx.min() >= x.min() - 1e-9
    assert sx.max() <= x.max() + 1e-9
    assert len(np.unique(sx)) > 100  # uniform within-bin decoding, not bin ids


def test_generator_file_round_trip(tmp_path):
    rng = np.random.default_rng(33)
    table = Table(
        binary_cov_schema(["W1", "W2", "W3"]),
        rng.integers(0, 2, (120, 3)).astype(float),
    )
    for mode in ("independent", "chain"):
        gen = fit_generator(table, GeneratorSpec(mode=mode), 4)
        p = tmp_path / f"{mode}.json"
        save_generator(gen, p)
        back = load_generator(p)
        assert sample_covariates(back, 50, 12) == sample_covariates(gen, 50, 12)


def test_corrupt_generator_files_are_rejected(tmp_path):
    bad = tmp_path / "bad.json"
    for content in ("not json", "[]", '{"format_version": 99}', '{"format_version": 1}'):
        bad.write_text(content, encoding="utf-8")
        with pytest.raises(DataError):
            load_generator(bad)


def test_joint_generator_includes_treatment_and_outcome():
    rng = np.random.default_rng(35)
    schema = Schema(
        (
            ColumnSpec("W1", "covariate", "binary"),
            ColumnSpec("A", "treatment", "binary"),
            ColumnSpec("Y", "outcome", "binary"),
        )
    )
    table = Table(schema, rng.integers(0, 2, (60, 3)).astype(float))
    gen = fit_joint_generator(table, GeneratorSpec(mode="independent"), 1)
    assert set(gen.schema.names) == {"W1", "A", "Y"}


# ---------------------------------------------------------------------------
# external import
# ---------------------------------------------------------------------------


def test_import_accepts_valid_covariate_file(tmp_path):
    p = tmp_path / "ext.csv"
    p.write_text("W1,W2\n0,1\n1,1\n0,0\n")
    t = import_external_covariates(p, binary_cov_schema(["W1", "W2"]))
    assert t.n_rows == 3


def test_import_rejects_non_covariate_column(tmp_path):
    p = tmp_path / "ext.csv"
    p.write_text("W1,A\n0,1\n")
    schema = Schema(
        (
            ColumnSpec("W1", "covariate", "binary"),
            ColumnSpec("A", "treatment", "binary"),
        )
    )
    with pytest.raises(DataError):
        import_external_covariates(p, schema)


def test_import_accepts_exact_copies_of_seed_rows(tmp_path):
    p = tmp_path / "copy.csv"
    p.write_text("W1,W2\n1,0\n1,0\n")
    t = import_external_covariates(p, binary_cov_schema(["W1", "W2"]))
    assert t.n_rows == 2


# ---------------------------------------------------------------------------
# DCR report
# ---------------------------------------------------------------------------


def brute_force_min_distances(cand, ref):
    out = np.empty(cand.shape[0])
    for i, row in enumerate(cand):
        out[i] = np.sqrt(np.min(np.sum((ref - row) ** 2, axis=1)))
    return out


def test_dcr_self_match_is_zero():
    rng = np.random.default_rng(40)
    table = Table(
        binary_cov_schema(["W1", "W2"]), rng.integers(0, 2, (30, 2)).astype(float)
    )
    report = dcr_report(table, table)
    assert np.all(report.distances == 0.0)
    assert report.quantiles["max"] == 0.0


def test_dcr_two_point_geometry():
    schema = binary_cov_schema(["W1", "W2"])
    cand = Table(schema, np.array([[0.0, 0.0]]))
    ref = Table(schema, np.array([[0.0, 1.0], [1.0, 1.0]]))
    report = dcr_report(cand, ref)
    assert report.distances[0] == 1.0


def test_dcr_matches_brute_force_exactly():
    rng = np.random.default_rng(41)
    schema = binary_cov_schema([f"W{i}" for i in range(1, 7)])
    for _ in range(10):
        cand = Table(schema, rng.integers(0, 2, (200, 6)).astype(float))
        ref = Table(schema, rng.integers(0, 2, (200, 6)).astype(float))
        report = dcr_report(cand, ref, workers=3)
        assert np.array_equal(report.distances, brute_force_min_distances(cand.data, ref.data))


def test_dcr_quantiles_are_monotone():
    rng = np.random.default_rng(42)
    schema = binary_cov_schema(["W1", "W2", "W3"])
    cand = Table(schema, rng.integers(0, 2, (80, 3)).astype(float))
    ref = Table(schema, rng.integers(0, 2, (40, 3)).astype(float))
    q = dcr_report(cand, ref).quantiles
    assert q["min"] <= q["q25"] <= q["median"] <= q["q75"] <= q["max"]


def test_dcr_comparison_quantiles_only_when_given():
    rng = np.random.default_rng(43)
    schema = binary_cov_schema(["W1", "W2"])
    t = lambda: Table(schema, rng.integers(0, 2, (25, 2)).astype(float))
    assert dcr_report(t(), t()).comparison_quantiles is None
    assert dcr_report(t(), t(), t()).comparison_quantiles is not None


def test_dcr_continuous_standardization_hand_check():
    schema = cov_schema([ColumnSpec("X", "covariate", "continuous")])
    ref = Table(schema, np.array([[0.0], [2.0]]))  # mean 1, std 1
    cand = Table(schema, np.array([[3.0]]))
    report = dcr_report(cand, ref)
    assert report.distances[0] == pytest.approx(1.0, abs=1e-12)


def test_dcr_categorical_uses_one_of_k():
    schema = cov_schema([ColumnSpec("C", "covariate", "categorical", levels=3)])
    cand = Table(schema, np.array([[0.0]]))
    ref = Table(schema, np.array([[1.0]]))
    report = dcr_report(cand, ref)
    assert report.distances[0] == pytest.approx(np.sqrt(2.0), abs=1e-12)


def test_dcr_rejects_schema_mismatch():
    a = Table(binary_cov_schema(["W1"]), np.zeros((5, 1)))
    b = Table(binary_cov_schema(["W2"]), np.zeros((5, 1)))
    with pytest.raises(SchemaError):
        dcr_report(a, b)


# ---------------------------------------------------------------------------
# DCR filter
# ---------------------------------------------------------------------------


def test_filter_purges_all_duplicates_or_reports_empty():
    rng = np.random.default_rng(50)
    schema = binary_cov_schema(["W1", "W2"])
    ref = Table(schema, rng.integers(0, 2, (40, 2)).astype(float))
    with pytest.raises(DataError):
        dcr_filter(ref, ref)


def test_filter_keeps_exactly_the_non_duplicates():
    schema = binary_cov_schema(["W1", "W2", "W3"])
    ref = Table(schema, np.array([[0, 0, 0], [1, 1, 1]], float))
    cand_rows = np.array(
        [[0, 0, 0], [1, 0, 0], [1, 1, 1], [0, 1, 1], [0, 0, 0]], float
    )
    cand = Table(schema, cand_rows)
    kept, report = dcr_filter(cand, ref)
    assert kept.n_rows == 2
    assert report.removed_floor == 3
    assert report.removed_count == 3
    assert np.array_equal(kept.data, np.array([[1, 0, 0], [0, 1, 1]], float))


def test_filter_survivors_never_violate_the_floor():
    rng = np.random.default_rng(51)
    schema = cov_schema(
        [ColumnSpec("X", "covariate", "continuous"), ColumnSpec("B", "covariate", "binary")]
    )
    ref = Table(schema, np.column_stack([rng.normal(size=60), rng.integers(0, 2, 60)]))
    cand = Table(schema, np.column_stack([rng.normal(size=80), rng.integers(0, 2, 80)]))
    floor = 0.05
    kept, _ = dcr_filter(cand, ref, policy=FilterPolicy(floor=floor))
    report = dcr_report(kept, ref)
    assert np.all(report.distances >= floor)


def test_filter_output_is_a_subsequence_of_input():
    rng = np.random.default_rng(52)
    schema = cov_schema([ColumnSpec("X", "covariate", "continuous")])
    ref = Table(schema, rng.normal(size=(50, 1)))
    cand = Table(schema, rng.normal(size=(70, 1)))
    kept, _ = dcr_filter(cand, ref, policy=FilterPolicy(floor=0.01))
    # every kept row appears in the candidate, in order
    pos = 0
    for row in kept.data:
        while pos < cand.n_rows and not np.array_equal(cand.data[pos], row):
            pos += 1
        assert pos < cand.n_rows
        pos += 1


def test_filter_quantile_matching_tracks_the_holdout():
    rng = np.random.default_rng(53)
    schema = cov_schema([ColumnSpec("X", "covariate", "continuous")])
    ref = Table(schema, rng.normal(size=(300, 1)))
    holdout = Table(schema, rng.normal(size=(300, 1)))
    # candidate with inflated distances: a wider cloud
    cand = Table(schema, 2.5 * rng.normal(size=(600, 1)))
    policy = FilterPolicy(floor=0.0, match_quantiles=True)
    kept, report = dcr_filter(cand, ref, holdout, policy)
    assert report.quantile_match_feasible is not None
    target = report.comparison_quantiles
    got = report.quantiles
    if report.quantile_match_feasible:
        for key in ("q25", "median", "q75"):
            assert abs(got[key] - target[key]) <= 0.10 * max(abs(target[key]), 1e-12)


def test_filter_match_quantiles_needs_holdout():
    rng = np.random.default_rng(54)
    schema = cov_schema([ColumnSpec("X", "covariate", "continuous")])
    ref = Table(schema, rng.normal(size=(30, 1)))
    cand = Table(schema, rng.normal(size=(30, 1)))
    with pytest.raises(ConfigError):
        dcr_filter(cand, ref, None, FilterPolicy(match_quantiles=True))
