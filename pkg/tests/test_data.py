import numpy as np
import pytest
from sklearn.linear_model import LogisticRegression
from sklearn.metrics import roc_auc_score
from sklearn.neural_network import MLPClassifier

from cascadekit.data import (
    CsvParseError,
    Dataset,
    SynthConfig,
    apply_norm_stats,
    basis_expand,
    load_csv,
    save_csv,
    stratified_split,
    synth_generate,
    zscore_fit_apply,
)


class TestDataset:
    def test_basic_properties(self, tiny_data):
        assert tiny_data.n == 8
        assert tiny_data.dim == 2
        assert tiny_data.n_positive == 4
        assert tiny_data.feature_names == ("f1", "f2")

    def test_arrays_are_frozen(self, tiny_data):
        with pytest.raises(ValueError):
            tiny_data.X[0, 0] = 99.0
        with pytest.raises(ValueError):
            tiny_data.y[0] = 0

    def test_label_validation(self):
        with pytest.raises(ValueError, match="labels"):
            Dataset(np.zeros((2, 2)), np.array([0, 2]))
        with pytest.raises(ValueError, match="shape"):
            Dataset(np.zeros((2, 2)), np.array([0, 1, 1]))

    def test_rejects_non_finite(self):
        X = np.array([[1.0, np.nan]])
        with pytest.raises(ValueError, match="finite"):
            Dataset(X, np.array([1]))

    def test_feature_name_count_checked(self):
        with pytest.raises(ValueError, match="names"):
            Dataset(np.zeros((1, 3)), np.array([0]), feature_names=("a", "b"))

    def test_subset_keeps_names_and_stats(self, tiny_data):
        sub = tiny_data.subset([0, 4])
        assert sub.n == 2
        assert list(sub.y) == [1, 0]
        assert sub.feature_names == tiny_data.feature_names


class TestCsvRoundTrip:
    def test_round_trip_is_exact(self, tmp_path, tiny_data):
        path = tmp_path / "d.csv"
        save_csv(tiny_data, path)
        back = load_csv(path)
        np.testing.assert_array_equal(back.X, tiny_data.X)
        np.testing.assert_array_equal(back.y, tiny_data.y)
        assert back.feature_names == tiny_data.feature_names

    def test_full_precision_survives(self, tmp_path):
        X = np.array([[np.pi, 1 / 3], [np.e, 2 / 3]])
        data = Dataset(X, np.array([0, 1]))
        path = tmp_path / "d.csv"
        save_csv(data, path)
        np.testing.assert_array_equal(load_csv(path).X, X)

    def test_missing_label_header(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("f1,f2\n1,2\n")
        with pytest.raises(CsvParseError, match="label"):
            load_csv(path)

    def test_non_numeric_feature_reports_row(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("f1,label\n1.0,1\noops,0\n")
        with pytest.raises(CsvParseError, match="row 2"):
            load_csv(path)

    def test_non_binary_label(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("f1,label\n1.0,3\n")
        with pytest.raises(CsvParseError, match="non-binary"):
            load_csv(path)

    def test_ragged_row(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("f1,f2,label\n1.0,2.0,1\n1.0,1\n")
        with pytest.raises(CsvParseError, match="row 2"):
            load_csv(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("")
        with pytest.raises(CsvParseError, match="empty"):
            load_csv(path)


class TestZscore:
    def test_train_becomes_standard(self, tiny_data):
        train, _ = zscore_fit_apply(tiny_data)
        np.testing.assert_allclose(train.X.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(train.X.std(axis=0), 1.0, atol=1e-12)

    def test_others_use_train_stats(self, tiny_data):
        other = Dataset(tiny_data.X * 2 + 1, tiny_data.y)
        train, (norm_other,) = zscore_fit_apply(tiny_data, (other,))
        mean, std = train.norm_stats
        np.testing.assert_allclose(norm_other.X, (other.X - mean) / std)

    def test_constant_feature_maps_to_zero(self):
        X = np.column_stack([np.arange(4.0), np.full(4, 7.0)])
        train, _ = zscore_fit_apply(Dataset(X, np.array([0, 1, 0, 1])))
        np.testing.assert_array_equal(train.X[:, 1], 0.0)

    def test_apply_norm_stats_matches(self, tiny_data):
        train, _ = zscore_fit_apply(tiny_data)
        again = apply_norm_stats(tiny_data, train.norm_stats)
        np.testing.assert_array_equal(again.X, train.X)

    def test_dimension_mismatch(self, tiny_data):
        with pytest.raises(ValueError, match="dimension"):
            apply_norm_stats(tiny_data, (np.zeros(3), np.ones(3)))


def test_basis_expand_values():
    out = basis_expand(2.0, -3.0)
    np.testing.assert_array_equal(out, [2.0, -3.0, 4.0, 9.0, -6.0])
    arr = basis_expand(np.array([1.0, 2.0]), np.array([0.5, 0.25]))
    assert arr.shape == (2, 5)
    np.testing.assert_allclose(arr[1], [2.0, 0.25, 4.0, 0.0625, 0.5])


class TestStratifiedSplit:
    def test_exact_counts(self):
        data = synth_generate(SynthConfig(n_total=400, positive_fraction=0.25, dim=8))
        train, test = stratified_split(data, 300, 75, seed=3)
        assert train.n == 300 and train.n_positive == 75
        assert test.n == 100 and test.n_positive == 25

    def test_deterministic(self):
        data = synth_generate(SynthConfig(n_total=200, positive_fraction=0.3, dim=8))
        a1, b1 = stratified_split(data, 150, 45, seed=9)
        a2, b2 = stratified_split(data, 150, 45, seed=9)
        np.testing.assert_array_equal(a1.X, a2.X)
        np.testing.assert_array_equal(b1.X, b2.X)

    def test_partition_is_disjoint_and_complete(self):
        data = synth_generate(SynthConfig(n_total=200, positive_fraction=0.3, dim=8))
        train, test = stratified_split(data, 150, 45, seed=1)
        combined = np.vstack([train.X, test.X])
        key = np.lexsort(combined.T)
        orig = np.lexsort(data.X.T)
        np.testing.assert_array_equal(combined[key], data.X[orig])

    def test_infeasible_split_rejected(self):
        data = synth_generate(SynthConfig(n_total=100, positive_fraction=0.1, dim=8))
        with pytest.raises(ValueError, match="infeasible"):
            stratified_split(data, 90, 50, seed=0)


class TestSynthConfig:
    def test_defaults_mirror_detection_balance(self):
        cfg = SynthConfig()
        assert cfg.n_total == 3836
        assert round(cfg.positive_fraction * cfg.n_total) == 291

    def test_documented_fraction_example(self):
        cfg = SynthConfig(positive_fraction=0.0758, seed=7)
        data = synth_generate(cfg)
        assert data.n == 3836
        assert data.n_positive == 291

    def test_validation(self):
        with pytest.raises(ValueError):
            SynthConfig(n_total=0)
        with pytest.raises(ValueError):
            SynthConfig(positive_fraction=1.5)
        with pytest.raises(ValueError):
            SynthConfig(cheap_separable_fraction=0.0)
        with pytest.raises(ValueError, match="cheap_dim"):
            SynthConfig(dim=4, cheap_dim=5)
        with pytest.raises(ValueError, match="dim >= cheap_dim"):
            SynthConfig(dim=6, cheap_dim=5)


class TestSynthGenerate:
    CFG = SynthConfig(n_total=1200, positive_fraction=0.2, dim=12, cheap_dim=5,
                      cheap_separable_fraction=0.9, seed=11)

    def test_bit_identical_per_seed(self):
        a = synth_generate(self.CFG)
        b = synth_generate(self.CFG)
        np.testing.assert_array_equal(a.X, b.X)
        np.testing.assert_array_equal(a.y, b.y)

    def test_seed_changes_data(self):
        a = synth_generate(self.CFG)
        b = synth_generate(SynthConfig(n_total=1200, positive_fraction=0.2, dim=12,
                                       cheap_dim=5, seed=12))
        assert not np.array_equal(a.X, b.X)

    def test_cheap_view_rejects_most_negatives(self):
        """A linear model on the cheap view alone must reject at least the
        separable fraction of negatives while keeping 99% of positives."""
        data = synth_generate(self.CFG)
        clf = LogisticRegression(max_iter=1000).fit(data.X[:, :5], data.y)
        proba = clf.predict_proba(data.X[:, :5])[:, 1]
        pos_proba = np.sort(proba[data.y == 1])
        # operating point: drop at most 1% of positives
        threshold = pos_proba[int(0.01 * pos_proba.size)]
        kept_pos = np.mean(proba[data.y == 1] >= threshold)
        rejected_neg = np.mean(proba[data.y == 0] < threshold)
        assert kept_pos >= 0.99
        assert rejected_neg >= 0.9

    def test_hard_negatives_invisible_in_cheap_view(self):
        """Negatives that survive the cheap view look exactly like positives
        there: a cheap-view score cannot rank them apart."""
        data = synth_generate(self.CFG)
        cheap_mean = data.X[:, :5].mean(axis=1)
        hard = (data.y == 0) & (cheap_mean > 0)
        assert hard.sum() >= 15
        pos = data.y == 1
        clf = LogisticRegression(max_iter=1000).fit(data.X[:, :5], data.y)
        proba = clf.predict_proba(data.X[hard | pos][:, :5])[:, 1]
        auc = roc_auc_score(data.y[hard | pos], proba)
        assert 0.35 < auc < 0.65

    def test_hard_negatives_defeat_linear_but_not_nonlinear(self):
        """Pos-vs-hard is unsolvable by any linear model on the full space
        but cleanly solvable with one hidden layer."""
        data = synth_generate(self.CFG)
        cheap_mean = data.X[:, :5].mean(axis=1)
        mask = (data.y == 1) | ((data.y == 0) & (cheap_mean > 0))
        X, y = data.X[mask], data.y[mask]
        lin = LogisticRegression(max_iter=1000).fit(X, y)
        lin_auc = roc_auc_score(y, lin.predict_proba(X)[:, 1])
        assert lin_auc < 0.7
        net = MLPClassifier(hidden_layer_sizes=(8,), max_iter=800,
                            random_state=0).fit(X, y)
        assert net.score(X, y) >= 0.95

    def test_interaction_pair_signs(self):
        """Positives sit on the diagonal of the interaction pair, negatives
        on the anti-diagonal."""
        data = synth_generate(self.CFG)
        prod = data.X[:, 5] * data.X[:, 6]
        assert prod[data.y == 1].mean() > 3.0
        assert prod[data.y == 0].mean() < -3.0

    def test_easy_negative_count_meets_fraction(self):
        # ceil() in the construction keeps the separable share at or above
        # the configured fraction even when it does not divide evenly.
        cfg = SynthConfig(n_total=101, positive_fraction=0.2, dim=8,
                          cheap_dim=3, cheap_separable_fraction=0.9, seed=2)
        data = synth_generate(cfg)
        n_neg = data.n - data.n_positive
        cheap_mean = data.X[:, :3].mean(axis=1)
        n_easy = int(((data.y == 0) & (cheap_mean < 0)).sum())
        assert n_easy / n_neg >= 0.9
