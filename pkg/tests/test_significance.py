import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gmwscat import ConfigError
from gmwscat.features import FeatureLayout, PcaModel
from gmwscat.significance import (
    SignificanceMap,
    export_heatmap,
    heatmap_grid,
    significance_scores,
)

# reduced layer shapes so PCA stays small: layer-3 tensor (t, j3, j2, j1)
SHAPES = {0: (10,), 1: (8, 3), 2: (6, 2, 3), 3: (2, 3, 2, 3)}


def make_layout():
    return FeatureLayout(SHAPES)


def make_pca(layout, k=5, seed=0):
    rng = np.random.default_rng(seed)
    d = len(layout)
    comps, _ = np.linalg.qr(rng.standard_normal((d, k)))
    return PcaModel(mean=rng.standard_normal(d), components=comps.T.copy(),
                    singular_values=np.linspace(5, 1, k))


class TestSignificanceScores:
    def test_zero_theta_degenerate(self, caplog):
        layout = make_layout()
        pca = make_pca(layout)
        with caplog.at_level("WARNING", logger="gmwscat.significance"):
            smap = significance_scores(np.zeros(5), pca, layout, genre="pop")
        assert smap.degenerate
        assert np.all(smap.scores == 0)
        assert any("degenerate" in r.message for r in caplog.records)

    def test_single_component_theta(self):
        layout = make_layout()
        pca = make_pca(layout)
        e1 = np.zeros(5)
        e1[0] = 1.0
        smap = significance_scores(e1, pca, layout)
        sl = layout.layer_slice(3)
        raw = np.abs(pca.components[0])[sl].reshape(SHAPES[3])
        expected = np.moveaxis(raw, 0, -1)
        expected = expected / expected.max()
        np.testing.assert_allclose(smap.scores, expected, atol=1e-12)
        assert smap.scores.max() == 1.0

    def test_max_exactly_one(self):
        layout = make_layout()
        pca = make_pca(layout, seed=1)
        rng = np.random.default_rng(2)
        for _ in range(5):
            smap = significance_scores(rng.standard_normal(5), pca, layout)
            assert smap.scores.max() == 1.0
            assert np.all(smap.scores >= 0)

    def test_axes_are_scales_then_time(self):
        layout = make_layout()
        pca = make_pca(layout, seed=3)
        smap = significance_scores(np.ones(5), pca, layout)
        assert smap.scores.shape == (3, 2, 3, 2)  # (j3, j2, j1, t)

    @given(st.floats(min_value=1e-3, max_value=1e3))
    @settings(max_examples=20, deadline=None)
    def test_scale_invariance(self, alpha):
        layout = make_layout()
        pca = make_pca(layout, seed=4)
        theta = np.random.default_rng(5).standard_normal(5)
        a = significance_scores(theta, pca, layout)
        b = significance_scores(alpha * theta, pca, layout)
        np.testing.assert_allclose(a.scores, b.scores, rtol=1e-10)

    def test_dimension_mismatches_rejected(self):
        layout = make_layout()
        pca = make_pca(layout)
        with pytest.raises(ConfigError):
            significance_scores(np.zeros(4), pca, layout)
        bad_layout = FeatureLayout({0: (3,), 3: SHAPES[3]})
        with pytest.raises(ConfigError):
            significance_scores(np.zeros(5), pca, bad_layout)


class TestHeatmapExport:
    def test_all_zero_map_clamps_uniform(self, tmp_path):
        smap = SignificanceMap(genre="x", scores=np.zeros((3, 2, 3, 2)),
                               degenerate=True)
        grid = export_heatmap(smap, tmp_path / "x.csv")
        assert np.all(grid == 0.4)

    def test_single_hot_cell(self):
        scores = np.zeros((2, 2, 2, 2))
        scores[1, 0, 1, 1] = 1.0
        grid = heatmap_grid(SignificanceMap(genre="g", scores=scores))
        assert grid.shape == (2, 8)
        assert np.sum(grid == 1.0) == 1
        assert np.sum(grid == 0.4) == grid.size - 1
        # block 1 (j3=1), row j2=0, column j1*tn + t = 1*2 + 1
        assert grid[0, 4 + 3] == 1.0

    def test_block_column_count_full_size(self):
        # full-size deepest layer: 33 paths * 7 samples = 231 columns per block
        scores = np.random.default_rng(6).random((10, 14, 33, 7))
        smap = SignificanceMap(genre="g", scores=scores / scores.max())
        assert smap.block_columns == 231
        grid = heatmap_grid(smap)
        assert grid.shape == (14, 10 * 231)

    def test_csv_round_trip(self, tmp_path):
        rng = np.random.default_rng(7)
        scores = rng.random((2, 3, 2, 2))
        scores /= scores.max()
        smap = SignificanceMap(genre="jazz", scores=scores)
        path = tmp_path / "significance_jazz.csv"
        grid = export_heatmap(smap, path)
        loaded = np.loadtxt(path, delimiter=",", comments="#")
        np.testing.assert_allclose(loaded, grid, rtol=1e-6)
        text = path.read_text()
        assert "jazz" in text
        assert "clamped" in text

    def test_floor_applies_only_below(self):
        scores = np.array([[[[0.1, 0.9]]]])
        grid = heatmap_grid(SignificanceMap(genre="g", scores=scores))
        np.testing.assert_allclose(grid, [[0.4, 0.9]])
