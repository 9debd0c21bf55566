import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trigan.data import (
    DatasetFormatError,
    GaussianMixtureSpec,
    MixtureComponent,
    MixtureSpecError,
    PairDataset,
    default_mixture_spec,
    load_dataset,
    mixture_pdf,
    mixture_pdf_many,
    mixture_spec_from_dict,
    mixture_spec_to_dict,
    sample_mixture,
    save_dataset,
    split_semi_supervised,
)


class TestMixtureSpec:
    def test_default_spec_layout(self):
        spec = default_mixture_spec()
        assert spec.num_components == 4
        assert [c.weight for c in spec.components] == [0.25] * 4
        assert spec.components[0].mean == (0.0, 1.5)
        assert spec.components[1].mean == (-1.5, 0.0)
        assert spec.components[2].mean == (1.5, 0.0)
        assert spec.components[3].mean == (0.0, -1.5)
        assert spec.components[0].cov == ((3.0, 0.0), (0.0, 0.025))
        assert spec.components[1].cov == ((0.025, 0.0), (0.0, 3.0))

    def test_rejects_bad_weights(self):
        comp = MixtureComponent(0.5, (0, 0), ((1, 0), (0, 1)))
        with pytest.raises(MixtureSpecError, match="sum to 1"):
            GaussianMixtureSpec((comp,))

    def test_rejects_non_positive_definite(self):
        with pytest.raises(MixtureSpecError, match="positive-definite"):
            GaussianMixtureSpec(
                (MixtureComponent(1.0, (0, 0), ((1, 2), (2, 1))),)
            )

    def test_dict_round_trip(self):
        spec = default_mixture_spec()
        assert mixture_spec_from_dict(mixture_spec_to_dict(spec)) == spec


class TestSampling:
    def test_counts_and_components(self):
        ds = sample_mixture(default_mixture_spec(), 5000, seed=1)
        assert len(ds) == 20000
        assert np.array_equal(np.bincount(ds.component), [5000] * 4)
        assert ds.num_paired == 20000

    def test_single_draw_per_component(self):
        ds = sample_mixture(default_mixture_spec(), 1, seed=1)
        assert len(ds) == 4
        assert sorted(ds.component.tolist()) == [0, 1, 2, 3]

    def test_grand_mean_near_origin(self):
        ds = sample_mixture(default_mixture_spec(), 5000, seed=2)
        # pooled per-axis variance of the mixture is 2.6375
        bound = 3.0 * math.sqrt(2.6375 / 20000)
        assert np.all(np.abs(ds.xy.mean(axis=0)) < bound)

    def test_component_sample_covariance(self):
        ds = sample_mixture(default_mixture_spec(), 5000, seed=3)
        rows = ds.xy[ds.component == 0]
        cov = np.cov(rows.T)
        assert cov[0, 0] == pytest.approx(3.0, rel=0.10)
        assert cov[1, 1] == pytest.approx(0.025, rel=0.10)
        assert abs(cov[0, 1]) < 0.1 * math.sqrt(3.0 * 0.025)

    def test_deterministic_under_seed(self):
        a = sample_mixture(default_mixture_spec(), 100, seed=9)
        b = sample_mixture(default_mixture_spec(), 100, seed=9)
        assert np.array_equal(a.xy, b.xy)

    def test_rejects_zero_draws(self):
        with pytest.raises(MixtureSpecError, match="n_per_component"):
            sample_mixture(default_mixture_spec(), 0, seed=0)


class TestPdf:
    def test_normalization_on_wide_grid(self):
        spec = default_mixture_spec()
        res = 512
        xs = np.linspace(-8, 8, res, endpoint=False) + 8.0 / res
        gx, gy = np.meshgrid(xs, xs, indexing="ij")
        values = mixture_pdf_many(spec, np.column_stack([gx.ravel(), gy.ravel()]))
        integral = values.sum() * (16.0 / res) ** 2
        assert integral == pytest.approx(1.0, abs=1e-2)

    def test_point_reflection_symmetry(self):
        spec = default_mixture_spec()
        rng = np.random.default_rng(0)
        pts = rng.uniform(-4, 4, size=(50, 2))
        assert np.allclose(
            mixture_pdf_many(spec, pts), mixture_pdf_many(spec, -pts), rtol=1e-12
        )

    def test_value_matches_independent_scalar_sum(self):
        spec = default_mixture_spec()
        point = (0.0, 1.5)

        def gauss(px, py, mx, my, vx, vy):
            # axis-aligned bivariate normal written out long-hand
            norm = 1.0 / (2.0 * math.pi * math.sqrt(vx * vy))
            q = (px - mx) ** 2 / vx + (py - my) ** 2 / vy
            return norm * math.exp(-0.5 * q)

        expected = 0.25 * (
            gauss(0.0, 1.5, 0.0, 1.5, 3.0, 0.025)
            + gauss(0.0, 1.5, -1.5, 0.0, 0.025, 3.0)
            + gauss(0.0, 1.5, 1.5, 0.0, 0.025, 3.0)
            + gauss(0.0, 1.5, 0.0, -1.5, 3.0, 0.025)
        )
        assert mixture_pdf(spec, point) == pytest.approx(expected, rel=1e-12)


class TestSplit:
    def test_full_supervision(self):
        ds = sample_mixture(default_mixture_spec(), 100, seed=0)
        out = split_semi_supervised(ds, 1.0, seed=1)
        assert out.num_paired == 400

    def test_ten_percent_stratified(self):
        ds = sample_mixture(default_mixture_spec(), 5000, seed=0)
        out = split_semi_supervised(ds, 0.1, seed=1)
        assert out.num_paired == 2000
        for comp in range(4):
            assert out.paired[out.component == comp].sum() == 500

    def test_zero_fraction(self):
        ds = sample_mixture(default_mixture_spec(), 50, seed=0)
        out = split_semi_supervised(ds, 0.0, seed=1)
        assert out.num_paired == 0

    def test_fraction_out_of_range(self):
        ds = sample_mixture(default_mixture_spec(), 10, seed=0)
        with pytest.raises(ValueError, match="fraction"):
            split_semi_supervised(ds, 1.5, seed=1)

    @given(fraction=st.floats(0.0, 1.0), n=st.integers(5, 40))
    @settings(max_examples=40, deadline=None)
    def test_counts_differ_by_at_most_one(self, fraction, n):
        ds = sample_mixture(default_mixture_spec(), n, seed=4)
        out = split_semi_supervised(ds, fraction, seed=5)
        per_comp = [int(out.paired[out.component == c].sum()) for c in range(4)]
        assert out.num_paired == round(fraction * len(ds))
        assert max(per_comp) - min(per_comp) <= 1
        # remainder goes to the lowest component indices
        assert per_comp == sorted(per_comp, reverse=True)

    def test_deterministic(self):
        ds = sample_mixture(default_mixture_spec(), 100, seed=0)
        a = split_semi_supervised(ds, 0.3, seed=7)
        b = split_semi_supervised(ds, 0.3, seed=7)
        assert np.array_equal(a.paired, b.paired)


class TestCsvIO:
    def test_round_trip_value_exact(self, tmp_path):
        ds = sample_mixture(default_mixture_spec(), 25, seed=6)
        ds = split_semi_supervised(ds, 0.5, seed=6)
        path = tmp_path / "data.csv"
        save_dataset(ds, path)
        loaded = load_dataset(path)
        assert np.array_equal(ds.xy, loaded.xy)
        assert np.array_equal(ds.component, loaded.component)
        assert np.array_equal(ds.paired, loaded.paired)

    def test_header_present(self, tmp_path):
        ds = sample_mixture(default_mixture_spec(), 1, seed=0)
        path = tmp_path / "data.csv"
        save_dataset(ds, path)
        assert path.read_text().splitlines()[0] == "x,y,component,paired"

    def test_non_numeric_field_names_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("x,y,component,paired\n1.0,2.0,0,1\noops,2.0,0,1\n")
        with pytest.raises(DatasetFormatError, match=":3:"):
            load_dataset(path)

    def test_missing_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("1.0,2.0,0,1\n")
        with pytest.raises(DatasetFormatError, match="header"):
            load_dataset(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(DatasetFormatError, match="empty"):
            load_dataset(path)

    def test_header_only(self, tmp_path):
        path = tmp_path / "no_rows.csv"
        path.write_text("x,y,component,paired\n")
        with pytest.raises(DatasetFormatError, match="no data rows"):
            load_dataset(path)

    def test_wrong_field_count_names_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("x,y,component,paired\n1.0,2.0,0\n")
        with pytest.raises(DatasetFormatError, match=":2:"):
            load_dataset(path)


class TestSamplerOracleAgreement:
    def test_total_variation_against_grid_density(self):
        from trigan.evaluate import density_grid, histogram2d

        spec = default_mixture_spec()
        ds = sample_mixture(spec, 250_000, seed=12)  # one million rows
        hist = histogram2d(ds.xy, (-5, 5), (-5, 5), 64)
        oracle = density_grid(
            lambda pts: mixture_pdf_many(spec, pts), (-5, 5), (-5, 5), 64
        )
        tv = 0.5 * np.abs(hist.mass - oracle.mass).sum()
        assert tv < 0.02
