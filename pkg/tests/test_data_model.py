from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hbprobit.data_model import (
    BrandAttributeMatrix,
    ChoiceOccasion,
    McmcConfig,
    PanelDataset,
    PanelFormatError,
    PriorConfig,
    default_attributes,
    design_row,
    design_tensor,
    read_attributes,
    read_panel,
    validate_panel,
    write_attributes,
    write_panel,
)

from conftest import small_panel


def test_well_formed_panel_has_no_violations(attrs):
    assert validate_panel(small_panel(2, 3), attrs) == []


def test_chosen_out_of_range(attrs):
    panel = small_panel(2, 3)
    chosen = panel.chosen.copy()
    chosen[4] = 6
    bad = PanelDataset(panel.household, panel.occasion, chosen, panel.prices, panel.displays, panel.household_ids)
    problems = validate_panel(bad, attrs)
    assert len(problems) == 1 and problems[0].startswith("chosen out of range")


def test_brand_count_mismatch(attrs):
    five = BrandAttributeMatrix(attrs.values[:5])
    problems = validate_panel(small_panel(2, 3), five)
    assert any(p.startswith("brand count mismatch") for p in problems)


def test_other_invariants(attrs):
    panel = small_panel(2, 3)
    prices = panel.prices.copy()
    prices[0, 0] = -1.0
    displays = panel.displays.copy()
    displays[1, 1] = 0.5
    bad = PanelDataset(panel.household, panel.occasion, panel.chosen, prices, displays, panel.household_ids)
    problems = validate_panel(bad, attrs)
    assert "non-positive price" in problems
    assert "display indicator outside {0,1}" in problems

    vals = attrs.values.copy()
    vals[:, 2] = 2.0  # bleach no longer 0/1 and collinear with the constant
    problems = validate_panel(panel, BrandAttributeMatrix(vals))
    assert any("bleach" in p for p in problems)
    assert "attribute matrix is rank deficient" in problems


def test_household_without_occasions(attrs):
    panel = small_panel(2, 3)
    padded = PanelDataset(panel.household, panel.occasion, panel.chosen, panel.prices, panel.displays,
                          panel.household_ids + ("ghost",))
    assert any(p.startswith("households without occasions") for p in validate_panel(padded, attrs))


def test_design_row():
    occ = ChoiceOccasion("h", 0, prices=np.array([0.5, 0.7, 0.9]), displays=np.array([1.0, 0.0, 0.0]), chosen=0)
    assert design_row(occ, 0) == (1.0, 0.5)
    assert design_row(occ, 1) == (0.0, 0.7)
    with pytest.raises(IndexError):
        design_row(occ, 3)


def test_design_tensor_matches_rows():
    panel = small_panel(3, 4)
    X = design_tensor(panel)
    assert X.shape == (12, 6, 2)
    occ = panel.occasion_at(5)
    for j in range(6):
        assert tuple(X[5, j]) == design_row(occ, j)
    assert X[..., 1].max() == 1.0  # prices rescaled by the panel maximum


def test_from_records_canonicalizes_by_first_appearance():
    prices = np.full((4, 2), 10.0)
    displays = np.zeros((4, 2))
    panel = PanelDataset.from_records(["b", "a", "b", "a"], [1, 0, 0, 1], [0, 1, 1, 0], prices, displays)
    assert panel.household_ids == ("b", "a")
    assert panel.household.tolist() == [0, 0, 1, 1]
    assert panel.occasion.tolist() == [0, 1, 0, 1]
    assert panel.chosen.tolist() == [1, 0, 1, 0]
    assert panel.occasions_per_household().tolist() == [2, 2]


def test_panel_arrays_are_read_only():
    panel = small_panel()
    with pytest.raises(ValueError):
        panel.prices[0, 0] = 1.0


def test_panel_csv_round_trip(tmp_path):
    panel = small_panel(4, 5, seed=3)
    write_panel(panel, tmp_path / "p.csv")
    assert read_panel(tmp_path / "p.csv") == panel


@settings(max_examples=25, deadline=None)
@given(H=st.integers(1, 4), T=st.integers(1, 5), J=st.integers(2, 6), seed=st.integers(0, 10_000))
def test_panel_csv_round_trip_property(tmp_path_factory, H, T, J, seed):
    panel = small_panel(H, T, J, seed)
    path = tmp_path_factory.mktemp("rt") / "p.csv"
    write_panel(panel, path)
    assert read_panel(path) == panel


def test_attribute_csv_round_trip(tmp_path, attrs):
    write_attributes(attrs, tmp_path / "a.csv")
    back = read_attributes(tmp_path / "a.csv")
    assert back == attrs
    assert back.labels == attrs.labels


def test_malformed_panel_csv(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("household_id,occasion,chosen_brand,display_1\nh1,0,1,0\n")
    with pytest.raises(PanelFormatError):
        read_panel(path)


def test_default_attributes():
    attrs = default_attributes()
    assert attrs.values.shape == (6, 6)
    assert np.all(attrs.values[:, 0] == 1.0)
    assert attrs.labels == ("Constant", "S.A.A.", "Bleach", "Package", "g/30l", "net-w")
    assert np.linalg.matrix_rank(attrs.values) == 6


def test_from_physical_prepends_constant():
    phys = np.arange(12.0).reshape(2, 6)[:, :5]
    m = BrandAttributeMatrix.from_physical(phys)
    assert m.values[:, 0].tolist() == [1.0, 1.0]
    assert np.array_equal(m.physical, phys)


def test_config_validation():
    assert McmcConfig().validate() == []
    assert McmcConfig(n_iterations=10, n_burn_in=5, thin=2).n_draws == 2
    assert McmcConfig(n_iterations=10, n_burn_in=10).validate()
    assert McmcConfig(hpd_level=1.5).validate()
    assert PriorConfig().validate() == []
    assert PriorConfig(iw_df_offset=-2.0).validate()
    assert PriorConfig(ig_shape=0.0).validate()
    assert PriorConfig().iw_df(6) == 9.0
