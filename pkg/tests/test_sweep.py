import math

import pytest

from engine.aggregation import aggregate
from engine.sweep import grid_cells, sweep


def test_grid_cells_per_rule():
    assert grid_cells([1, 3, 5], "fastest") == [(1, 1), (3, 1), (5, 1)]
    assert grid_cells([1, 3, 5], "majority") == [(1, 1), (3, 2), (5, 3)]
    assert grid_cells([3], "all-q") == [(3, 1), (3, 2), (3, 3)]
    with pytest.raises(ValueError):
        grid_cells([3], "median")


def test_single_cell_grid(wald_gaussian_profile):
    rows = sweep(wald_gaussian_profile, [7], rule="majority")
    assert len(rows) == 1
    expected = aggregate(wald_gaussian_profile, 7, 4)
    assert rows[0]["p_c"] == expected.p_c
    assert rows[0]["e_t"] == expected.expected_T
    assert rows[0]["error"] == ""


def test_rows_follow_grid_order(wald_gaussian_profile):
    rows = sweep(wald_gaussian_profile, [5, 3], rule="all-q", workers=2)
    assert [(r["N"], r["q"]) for r in rows] == grid_cells([5, 3], "all-q")
    assert all(r["error"] == "" for r in rows)


def test_failed_cell_keeps_its_row(wald_gaussian_profile):
    rows = sweep(wald_gaussian_profile, [0, 3], rule="fastest")
    assert rows[0]["error"]
    assert rows[0]["p_c"] is None
    assert rows[1]["error"] == ""


@pytest.mark.slow
def test_fastest_sweep_trend(wald_gaussian_profile):
    rows = sweep(wald_gaussian_profile, range(1, 62, 2), rule="fastest")
    assert rows[-1]["p_w"] < rows[0]["p_w"]
    assert all(math.isfinite(r["e_t"]) for r in rows)
    assert rows[-1]["e_t"] < rows[0]["e_t"]
