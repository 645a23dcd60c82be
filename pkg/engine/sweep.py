"""
QSDA: Grid Sweeps
Group metrics over (N, q) grids in long format, one row per cell.
"""

import sys
import os
from concurrent.futures import ProcessPoolExecutor

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from config import TAIL_TOL, WORKERS
from engine.decision_profile import DecisionProfile, GroupSpec
from engine.aggregation import aggregate
from utils.errors import SdaError
from utils.log import get_logger

log = get_logger("engine.sweep")

SWEEP_RULES = ("fastest", "majority", "all-q")


def grid_cells(n_grid, rule: str) -> list[tuple[int, int]]:
    """Ordered (N, q) cells for the fastest rule, the majority rule or every q."""
    if rule not in SWEEP_RULES:
        raise ValueError(f"rule must be one of {SWEEP_RULES}, got {rule!r}")
    cells = []
    for n in n_grid:
        if rule == "fastest":
            cells.append((n, 1))
        elif rule == "majority":
            cells.append((n, GroupSpec.majority(n).q))
        else:
            cells.extend((n, q) for q in range(1, n + 1))
    return cells


def _sweep_cell(profile: DecisionProfile, n: int, q: int, hypothesis: int,
                horizon: int | None, tail_tol: float) -> dict:
    row = {"N": n, "q": q, "p_c": None, "p_w": None, "p_nd": None, "e_t": None, "error": ""}
    try:
        outcome = aggregate(profile, n, q, horizon, hypothesis, tail_tol)
    except SdaError as e:
        log.warning(f"[SWEEP] N={n} q={q}: {e}")
        row["error"] = str(e)
        return row
    row.update(p_c=outcome.p_c, p_w=outcome.p_w, p_nd=outcome.p_nd_group, e_t=outcome.expected_T)
    return row


def sweep(profile: DecisionProfile, n_grid, rule: str = "all-q", hypothesis: int = 1,
          horizon: int | None = None, tail_tol: float = TAIL_TOL, workers: int = WORKERS) -> list[dict]:
    """
    Aggregate every cell of the grid.

    Returns:
        Rows {N, q, p_c, p_w, p_nd, e_t, error} in grid order, whatever the
        completion order of the workers.
    """
    cells = grid_cells(n_grid, rule)
    log.info(f"[SWEEP] {len(cells)} cells, rule={rule}, workers={workers}")
    if workers > 1 and len(cells) > 1:
        count = len(cells)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_sweep_cell, [profile] * count, [n for n, _ in cells],
                                 [q for _, q in cells], [hypothesis] * count,
                                 [horizon] * count, [tail_tol] * count))
    return [_sweep_cell(profile, n, q, hypothesis, horizon, tail_tol) for n, q in cells]
