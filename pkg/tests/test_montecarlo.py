import json
import math

import numpy as np
import pytest

from indexclr.clr import ClrConfig
from indexclr.errors import InvalidConfigError
from indexclr.montecarlo import (
    STATUS_ERROR,
    STATUS_OK,
    STATUS_TIMEOUT,
    CellResult,
    ExperimentCell,
    Report,
    preset_cells,
    rejection_frequency,
    run_table,
    default_kernel,
)

SMALL = ClrConfig(B=100, grid_size=40, seed=3)


def test_table1_defaults():
    k = default_kernel("index", 3, 250)
    assert (k.scale, k.rate, k.order_p) == (3.05, 0.2, 2)
    k = default_kernel("full", 3, 250)
    assert (k.scale, k.rate, k.order_p) == (2.65, 11 / 70, 2)
    k = default_kernel("full", 10, 500)
    assert (k.scale, k.rate, k.order_p) == (8.0, 1 / 21, 6)
    assert default_kernel("full", 4, 1000).rate == pytest.approx(1 / 9)
    assert default_kernel("full", 5, 1000).order_p == 4
    # untabulated n snaps to the nearest size on a log scale
    assert default_kernel("index", 3, 300).scale == 3.05
    assert default_kernel("index", 3, 800).scale == 2.0
    with pytest.raises(InvalidConfigError):
        default_kernel("index", 7, 250)
    with pytest.raises(InvalidConfigError):
        default_kernel("other", 3, 250)


def test_cell_validation():
    with pytest.raises(InvalidConfigError):
        ExperimentCell("index", 1, 250, 0.0)
    with pytest.raises(InvalidConfigError):
        ExperimentCell("index", 3, 250, 0.0, reps=0)
    with pytest.raises(InvalidConfigError):
        ExperimentCell("both", 3, 250, 0.0)
    c = ExperimentCell("index", 3, 250, -1.0)
    assert c.b.tolist() == [1.0, -1.0, 0.0] and not c.null
    assert ExperimentCell("full", 3, 250, 0.5).null


def test_se_matches_flags():
    res = rejection_frequency(ExperimentCell("index", 3, 250, -1.0, reps=6, clr=SMALL))
    assert res.status == STATUS_OK and res.reps_done == 6
    p = np.mean(res.flags)
    assert res.frequency == p
    assert res.se == pytest.approx(math.sqrt(p * (1 - p) / 6))
    assert 0 <= res.frequency <= 1


def test_frequency_independent_of_threads():
    cells = [ExperimentCell(a, 3, 250, -1.0, reps=4, clr=SMALL) for a in ("index", "full")]
    a = run_table(cells, threads=1)
    b = run_table(cells, threads=2)
    assert a.to_json() == b.to_json()
    assert [r["d"] for r in a.ratios()] == [3]


def test_approaches_share_data_stream():
    from indexclr.dgp import simulate_section5
    from indexclr.parallel import DATA, substream

    # both approaches regenerate the same dataset from (seed, rep, DATA)
    x1 = simulate_section5(50, 3, substream(3, 0, DATA)).X
    x2 = simulate_section5(50, 3, substream(3, 0, DATA)).X
    assert np.array_equal(x1, x2)


def test_empty_table():
    rep = run_table([])
    assert rep.results == [] and rep.ratios() == []
    assert json.loads(rep.to_json())["cells"] == []


def test_timeout_status():
    res = rejection_frequency(ExperimentCell("index", 3, 250, 0.0, reps=50, clr=SMALL, time_budget=1e-9))
    assert res.status == STATUS_TIMEOUT
    assert res.reps_done < 50


def test_failed_cell_recorded_and_run_continues():
    bad = ExperimentCell("index", 7, 250, 0.0, reps=2, clr=SMALL)
    good = ExperimentCell("index", 3, 250, 0.0, reps=2, clr=SMALL)
    rep = run_table([bad, good])
    assert rep.results[0].status == STATUS_ERROR and "d=7" in rep.results[0].message
    assert rep.results[1].status == STATUS_OK and rep.results[1].reps_done == 2


def test_report_json_has_no_timing():
    rep = run_table([ExperimentCell("index", 3, 250, 0.0, reps=2, clr=SMALL)])
    d = json.loads(rep.to_json())
    assert "wall_time" not in d["cells"][0]
    assert "wall_time" in rep.to_dict(timing=True)["cells"][0]
    assert "P_hat" in rep.table()


def test_ratio_table():
    cells = [ExperimentCell(a, 3, 250, -1.0, reps=1) for a in ("index", "full")]
    rep = Report([CellResult(cells[0], [True, True]), CellResult(cells[1], [True, False])])
    assert rep.ratios() == [{"d": 3, "n": 250, "b2": -1.0, "index": 1.0, "full": 0.5, "ratio": 2.0}]


def test_presets():
    t2 = preset_cells("table2-desk")
    assert len(t2) == 48
    assert {c.b2 for c in t2} == {0.0, 0.5}
    assert all(c.reps == 200 and c.clr.B == 1000 and c.clr.grid_size == 400 for c in t2)
    t3 = preset_cells("table3-fullscale", seed=4)
    assert len(t3) == 24 and all(c.b2 == -1.0 and c.clr.B == 4000 and c.reps == 1000 for c in t3)
    assert all(c.clr.seed == 4 for c in t3)
    few = preset_cells("table3-desk", overrides={"d": [10], "n": [500], "reps": 5})
    assert [(c.approach, c.d, c.n, c.reps) for c in few] == [("index", 10, 500, 5), ("full", 10, 500, 5)]
    for bad in ("table4-desk", "table2", "table2-huge"):
        with pytest.raises(InvalidConfigError):
            preset_cells(bad)
    with pytest.raises(InvalidConfigError):
        preset_cells("table2-desk", overrides={"colour": 1})


def test_failed_cell_serialises():
    rep = run_table([ExperimentCell("full", 7, 250, 0.0, reps=2, clr=SMALL)])
    d = json.loads(rep.to_json())
    assert d["cells"][0]["status"] == "ERROR" and d["cells"][0]["cell"]["kernel"] is None
