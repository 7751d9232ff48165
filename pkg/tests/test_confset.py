import numpy as np
import pytest

from indexclr.clr import ClrConfig
from indexclr.confset import ConfidenceSet, build_eval_grid, build_param_grid, invert
from indexclr.dgp import distance_to_theta, simulate_section5
from indexclr.errors import InvalidConfigError, InvalidDataError
from indexclr.kernels import KernelConfig
from indexclr.models import Dataset, ParamSpace, make_binary_model, make_multinomial_model, make_ordered_model
from indexclr.montecarlo import default_kernel


def _data(n=250, d=3, seed=0):
    return simulate_section5(n, d, np.random.default_rng(seed)), make_binary_model(0.5, d)


def test_eval_grid_examples():
    data, model = _data(50)
    g1 = build_eval_grid(data, model, 1, np.random.default_rng(0))
    assert len(g1) == 1 and model.param_space.contains(g1.gamma[0])
    g = build_eval_grid(data, model, 40, np.random.default_rng(1))
    assert np.array_equal(g.x, data.X[g.rows])
    assert all(c is None for c in g.contrasts)
    assert all(model.param_space.contains(gm) for gm in g.gamma)
    assert build_eval_grid(data, model, 5, np.random.default_rng(1), "full").gamma is None
    with pytest.raises(InvalidConfigError):
        build_eval_grid(data, model, 0, np.random.default_rng(0))


def test_eval_grid_contrasts_cover_model():
    m = make_multinomial_model(3, 1)
    data = Dataset(np.random.default_rng(0).normal(size=(30, 3)), np.random.default_rng(1).integers(1, 4, 30))
    g = build_eval_grid(data, m, 200, np.random.default_rng(2))
    assert set(g.contrasts) == set(m.contrasts)


def test_param_grid_examples():
    space = ParamSpace.box_space(3)
    pts = build_param_grid(space, {"points": [[1, 0, 0], [1, 0.5, 0], [1, -1, 0]]})
    assert len(pts) == 3
    assert len(build_param_grid(space, {"lattice": [3, 3]})) == 9
    dup = build_param_grid(space, {"points": [[1, 0, 0], [1, 0.5, 0], [1, 0, 0]]})
    assert dup.tolist() == [[1, 0, 0], [1, 0.5, 0]]
    for bad in ({}, {"points": []}, {"lattice": [3]}, {"lattice": [0, 2]}, {"points": [[1, 2, 0]]}):
        with pytest.raises(InvalidConfigError):
            build_param_grid(space, bad)


def test_param_grid_lattice_respects_threshold_order():
    space = make_ordered_model(2, 1).param_space
    pts = build_param_grid(space, {"lattice": [3, 3]})
    assert all(p[1] < p[2] for p in pts)
    assert len(pts) == 3


def test_invert_shapes_and_roundtrip():
    data, model = _data(200)
    grid = build_param_grid(model.param_space, {"lattice": [3, 3]})
    cs = invert(data, model, grid, default_kernel("index", 3, 200), ClrConfig(B=200, grid_size=100, seed=4))
    assert len(cs.outcomes) == 9
    assert np.array_equal(cs.accepted, [not o.reject for o in cs.outcomes])
    back = ConfidenceSet.from_json(cs.to_json())
    assert back.to_json() == cs.to_json()
    assert np.array_equal(back.param_grid, cs.param_grid)
    assert len(cs.rows()) == 9 and "accepted" in cs.rows()[0]
    assert cs.config["kernel"]["leave_one_out"] is False


def test_invert_alpha_monotone():
    data, model = _data(250, seed=5)
    grid = build_param_grid(model.param_space, {"lattice": [5, 3]})
    kcfg = default_kernel("index", 3, 250)
    tight = invert(data, model, grid, kcfg, ClrConfig(alpha=0.05, B=300, grid_size=150, seed=2))
    loose = invert(data, model, grid, kcfg, ClrConfig(alpha=0.5, B=300, grid_size=150, seed=2))
    # accepted at alpha = 0.5 implies accepted at alpha = 0.05
    assert np.all(tight.accepted >= loose.accepted)


def test_invert_independent_of_threads():
    data, model = _data(150)
    grid = build_param_grid(model.param_space, {"lattice": [2, 2]})
    kcfg, ccfg = default_kernel("index", 3, 150), ClrConfig(B=200, grid_size=60, seed=8)
    a = invert(data, model, grid, kcfg, ccfg, threads=1)
    b = invert(data, model, grid, kcfg, ccfg, threads=2)
    assert a.to_json() == b.to_json()


def test_invert_empty_dataset():
    model = make_binary_model(0.5, 3)
    with pytest.raises(InvalidDataError):
        invert(Dataset(np.zeros((0, 3)), np.zeros(0)), model, [[1, 0, 0]], KernelConfig(1.0), ClrConfig())


@pytest.mark.slow
def test_truth_accepted_at_n500():
    accepted = 0
    runs = 200
    kcfg = default_kernel("index", 3, 500)
    for seed in range(runs):
        data, model = _data(500, seed=1000 + seed)
        cs = invert(data, model, [[1, 0, 0]], kcfg, ClrConfig(B=1000, grid_size=400, seed=seed))
        accepted += int(cs.accepted[0])
    assert accepted >= 0.9 * runs


@pytest.mark.slow
def test_consistency_smoke_n2000():
    # accepted lattice points sit within one lattice step of the identified set
    data, model = _data(2000, seed=77)
    grid = build_param_grid(model.param_space, {"lattice": [3, 3]})
    cs = invert(data, model, grid, default_kernel("index", 3, 2000), ClrConfig(B=200, grid_size=60, seed=1))
    step = 1.0
    assert cs.accepted.any()
    for b in cs.accepted_points():
        assert distance_to_theta(b) <= step + 1e-12
