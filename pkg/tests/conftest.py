import json

import numpy as np
import pytest

from stlmon.feasible import compute_feasible_sets
from stlmon.gridset import GridGeometry
from stlmon.reach import ControlGrid, ReachConfig, Scheme
from stlmon.stl import parse_formula, segment
from stlmon.system import load_system, read_text

FIG2 = [3, 3.28, 3.6, 4.1, 3.1, 3.4, 2.7, 2.89, 3.13, 3.46, 3.9, 3.2]
FIG3 = [(1.2, 1), (2, 1.8), (1.9, 2.7), (2.8, 3.5), (3.7, 4.3), (4.6, 4), (5.5, 4.7), (6.4, 4)]

CASE1_TEXT = "(x1 in [0,4]) U[1,3] (x1 in [3,5]) & F[6,9] (x1 in [1,3]) & G[12,15] (x1 in [0,1])"
COARSE_TEXT = "F[0,2] (x1 in [1,3]) & G[3,4] (x1 in [0,1])"


def grid_setup(name):
    doc = json.loads(read_text(name))
    cfg = ReachConfig(ControlGrid(doc["control_samples"]), Scheme(doc["scheme"]), doc["epsilon"])
    return doc["cells"], cfg


@pytest.fixture(scope="session")
def case1_model():
    return load_system("case1.json")


@pytest.fixture(scope="session")
def case2_model():
    return load_system("case2.json")


@pytest.fixture(scope="session")
def case1_sf(case1_model):
    return segment(parse_formula(read_text("case1.stl"), 1), case1_model.state_bounds.tolist())


@pytest.fixture(scope="session")
def case2_sf(case2_model):
    return segment(parse_formula(read_text("case2.stl"), 2), case2_model.state_bounds.tolist())


@pytest.fixture(scope="session")
def case1_grid(case1_model):
    cells, _ = grid_setup("case1_grid.json")
    return GridGeometry(case1_model.state_bounds, cells)


@pytest.fixture(scope="session")
def case1_fs(case1_model, case1_sf, case1_grid):
    _, cfg = grid_setup("case1_grid.json")
    return compute_feasible_sets(case1_sf, case1_model, case1_grid, cfg)


@pytest.fixture(scope="session")
def case2_fs(case2_model, case2_sf):
    cells, cfg = grid_setup("case2_grid.json")
    g = GridGeometry(case2_model.state_bounds, cells)
    return compute_feasible_sets(case2_sf, case2_model, g, cfg)


@pytest.fixture(scope="session")
def coarse():
    """Truncated Case I: 25 cells, 5 controls, center scheme."""
    model = load_system("case1.json")
    sf = segment(parse_formula(COARSE_TEXT, 1), model.state_bounds.tolist())
    cells, cfg = grid_setup("coarse_grid.json")
    g = GridGeometry(model.state_bounds, cells)
    return model, sf, g, cfg, compute_feasible_sets(sf, model, g, cfg)


def quadratic_root(c):
    """Positive x with 0.2 x^2 + 0.16 x = c."""
    return (-0.16 + np.sqrt(0.0256 + 0.8 * c)) / 0.4
