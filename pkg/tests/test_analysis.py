from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mintime.analysis import (derivative_consistency, holder_fit, lipschitz_field,
                              refinement_study, target_interior)
from mintime.eikonal import SolverOptions, solve_min_time, solve_semilagrangian
from mintime.grid import TargetSet, UniformGrid
from mintime.systems import registry_lookup

E = registry_lookup("euclidean2")
G = registry_lookup("grushin")
ACS3 = registry_lookup("acs3")
CUBIC = TargetSet({"kind": "sublevel", "poly": [{"coeff": "-1", "powers": [0, 0, 1]},
                                                {"coeff": "-4", "powers": [0, 3, 0]}]})
GK = TargetSet.ball([0.5, 0], 0.05)
GBOX = ([-0.5, -1], [1.5, 1])


@pytest.fixture(scope="module")
def euclid():
    grid = UniformGrid.from_box([-1, -1], [1, 1], 101)
    return solve_min_time(E, TargetSet.ball([0, 0], 0.2), grid)


@pytest.fixture(scope="module")
def grushin_study():
    return refinement_study(G, GK, UniformGrid.from_box(*GBOX, 51))


def test_euclidean_lipschitz(euclid):
    lf = lipschitz_field(euclid, 2 * euclid.grid.h)
    X = euclid.grid.coords()
    away = (np.hypot(X[0], X[1]) > 0.3) & euclid.interior_mask(2)
    assert np.all(np.abs(lf.values[away] - 1) <= 0.1)
    assert np.all(np.isnan(lf.values[target_interior(euclid.target)]))
    assert np.nanmin(lf.values) >= 0


def test_lipschitz_radius_check(euclid):
    with pytest.raises(ValueError):
        lipschitz_field(euclid, 1.5 * euclid.grid.h)


def test_lipschitz_csv(tmp_path, euclid):
    lipschitz_field(euclid, 0.05).to_csv(tmp_path / "L.csv")
    assert (tmp_path / "L.csv").read_text().startswith("x1,x2,L\n")


def test_grushin_lipschitz_stable():
    maxima = []
    for cells in (51, 101, 201):
        vf = solve_min_time(G, GK, UniformGrid.from_box(*GBOX, cells))
        L = lipschitz_field(vf, 2 * vf.grid.h).values
        maxima.append(np.nanmax(L[vf.interior_mask(2)]))
    assert np.all(np.isfinite(maxima))
    assert maxima[2] / maxima[1] < 1.4 and maxima[1] / maxima[0] < 1.4


def test_cubic_target_lipschitz_blowup():
    # T ~ s - sign(x3)|x3|^(1/3) across {x1 = 0, x3 = 0, x2 < 0}: quotients grow like 2^(2/3)
    near, far = [], []
    for cells in (25, 49, 97):
        g = UniformGrid.from_box([-0.6] * 3, [0.6] * 3, cells)
        L = lipschitz_field(solve_min_time(ACS3, CUBIC, g), 2 * g.h).values
        X = g.coords()
        band = (np.abs(X[0]) <= 0.051) & (np.abs(X[2]) <= 0.051) & (X[1] <= -0.1) & (X[1] >= -0.3)
        off = (np.abs(X[0]) >= 0.3) & (np.abs(X[0]) <= 0.45) & (np.abs(X[1]) <= 0.45) & (np.abs(X[2]) <= 0.45)
        near.append(np.nanmax(L[band]))
        far.append(np.nanmax(L[off]))
    grow_near = np.array(near[1:]) / near[:-1]
    grow_far = np.array(far[1:]) / far[:-1]
    assert np.all(grow_near >= 1.4)
    assert np.all(grow_far < grow_near) and grow_far[1] < grow_far[0]


def test_grushin_refinement_fraction(grushin_study):
    assert grushin_study.fraction < 0.01
    assert len(grushin_study.grids) == 3
    assert grushin_study.grids[2].h == pytest.approx(grushin_study.grids[0].h / 4)


def test_euclidean_refinement_empty():
    rep = refinement_study(E, TargetSet.ball([0, 0], 0.2),
                           UniformGrid.from_box([-1, -1], [1, 1], 51), gamma=1.3)
    assert not rep.flagged.any()


def test_refinement_gamma_check():
    with pytest.raises(ValueError):
        refinement_study(E, TargetSet.ball([0, 0], 0.2),
                         UniformGrid.from_box([-1, -1], [1, 1], 11), gamma=1.0)


@given(st.floats(1.01, 2.0), st.floats(1.01, 2.0))
def test_flagged_nesting(grushin_study, a, b):
    lo, hi = sorted((a, b))
    assert np.all(grushin_study.flagged_at(hi) <= grushin_study.flagged_at(lo))
    assert np.all(grushin_study.flagged_at(lo) <= grushin_study.considered)


def test_cubic_refinement_flags_singular_plane():
    rep = refinement_study(ACS3, CUBIC, UniformGrid.from_box([-0.6] * 3, [0.6] * 3, 25))
    h = rep.grids[0].h
    assert rep.flagged.any()
    assert np.all(np.abs(rep.flagged_points[:, 2]) <= 3 * h)
    assert rep.step_fractions[1] < rep.step_fractions[0]


def test_derivative_consistency_off_flags(grushin_study):
    fields = [solve_min_time(G, GK, g) for g in grushin_study.grids[:2]]
    unflagged = np.argwhere(grushin_study.considered & ~grushin_study.flagged)
    rng = np.random.default_rng(0)
    cells = unflagged[rng.choice(len(unflagged), 300, replace=False)]
    assert derivative_consistency(fields[0], fields[1], cells) >= 0.95


def _point_field(system, lo, hi, cells, opts=None):
    grid = UniformGrid.from_box(lo, hi, cells)
    return solve_semilagrangian(system, TargetSet.ball([0.0] * len(lo), 0.0), grid, opts)


def test_holder_euclidean():
    vf = _point_field(E, [-1, -1], [1, 1], 101)
    fit = holder_fit(vf, [0, 0], [[1, 0], [1, 1], [-0.3, 1]])
    assert all(a == pytest.approx(1, abs=0.05) for a in fit.alphas)
    assert fit.c1 > 0 and fit.c2 > 0


def test_holder_grushin():
    vf = _point_field(G, [-1, -1], [1, 1], 101)
    fit = holder_fit(vf, [0, 0], [[0, 1], [1, 0]], cc_radii=[0.3])
    assert fit.alphas[0] == pytest.approx(0.5, abs=0.1)
    assert 0.9 <= fit.alphas[1] <= 1.1  # f1 spans the x1 axis at the centre
    assert fit.alpha == min(fit.alphas) and 0 < fit.alpha <= 1
    assert fit.c1 > 0
    ball = fit.cc_balls["0.3"]
    assert ball["bounded_in_domain"] and ball["interior_cells"] > 0


def test_holder_martinet():
    vf = _point_field(registry_lookup("martinet"), [-1, -1, -0.4], [1, 1, 0.4], 81,
                      SolverOptions(n_controls=16, tol_converge=1e-6))
    fit = holder_fit(vf, [0, 0, 0], [[0, 0, 1], [1, 0, 0], [0, 1, 0]])
    assert fit.alphas[0] == pytest.approx(1 / 3, abs=0.1)
    assert all(0.9 <= a <= 1.1 for a in fit.alphas[1:])


def test_holder_insufficient_radii():
    vf = _point_field(E, [-0.2, -0.2], [0.2, 0.2], 11)
    with pytest.raises(ValueError, match="insufficient radii"):
        holder_fit(vf, [0, 0], [[1, 0]])
