import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from leafout.errors import DomainError
from leafout.structure import (
    CreaseClass, FoldState, OrigamiSpec, build_leafout, default_psi_grid, energy_landscape,
    fold_energy, fold_energy_rate, psi_limits, solve_fold_state, solve_fold_states,
    transition_force,
)
from oracles import LoopClosureOracle, axis_seed, rotation_symmetry_error


@pytest.fixture(scope="module")
def four():
    spec = OrigamiSpec()
    return spec, build_leafout(spec)


def test_alpha_is_pi_over_n():
    assert OrigamiSpec(n_cells=4).alpha == pytest.approx(math.pi / 4)
    for n in range(3, 9):
        assert OrigamiSpec(n_cells=n).alpha * n == pytest.approx(math.pi, abs=1e-15)


@pytest.mark.parametrize("bad", [2, 9, 0])
def test_rejects_bad_cell_count(bad):
    with pytest.raises(DomainError):
        OrigamiSpec(n_cells=bad)


def test_rejects_mv_conflict():
    spec = OrigamiSpec()
    with pytest.raises(DomainError):
        spec.with_rest_angles({"main": math.radians(30)})
    with pytest.raises(DomainError):
        spec.with_stiffness(0.0)


def test_crease_counts(four):
    # counted by hand on the constructed 4-cell pattern: 4 main, 4 boundary,
    # 3 sub creases per cell
    _, pat = four
    assert pat.crease_counts() == {"main": 4, "boundary": 4, "sub": 12}


@pytest.mark.parametrize("n", range(3, 9))
def test_pattern_invariants(n):
    spec = OrigamiSpec(n_cells=n)
    pat = build_leafout(spec)
    counts = pat.crease_counts()
    assert counts["main"] == n and counts["boundary"] == n and counts["sub"] % n == 0
    # angular spans of faces at O close the disk
    span = 0.0
    for f in pat.faces:
        if 0 in f:
            i = f.index(0)
            a, b = pat.vertices[f[(i + 1) % 3]], pat.vertices[f[(i + 2) % 3]]
            span += math.atan2(a[0] * b[1] - a[1] * b[0], a @ b)
    assert span == pytest.approx(2 * math.pi, abs=1e-12)
    # every crease is shared by two faces, perimeter edges by one
    use = {}
    for f in pat.faces:
        for i in range(3):
            e = tuple(sorted((f[i], f[(i + 1) % 3])))
            use[e] = use.get(e, 0) + 1
    crease_edges = {tuple(sorted((c.a, c.b))) for c in pat.creases}
    for e, k in use.items():
        assert k == (2 if e in crease_edges else 1)
    assert crease_edges <= set(use)
    # cells congruent under rotation by 2*alpha
    R = np.array([[math.cos(2 * spec.alpha), -math.sin(2 * spec.alpha)],
                  [math.sin(2 * spec.alpha), math.cos(2 * spec.alpha)]])
    for kind in "MSQ":
        for k in range(n):
            p0 = pat.vertices[pat.index(kind, k)]
            p1 = pat.vertices[pat.index(kind, k + 1)]
            assert np.allclose(R @ p0, p1, atol=1e-15)


def test_flat_state(four):
    spec, pat = four
    s = solve_fold_state(pat, spec, 0.0)
    assert np.max(np.abs(s.positions[:, 2])) < 1e-12
    assert np.all(s.rho == 0)


def test_limits_raise(four):
    spec, pat = four
    lo, hi = psi_limits(spec)
    for bad in (lo, hi, hi + 0.1, float("nan")):
        with pytest.raises(DomainError):
            solve_fold_state(pat, spec, bad)


def test_branch_mountain_valley_signs(four):
    spec, pat = four
    for psi in (math.radians(-30), math.radians(30)):
        s = solve_fold_state(pat, spec, psi)
        signs = np.sign(s.rho)
        assert all(signs[j] == c.mv_sign for j, c in enumerate(pat.creases))


def test_boundary_fold_is_twice_psi(four):
    # frozen from the symmetric-vertex analysis: the boundary crease folds by 2|psi|
    spec, pat = four
    for d in (-40, -10, 10, 70):
        s = solve_fold_state(pat, spec, math.radians(d))
        assert s.rho[4] == pytest.approx(2 * abs(math.radians(d)), abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(3, 8), frac=st.floats(-0.97, 0.97))
def test_rigidity_symmetry_closure(n, frac):
    spec = OrigamiSpec(n_cells=n)
    lo, hi = psi_limits(spec)
    psi = frac * (hi if frac > 0 else -lo)
    pat = build_leafout(spec)
    s = solve_fold_state(pat, spec, psi)
    assert s.closure_residual <= 1e-8
    e = pat.face_edges()
    d0 = np.linalg.norm(pat.vertices[e[:, 1]] - pat.vertices[e[:, 0]], axis=1)
    d1 = np.linalg.norm(s.positions[e[:, 1]] - s.positions[e[:, 0]], axis=1)
    assert np.max(np.abs(d1 - d0) / d0) <= 1e-9
    assert rotation_symmetry_error(s.positions, n) <= 1e-9 * spec.L


def test_continuity_on_default_grid(four):
    spec, pat = four
    grid = default_psi_grid(spec)
    rho = np.array([s.rho for s in solve_fold_states(pat, spec, grid)])
    dpsi = grid[1] - grid[0]
    assert np.max(np.abs(np.diff(rho, axis=0))) < 10 * dpsi


def test_default_grid_contains_flat(four):
    spec, _ = four
    g = default_psi_grid(spec)
    assert len(g) == 161 and np.any(g == 0.0)
    lo, hi = psi_limits(spec)
    assert lo < g[0] and g[-1] < hi


def test_oracle_agreement(four):
    spec, pat = four
    grid = default_psi_grid(spec)
    states = solve_fold_states(pat, spec, grid)
    oracle = LoopClosureOracle(pat)
    rng = np.random.default_rng(7)
    i0 = int(np.flatnonzero(grid == 0.0)[0])
    worst = 0.0
    for idx in (list(range(len(grid) - 1, i0, -1)), list(range(0, i0))):
        s0 = states[idx[0]]
        x0 = np.concatenate([s0.rho, axis_seed(s0.positions, pat)])
        for i, (x, res) in zip(idx, oracle.sweep(grid[idx], x0, rng)):
            assert res < 1e-10
            worst = max(worst, float(np.max(np.abs(x[:-2] - states[i].rho))))
    assert worst <= 1e-6


def test_energy_formula():
    spec = OrigamiSpec(n_cells=3)
    pat = build_leafout(spec)
    s = solve_fold_state(pat, spec, 0.3)
    from leafout.structure import crease_rest_and_stiffness
    rest, _ = crease_rest_and_stiffness(pat, spec)
    at_rest = FoldState(0.3, rest, s.positions, 0.0, s.rho_rate)
    assert fold_energy(at_rest, spec, pat) == (0.0, 0.0)
    # single crease, kappa = 1, rho - rest = 1 rad
    one = spec.with_stiffness(1.0)
    rho = rest.copy()
    rho[0] += 1.0
    e, _ = fold_energy(FoldState(0.3, rho, s.positions, 0.0, s.rho_rate), one, pat)
    assert e == pytest.approx(0.5)


@pytest.mark.parametrize("deg", [-40, -20, -3, 3, 20, 70])
def test_energy_rate_matches_finite_difference(four, deg):
    spec, pat = four
    p, h = math.radians(deg), 1e-5
    analytic = fold_energy_rate(solve_fold_state(pat, spec, p), spec, pat)
    ep = fold_energy(solve_fold_state(pat, spec, p + h), spec, pat)[0]
    em = fold_energy(solve_fold_state(pat, spec, p - h), spec, pat)[0]
    fd = (ep - em) / (2 * h)
    assert abs(analytic - fd) <= 1e-4 * abs(fd)


def test_monostable_flat_spring():
    zero = {k: 0.0 for k in ("main", "sub", "boundary")}
    spec = OrigamiSpec().with_rest_angles(zero)
    land = energy_landscape(spec)
    assert not land.bistable
    assert len(land.minima) == 1 and land.minima[0][0] == 0.0
    with pytest.raises(DomainError):
        transition_force(spec)


def test_default_landscape_bistable():
    land = energy_landscape(OrigamiSpec())
    assert land.bistable and land.barrier_psi == 0.0
    assert np.all(land.energy >= 0)
    lo, hi = sorted(m[0] for m in land.minima)
    assert lo < 0 < hi
    assert math.degrees(hi) == pytest.approx(55, abs=3)


def test_barrier_grid_refinement():
    spec = OrigamiSpec()
    coarse = energy_landscape(spec)
    fine = energy_landscape(spec, default_psi_grid(spec, num=1601))
    assert coarse.barrier_energy == pytest.approx(fine.barrier_energy, rel=0.01)


def test_barrier_increases_with_cells():
    b = [energy_landscape(OrigamiSpec(n_cells=n)).barrier_normalized for n in range(3, 9)]
    assert all(x < y for x, y in zip(b, b[1:]))


def test_failed_points_become_gaps(monkeypatch):
    from leafout import structure
    spec = OrigamiSpec()
    monkeypatch.setattr(structure, "NEWTON_TOL", -1.0)
    land = structure.energy_landscape(spec)
    assert len(land.gaps) == 160
    assert np.isnan(land.energy).sum() == 160


def test_payload_lowers_force():
    spec = OrigamiSpec().with_stiffness(2e-6)
    f = [transition_force(spec, m) for m in np.linspace(0, 1e-3, 6)]
    assert all(a > b for a, b in zip(f, f[1:]))


def test_spec_json_roundtrip():
    spec = OrigamiSpec(n_cells=6).with_stiffness({"main": 2e-6, "sub": 3e-6, "boundary": 1e-6})
    back = OrigamiSpec.from_json(spec.to_json())
    assert back.n_cells == 6
    for k, v in spec.crease_classes.items():
        assert back.crease_classes[k].stiffness == v.stiffness
        assert back.crease_classes[k].rest_angle == pytest.approx(v.rest_angle, abs=1e-15)
    assert isinstance(back.crease_classes["main"], CreaseClass)
