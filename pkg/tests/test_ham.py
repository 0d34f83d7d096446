from __future__ import annotations

import json

import numpy as np
import pytest

from lham.expsum import ExpSum
from lham.ham import (HamConfig, LiftedSystem, assemble_lifted, build_hierarchy, classical_solution,
                      extract_channels, forcing, lift_problem, solve_order_m, solve_order_zero, sum_series)
from lham.reference import duhamel_quadrature
from lham.spectral import ModeSet, ProblemDef, bilinear_for, linear_matrix

NU = 0.05
TIMES = (0.1, 0.25, 0.5)

# Frozen from an independent symbolic computation (sympy, physical-space products
# projected onto Fourier modes, Duhamel integrals done exactly).
BURGERS_C1_MODE2_T05 = 0.11598001616188609j
BURGERS_C2_MODE1_T05 = 0.014499012223889294j
BURGERS_C2_MODE3_T05 = -0.040703022891853867j
MHD_F1_T03 = {
    ("omega", (1, 0)): -0.060835077595271049,
    ("omega", (0, 1)): -0.059749842614568744,
    ("xi", (1, 1)): 0.24407142743947733j,
    ("xi", (1, 0)): 0.06010941932164792j,
    ("xi", (0, 1)): 0.060471159974314501j,
}
MHD_ORDER1_RATES = [0.08, 0.09, 0.11, 0.13, 0.15]


def _hier(problem, order, mu=-1.0):
    p, ms, c0 = problem
    M = linear_matrix(p, ms)
    return M, build_hierarchy(M, c0, bilinear_for(p, ms), HamConfig(order, mu))


def _rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def test_order_zero_is_pure_decay(burgers_problem):
    _, ms, _ = burgers_problem
    M, h = _hier(burgers_problem, 0)
    lev = h.levels[0]
    for t in TIMES:
        assert abs(lev.at(t)[ms.index(1)] - (-0.5j) * np.exp(-NU * t)) < 1e-15
    assert not solve_order_zero(M, np.zeros(len(ms))).solution


def test_mhd_order_zero_rates(mhd_problem):
    _, ms, _ = mhd_problem
    _, h = _hier(mhd_problem, 0)
    assert sorted(round(r.real, 12) for r, _ in h.levels[0].solution.rates) == [0.03, 0.05, 0.06, 0.1]


def test_burgers_first_forcing(burgers_problem):
    _, ms, _ = burgers_problem
    _, h = _hier(burgers_problem, 1)
    f = h.forcings[1]
    assert len(f) == 1
    amp, lam, k = f.terms[0]
    assert abs(lam - 2 * NU) < 1e-15 and k == 0
    assert abs(amp[ms.index(-2)] + 0.25j) < 1e-15 and abs(amp[ms.index(2)] - 0.25j) < 1e-15
    assert np.count_nonzero(amp) == 2


def test_burgers_second_forcing_rates(burgers_problem):
    _, h = _hier(burgers_problem, 2)
    assert sorted(round(lam.real, 12) for lam, _ in h.forcings[2].rates) == [0.15, 0.25]


def test_burgers_order_solutions_frozen(burgers_problem):
    _, ms, _ = burgers_problem
    _, h = _hier(burgers_problem, 2)
    assert abs(h.levels[1].at(0.5)[ms.index(2)] - BURGERS_C1_MODE2_T05) < 1e-14
    assert abs(h.levels[2].at(0.5)[ms.index(1)] - BURGERS_C2_MODE1_T05) < 1e-14
    assert abs(h.levels[2].at(0.5)[ms.index(3)] - BURGERS_C2_MODE3_T05) < 1e-14


def test_burgers_order_one_closed_form(burgers_problem):
    _, ms, _ = burgers_problem
    _, h = _hier(burgers_problem, 1)
    for t in TIMES:
        expected = 1j / (8 * NU) * (np.exp(-2 * NU * t) - np.exp(-4 * NU * t))
        assert abs(h.levels[1].at(t)[ms.index(2)] - expected) < 1e-14


def test_mhd_first_forcing_frozen(mhd_problem):
    _, ms, _ = mhd_problem
    _, h = _hier(mhd_problem, 1)
    f = h.forcings[1].eval(0.3)
    n = len(ms)
    for (name, j), v in MHD_F1_T03.items():
        assert abs(f[(name == "xi") * n + ms.index(j)] - v) < 1e-14
    rates = sorted(round(ch.rate.real, 12) for ch in h.channels[1])
    assert rates == MHD_ORDER1_RATES


def test_zero_lower_levels_give_zero_forcing():
    p, ms = ProblemDef("burgers", NU), ModeSet(1, 3)
    M = linear_matrix(p, ms)
    h = build_hierarchy(M, np.zeros(len(ms)) + 0j, bilinear_for(p, ms), HamConfig(3))
    assert all(not f for f in h.forcings)
    assert extract_channels(ExpSum()) == []


def test_forcing_needs_lower_levels(burgers_problem):
    p, ms, _ = burgers_problem
    M, h = _hier(burgers_problem, 1)
    with pytest.raises(ValueError):
        forcing(3, h.levels, M, bilinear_for(p, ms))


@pytest.mark.parametrize("which,order", [("burgers", 4), ("mhd", 2)])
def test_duhamel_equivalence(request, which, order):
    problem = request.getfixturevalue(f"{which}_problem")
    M, h = _hier(problem, order)
    for lev in h.levels[1:]:
        for t in TIMES:
            q = duhamel_quadrature(M, h.forcings[lev.order], t)
            assert _rel(lev.at(t), q) <= 1e-8


def test_resonance_solution():
    M = np.array([[-0.1]], dtype=complex)
    ch = extract_channels(ExpSum.exp(0.1, np.array([1.0 + 0j])))
    lev = solve_order_m(M, ch)
    for t in (0.0,) + TIMES + (3.0,):
        assert abs(lev.at(t)[0] - t * np.exp(-0.1 * t)) < 1e-14
        assert abs(lev.at(t)[0] - duhamel_quadrature(M, ch[0].forcing(), t)[0]) < 1e-10


def test_zero_channels_give_zero_level():
    assert not solve_order_m(np.diag([-0.1, -0.2]).astype(complex), []).solution


@pytest.mark.parametrize("which,order", [("burgers", 4), ("mhd", 2)])
def test_channel_reconstruction(request, rng, which, order):
    problem = request.getfixturevalue(f"{which}_problem")
    _, h = _hier(problem, order)
    for m in range(1, order + 1):
        for ch in h.channels[m]:
            assert np.abs(ch.column).max() == pytest.approx(1.0)
        rebuilt = sum((ch.forcing() for ch in h.channels[m]), ExpSum())
        for t in rng.uniform(0, 2, 20):
            assert np.abs(rebuilt(t) - h.forcings[m](t)).max() < 1e-12


def test_lift_order_zero_is_linear_system(burgers_problem):
    p, ms, c0 = burgers_problem
    system, _ = lift_problem(p, ms, c0, HamConfig(0))
    assert np.array_equal(system.A, linear_matrix(p, ms))
    assert np.array_equal(system.y0, c0.values)


def test_lift_order_one_structure(burgers_problem):
    p, ms, c0 = burgers_problem
    system, _ = lift_problem(p, ms, c0, HamConfig(1))
    assert [b.size for b in system.layout] == [9, 1, 9]
    z, u1 = system.layout[1], system.layout[2]
    coupling = system.A[u1.slice, z.slice]
    assert np.count_nonzero(coupling) == 2
    assert set(np.nonzero(coupling[:, 0])[0]) == {ms.index(-2), ms.index(2)}
    off = system.A.copy()
    for b in system.layout:
        off[b.slice, b.slice] = 0
    assert np.count_nonzero(off) == 2
    assert system.A[z.start, z.start] == pytest.approx(-2 * NU)


@pytest.mark.parametrize("which,order", [("burgers", 4), ("mhd", 1), ("mhd", 2)])
def test_lift_invariants(request, which, order):
    p, ms, c0 = request.getfixturevalue(f"{which}_problem")
    system, h = lift_problem(p, ms, c0, HamConfig(order))
    M = linear_matrix(p, ms)
    for b in system.layout:
        assert not np.any(system.A[b.start:b.stop, b.stop:])
        if b.kind == "u":
            assert np.array_equal(system.A[b.slice, b.slice], M)
            if b.order >= 1:
                assert not np.any(system.y0[b.slice])
    # sum of order initial values is the initial condition
    assert np.array_equal(sum_series(system.y0, system).values, c0.values)
    assert system.y0_norm == pytest.approx(np.linalg.norm(system.y0))
    for t in TIMES:
        slices = system.order_slices(classical_solution(system, t))
        for lev, s in zip(h.levels, slices):
            assert _rel(s, lev.at(t)) <= 1e-9


def test_resonance_channel_chain():
    # forcing t e^{-0.1 t} on a mode decaying at 0.1 needs a two-slot chain
    M = np.array([[-0.1]], dtype=complex)
    ch = extract_channels(ExpSum.exp(0.1, np.array([2.0 + 0j]), power=1))
    system = assemble_lifted(M, [[], ch], np.array([0.0 + 0j]))
    z = system.layout[1]
    assert z.size == 2 and system.A[z.start + 1, z.start] == 1.0
    lev = solve_order_m(M, ch)
    y = classical_solution(system, 0.7)
    assert abs(y[system.u_block(1).slice][0] - lev.at(0.7)[0]) < 1e-13
    assert abs(lev.at(0.7)[0] - 2.0 * 0.7**2 / 2 * np.exp(-0.07)) < 1e-14


def test_classical_solution_at_zero(burgers_problem):
    p, ms, c0 = burgers_problem
    system, _ = lift_problem(p, ms, c0, HamConfig(2))
    assert np.array_equal(classical_solution(system, 0.0), system.y0)
    with pytest.raises(ValueError):
        classical_solution(system, -1.0)


def test_sum_series_single_slice(burgers_problem):
    p, ms, c0 = burgers_problem
    system, _ = lift_problem(p, ms, c0, HamConfig(3))
    y = np.zeros(system.dim, dtype=complex)
    blk = system.u_block(2)
    y[blk.slice] = np.arange(blk.size) + 1j
    assert np.array_equal(sum_series(y, system).values, y[blk.slice])
    with pytest.raises(ValueError):
        sum_series(y[:-1], system)


def test_general_mu_matches_duhamel(burgers_problem):
    M, h = _hier(burgers_problem, 3, mu=-0.7)
    for lev in h.levels[1:]:
        for t in TIMES:
            assert _rel(lev.at(t), duhamel_quadrature(M, h.forcings[lev.order], t)) <= 1e-8
    # the deformation series at mu = -1 is the standard one
    _, h1 = _hier(burgers_problem, 3, mu=-1.0)
    _, hmu = _hier(burgers_problem, 1, mu=-1.0)
    assert np.abs(h1.levels[1].at(0.4) - hmu.levels[1].at(0.4)).max() == 0


def test_json_round_trip(tmp_path, mhd_problem):
    p, ms, c0 = mhd_problem
    system, _ = lift_problem(p, ms, c0, HamConfig(1))
    path = tmp_path / "system.json"
    system.dump(path)
    data = json.loads(path.read_text())
    assert data["dim"] == system.dim
    back = LiftedSystem.from_json(data)
    assert np.array_equal(back.A, system.A) and np.array_equal(back.y0, system.y0)
    assert back.layout == system.layout and back.mode_set == ms
