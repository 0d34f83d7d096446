"""Acceptance gate: one test per headline criterion, each logging a PASS/FAIL line."""

from __future__ import annotations

import time

import numpy as np
import pytest

from lham import lindblad as lb
from lham.expsum import ExpSum
from lham.ham import classical_solution, extract_channels, solve_order_m
from lham.reference import duhamel_quadrature, expm
from lham.runner import run
from lham.spectral import linear_matrix

from conftest import record

PRESET_NAMES = ("burgers-paper", "mhd-paper")


def _rel(a, b):
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)) / np.linalg.norm(b))


@pytest.fixture(scope="module")
def burgers_runs(presets):
    p = presets["burgers-paper"]
    t0 = time.perf_counter()
    _ = p.channel
    reports = {4: run(p.config, p.reference)}
    elapsed = time.perf_counter() - t0
    for m in (3, 2, 1, 0):
        reports[m] = run(p.config.replace(order=m), p.reference)
    return reports, elapsed


@pytest.fixture(scope="module")
def mhd_runs(presets):
    p = presets["mhd-paper"]
    return {m: run(p.config.replace(order=m), p.reference) for m in (1, 0)}


@pytest.fixture(scope="module")
def evolutions(presets):
    out = {}
    for name in PRESET_NAMES:
        p = presets[name]
        cfg, s = p.config, p.system
        for real in lb.REALIZATIONS:
            out[name, real] = lb.run_embedding(s.A, s.y0, cfg.dt, cfg.n_steps, real,
                                               channel=p.channel, embedding=p.embedding)[:2]
    return out


def test_burgers_reproduction(burgers_runs):
    reports, elapsed = burgers_runs
    e = reports[4].errors
    ok = 0.005 <= e.rms <= 0.016 and 0.009 <= e.rel_l2 <= 0.021 and elapsed <= 600
    record("Burgers reproduction", ok,
           f"rms={100 * e.rms:.4f}% in [0.5, 1.6], L2={100 * e.rel_l2:.4f}% in [0.9, 2.1], "
           f"runtime {elapsed:.1f}s <= 600s")
    assert ok


def test_burgers_convergence_shape(burgers_runs):
    reports, _ = burgers_runs
    rms = [reports[m].errors.rms for m in range(1, 5)]
    l2 = [reports[m].errors.rel_l2 for m in range(1, 5)]
    decreasing = all(a > b for a, b in zip(rms, rms[1:])) and all(a > b for a, b in zip(l2, l2[1:]))
    r4 = reports[4]
    ref = r4.reference.fields["u"]
    dev = float(np.abs(r4.lham_grid.fields["u"] - ref).max() / np.abs(ref).max())
    ok = decreasing and dev <= 0.03
    record("Burgers convergence shape", ok,
           "rms% " + " > ".join(f"{100 * v:.3f}" for v in rms)
           + ", L2% " + " > ".join(f"{100 * v:.3f}" for v in l2)
           + f", profile max deviation {100 * dev:.3f}% of peak <= 3%")
    assert ok


def test_mhd_reproduction(mhd_runs):
    f0, f1 = mhd_runs[0].errors.per_field, mhd_runs[1].errors.per_field
    w0, x0 = 100 * f0["omega"]["rms"], 100 * f0["xi"]["rms"]
    w1, x1 = 100 * f1["omega"]["rms"], 100 * f1["xi"]["rms"]
    comb = 100 * mhd_runs[1].errors.combined_rel_l2
    ok = (abs(w0 - 12.43) <= 3 and abs(x0 - 26.15) <= 3 and abs(w1 - 10.77) <= 3
          and abs(x1 - 9.08) <= 3 and 10 <= comb <= 16 and w1 < w0 and x1 < x0)
    record("MHD reproduction", ok,
           f"order 0 (omega, xi)=({w0:.3f}%, {x0:.3f}%), order 1 ({w1:.3f}%, {x1:.3f}%), "
           f"combined L2 {comb:.3f}% in [10, 16]")
    assert ok


def test_end_to_end_exactness(presets, evolutions):
    worst = 0.0
    for name in PRESET_NAMES:
        p = presets[name]
        s = p.system
        y_T = expm(s.A * p.config.T) @ s.y0
        for real in lb.REALIZATIONS:
            worst = max(worst, _rel(evolutions[name, real][0].y, y_T))
    ok = worst <= 1e-8
    record("End-to-end Lindblad exactness", ok, f"max relative error {worst:.3e} <= 1e-8 "
           f"(2 presets x {len(lb.REALIZATIONS)} realizations)")
    assert ok


def test_cptp_suite(presets, evolutions, burgers_runs, mhd_runs):
    rng = np.random.default_rng(0)
    trace = compl = iso = agree = 0.0
    choi = np.inf
    channels = [presets[n].channel for n in PRESET_NAMES]
    for _, ev in evolutions.values():
        trace = max(trace, max(d["trace_change"] for d in ev.diagnostics))
    for ch in channels:
        compl = max(compl, ch.completeness_residual())
        iso = max(iso, ch.isometry_residual())
        choi = min(choi, ch.choi_min_eig)
        D = ch.D
        X = rng.normal(size=(2 * D, 2 * D)) + 1j * rng.normal(size=(2 * D, 2 * D))
        probe = lb.DensityState(X @ X.conj().T / np.trace(X @ X.conj().T))
        for rho in (probe, lb.init_density(np.ones(D))):
            outs = [lb.step(rho, ch, r).rho for r in lb.REALIZATIONS]
            agree = max(agree, max(float(np.abs(outs[0] - o).max()) for o in outs[1:]))
    # channels built for the lower-order runs
    for r in list(burgers_runs[0].values()) + list(mhd_runs.values()):
        d = r.channel_diagnostics
        compl = max(compl, d["completeness_residual"])
        iso = max(iso, d["isometry_residual"])
        choi = min(choi, d["choi_min_eig"])
        trace = max(trace, max(s["trace_change"] for s in r.step_diagnostics))
    ok = trace <= 1e-10 and choi >= -1e-10 and compl <= 1e-10 and agree <= 1e-9 and iso <= 1e-10
    record("CPTP suite", ok,
           f"trace change {trace:.2e}, Choi min eig {choi:.2e}, completeness {compl:.2e}, "
           f"realization agreement {agree:.2e}, isometry {iso:.2e}")
    assert ok


def test_block_evolution(presets, evolutions):
    worst = 0.0
    for name in PRESET_NAMES:
        p = presets[name]
        emb, cfg, s = p.embedding, p.config, p.system
        yh = s.y0 / s.y0_norm
        targets = [0.5 * np.outer(expm(emb.A_shift * k * cfg.dt) @ yh, yh.conj())
                   for k in range(cfg.n_steps + 1)]
        for real in lb.REALIZATIONS:
            ev = evolutions[name, real][1]
            for k in range(1, cfg.n_steps + 1):
                worst = max(worst, float(np.abs(lb.read_block(ev.states[k]) - targets[k]).max()))
    ok = worst <= 1e-8
    record("Block evolution", ok, f"max entry-wise deviation {worst:.3e} <= 1e-8 for k=1..N")
    assert ok


def test_duhamel_oracle_suite(presets):
    worst = 0.0
    count = 0
    for name in PRESET_NAMES:
        p = presets[name]
        M = linear_matrix(p.config.problem_def(), p.config.mode_set())
        h = p.hierarchy
        for lev in h.levels[1:]:
            for t in (0.1, 0.25, 0.5):
                worst = max(worst, _rel(lev.at(t), duhamel_quadrature(M, h.forcings[lev.order], t)))
                count += 1
    M = np.array([[-0.1]], dtype=complex)
    f = ExpSum.exp(0.1, np.array([1.0 + 0j]))
    lev = solve_order_m(M, extract_channels(f))
    for t in (0.1, 0.5, 2.0):
        worst = max(worst, _rel(lev.at(t), duhamel_quadrature(M, f, t)))
        count += 1
    ok = worst <= 1e-8
    record("Duhamel oracle suite", ok, f"max relative error {worst:.3e} <= 1e-8 over {count} "
           "checks incl. resonance")
    assert ok


def test_readout_identity(presets, evolutions):
    worst = 0.0
    for (name, _), (_, ev) in evolutions.items():
        s = presets[name].system
        yh = s.y0 / s.y0_norm
        for st in ev.states[1:]:
            worst = max(worst, float(np.abs(lb.readout_components(st, yh)
                                            - lb.direct_components(st, yh)).max()))
    ok = worst <= 1e-12
    record("Readout identity", ok, f"max deviation {worst:.3e} <= 1e-12 on all evolved states")
    assert ok
