"""Invariant suite behind ``lham check``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import lindblad
from .expsum import ExpSum
from .ham import classical_solution
from .reference import duhamel_quadrature, expm
from .runner import RunConfig, build_system, embedding_and_channel
from .spectral import linear_matrix


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    tol: float
    kind: str = "max"  # "max": value <= tol; "min": value >= tol

    @property
    def passed(self) -> bool:
        ok = self.value <= self.tol if self.kind == "max" else self.value >= self.tol
        return bool(ok and np.isfinite(self.value))

    def line(self) -> str:
        op = "<=" if self.kind == "max" else ">="
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.value:.3e} {op} {self.tol:.0e}"


def _rel(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(float(np.linalg.norm(b)), 1e-300)
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)) / scale)


def upper_block_mass(system) -> float:
    """Largest entry above the block diagonal of the lifted matrix."""
    worst = 0.0
    for b in system.layout:
        above = system.A[b.start:b.stop, b.stop:]
        if above.size:
            worst = max(worst, float(np.abs(above).max()))
    return worst


def random_density(D: int, rng: np.random.Generator) -> lindblad.DensityState:
    X = rng.normal(size=(2 * D, 2 * D)) + 1j * rng.normal(size=(2 * D, 2 * D))
    rho = X @ X.conj().T
    return lindblad.DensityState(rho / np.trace(rho))


def run_checks(config: RunConfig, times=(0.1, 0.25, 0.5)) -> list[CheckResult]:
    rng = np.random.default_rng(config.seed)
    system, hier = build_system(config)
    M = linear_matrix(config.problem_def(), config.mode_set())
    out = [CheckResult("lifted matrix above block diagonal", upper_block_mass(system), 0.0)]

    lift_err = duh_err = 0.0
    for t in times:
        slices = system.order_slices(classical_solution(system, t))
        for lev, s in zip(hier.levels, slices):
            lift_err = max(lift_err, _rel(lev.at(t), s) if np.linalg.norm(s) else float(np.abs(lev.at(t)).max()))
            if lev.order >= 1:
                f = hier.forcings[lev.order]
                q = duhamel_quadrature(M, f, t)
                duh_err = max(duh_err, _rel(lev.at(t), q))
    out.append(CheckResult("lifted slices vs order solutions (rel)", lift_err, 1e-9))
    out.append(CheckResult("order solutions vs Duhamel quadrature (rel)", duh_err, 1e-8))

    rec_err = 0.0
    for m in range(1, len(hier.channels)):
        rebuilt = ExpSum()
        for ch in hier.channels[m]:
            rebuilt = rebuilt + ch.forcing()
        for t in rng.uniform(0, config.T, 20):
            a, b = np.atleast_1d(rebuilt.eval(t)), np.atleast_1d(hier.forcings[m].eval(t))
            rec_err = max(rec_err, float(np.abs(a - b).max()) if a.shape == b.shape else np.inf)
    out.append(CheckResult("channel reconstruction of forcing", rec_err, 1e-12))

    emb, ch = embedding_and_channel(system.A, config.dt, config.extra_shift)
    ed = emb.diagnostics()
    out.append(CheckResult("shifted dissipator min eigenvalue", ed["A1_min_eig"], -1e-10, "min"))
    out.append(CheckResult("split reconstruction", ed["reconstruction"], 1e-12))
    out.append(CheckResult("Kraus completeness", ch.completeness_residual(), 1e-10))
    out.append(CheckResult("Choi min eigenvalue", ch.choi_min_eig, -1e-10, "min"))
    out.append(CheckResult("Stinespring isometry", ch.isometry_residual(), 1e-10))

    probe = random_density(emb.D, rng)
    outs = [lindblad.step(probe, ch, r).rho for r in lindblad.REALIZATIONS]
    agree = max(float(np.abs(outs[0] - o).max()) for o in outs[1:])
    out.append(CheckResult("superop/kraus/stinespring agreement", agree, 1e-9))

    yh = system.y0 / system.y0_norm
    y_exact = classical_solution(system, config.T)
    for real in lindblad.REALIZATIONS:
        res, ev, _, _ = lindblad.run_embedding(system.A, system.y0, config.dt, config.n_steps,
                                               real, channel=ch, embedding=emb)
        trace_err = max(d["trace_change"] for d in ev.diagnostics)
        out.append(CheckResult(f"[{real}] trace change per step", trace_err, 1e-10))
        out.append(CheckResult(f"[{real}] min eigenvalue of rho", min(d["min_eig"] for d in ev.diagnostics),
                               -1e-9, "min"))
        out.append(CheckResult(f"[{real}] recovered y(T) vs expm (rel)", _rel(res.y, y_exact), 1e-8))
        if real == "superop":
            blk = 0.0
            for k, st in enumerate(ev.states[1:], 1):
                target = 0.5 * np.outer(expm(emb.A_shift * k * config.dt) @ yh, yh.conj())
                blk = max(blk, float(np.abs(lindblad.read_block(st) - target).max()))
            out.append(CheckResult("block evolution rho_01(k dt)", blk, 1e-8))
            ro = float(np.abs(lindblad.readout_components(ev.final, yh)
                              - lindblad.direct_components(ev.final, yh)).max())
            out.append(CheckResult("observable readout identity", ro, 1e-12))
            pa = float(np.abs(lindblad.read_block_pauli(ev.final) - lindblad.read_block(ev.final)).max())
            out.append(CheckResult("Pauli block extraction", pa, 1e-12))
    return out
