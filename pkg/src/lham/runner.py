"""Run configuration and the end-to-end pipeline.

problem -> homotopy lift -> Lindblad evolution -> readout -> metrics -> files.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import time
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import lindblad
from .ham import HamConfig, LiftedSystem, classical_solution, lift_problem, sum_series
from .reference import (ErrorReport, GridSolution, PeriodicGrid, error_metrics, evaluate_on_grid,
                        fdm_burgers, psm_mhd)
from .spectral import CoeffVector, ModeSet, ProblemDef, parse_ic, project_initial

ENGINES = ("lindblad-full", "lindblad-kraus", "lindblad-stinespring", "classical-expm")
REALIZATION_OF = {
    "lindblad-full": "superop",
    "lindblad-kraus": "kraus",
    "lindblad-stinespring": "stinespring",
}
AGREEMENT_TOL = 1e-8


class ConfigError(ValueError):
    pass


class EngineMismatch(AssertionError):
    """Density-matrix readout disagrees with the classical propagator."""


@dataclass(frozen=True)
class RunConfig:
    problem: str = "burgers"
    nu: float = 0.05
    eta: float | None = None
    J: int = 4
    order: int = 4
    mu: float = -1.0
    dt: float = 0.05
    n_steps: int = 10
    engine: str = "lindblad-full"
    reference: bool = True
    output_dir: str | None = None
    seed: int = 0
    u0: str = "sin(1)"
    omega0: str = "0"
    xi0: str = "0"
    extra_shift: float = 0.0
    nx: int | None = None
    ny: int | None = None
    dt_ref: float | None = None

    def __post_init__(self):
        if self.problem not in ("burgers", "mhd"):
            raise ConfigError(f"problem must be burgers or mhd, got {self.problem!r}")
        if not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if self.n_steps < 1:
            raise ConfigError(f"n_steps must be at least 1, got {self.n_steps}")
        if self.J < 1:
            raise ConfigError(f"J must be at least 1, got {self.J}")
        if self.order < 0:
            raise ConfigError(f"order must be non-negative, got {self.order}")
        if self.engine not in ENGINES:
            raise ConfigError(f"engine must be one of {ENGINES}, got {self.engine!r}")
        if self.extra_shift < 0:
            raise ConfigError("extra_shift must be non-negative")
        try:
            self.problem_def()
            self.ic_terms()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def T(self) -> float:
        return self.dt * self.n_steps

    def problem_def(self) -> ProblemDef:
        return ProblemDef(self.problem, self.nu, self.eta if self.problem == "mhd" else None)

    def mode_set(self) -> ModeSet:
        return ModeSet(self.problem_def().dimension, self.J)

    def ic_terms(self):
        if self.problem == "burgers":
            return parse_ic(self.u0, 0)
        return parse_ic(self.omega0, 0) + parse_ic(self.xi0, 1)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name} = {'none' if v is None else v}")
        return "\n".join(lines) + "\n"


PRESETS: dict[str, RunConfig] = {
    "burgers-paper": RunConfig(
        problem="burgers", nu=0.05, J=4, order=4, dt=0.05, n_steps=10, u0="sin(1)",
    ),
    "mhd-paper": RunConfig(
        problem="mhd", nu=0.05, eta=0.03, J=1, order=1, dt=0.05, n_steps=10,
        omega0="sin(1,0) + 0.5*sin(1,-1)", xi0="cos(0,1) + 0.25*cos(1,1)", u0="0",
    ),
}


def _field_types() -> dict[str, str]:
    return {f.name: str(f.type) for f in dataclasses.fields(RunConfig)}


def coerce(key: str, text: str) -> Any:
    """Convert the textual value of config ``key`` to its field type."""
    types = _field_types()
    if key not in types:
        raise ConfigError(f"unknown config key {key!r}")
    tp = types[key]
    text = text.strip()
    if "None" in tp and text.lower() in ("none", ""):
        return None
    if tp.startswith("bool"):
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key} expects a boolean, got {text!r}")
    try:
        if tp.startswith("int"):
            return int(text)
        if tp.startswith("float"):
            return float(text)
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from exc
    return text


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    """``key = value`` lines; ``#`` starts a comment; ``preset = name`` selects a base."""
    values: dict[str, Any] = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key = value, got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key == "preset":
            base = preset(val)
            continue
        values[key] = coerce(key, val)
    return (base or RunConfig()).replace(**values)


def load_config(path: str | Path, base: RunConfig | None = None) -> RunConfig:
    return parse_config_text(Path(path).read_text(), base)


def preset(name: str) -> RunConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


# --- caches ----------------------------------------------------------------

_REF_CACHE: dict[tuple, GridSolution] = {}
_CHANNEL_CACHE: "OrderedDict[tuple, tuple]" = OrderedDict()
CHANNEL_CACHE_SIZE = 3


def reference_solution(config: RunConfig) -> GridSolution:
    """FDM (Burgers) or pseudo-spectral (MHD) solution at ``T``, memoized."""
    p = config.problem_def()
    if config.problem == "burgers":
        key = ("burgers", config.u0, p.nu, config.T, config.nx or 256, config.dt_ref or 1e-4)
        if key not in _REF_CACHE:
            _REF_CACHE[key] = fdm_burgers(parse_ic(config.u0), p.nu, config.T, key[4], key[5])
    else:
        key = ("mhd", config.omega0, config.xi0, p.nu, p.eta, config.T,
               config.nx or 64, config.ny or 64, config.dt_ref or 1e-3)
        if key not in _REF_CACHE:
            _REF_CACHE[key] = psm_mhd(parse_ic(config.omega0), parse_ic(config.xi0), p.nu, p.eta,
                                      config.T, key[6], key[7], key[8])
    return _REF_CACHE[key]


def embedding_and_channel(A: np.ndarray, dt: float, extra_shift: float = 0.0):
    """Embedding and step channel of ``A``, memoized on the matrix contents."""
    key = (hashlib.sha1(np.ascontiguousarray(A).tobytes()).hexdigest(), A.shape, dt, extra_shift)
    if key in _CHANNEL_CACHE:
        _CHANNEL_CACHE.move_to_end(key)
        return _CHANNEL_CACHE[key]
    emb = lindblad.split_and_shift(A, extra_shift)
    ch = lindblad.build_channel(emb, dt)
    _CHANNEL_CACHE[key] = (emb, ch)
    while len(_CHANNEL_CACHE) > CHANNEL_CACHE_SIZE:
        _CHANNEL_CACHE.popitem(last=False)
    return emb, ch


def build_system(config: RunConfig):
    p, ms = config.problem_def(), config.mode_set()
    c0 = project_initial(p, ms, config.ic_terms())
    return lift_problem(p, ms, c0, HamConfig(config.order, config.mu))


# --- run -------------------------------------------------------------------

@dataclass
class RunReport:
    config: RunConfig
    system: LiftedSystem = field(repr=False)
    y: np.ndarray = field(repr=False)
    order_coefficients: list[CoeffVector] = field(repr=False)
    total: CoeffVector = field(repr=False)
    errors: ErrorReport | None = None
    lham_grid: GridSolution | None = field(default=None, repr=False)
    reference: GridSolution | None = field(default=None, repr=False)
    engine_agreement: float | None = None
    gamma: float | None = None
    step_diagnostics: list[dict] = field(default_factory=list, repr=False)
    channel_diagnostics: dict = field(default_factory=dict)
    embedding_diagnostics: dict = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)

    def partial_sum(self, m: int) -> CoeffVector:
        """Series truncated at order ``m``; equals the order-``m`` run's total."""
        vals = np.sum([c.values for c in self.order_coefficients[: m + 1]], axis=0)
        return CoeffVector(self.total.mode_set, self.total.n_fields, vals)

    def to_json(self) -> dict:
        def pairs(v):
            return [[float(z.real), float(z.imag)] for z in v]

        out = {
            "config": dataclasses.asdict(self.config),
            "lifted_dim": self.system.dim,
            "T": self.config.T,
            "gamma": self.gamma,
            "engine_agreement": self.engine_agreement,
            "modes": self.total.mode_set.modes.tolist(),
            "order_coefficients": [pairs(c.values) for c in self.order_coefficients],
            "total": pairs(self.total.values),
            "step_diagnostics": self.step_diagnostics,
            "channel": self.channel_diagnostics,
            "embedding": self.embedding_diagnostics,
            "timings": self.timings,
        }
        if self.errors is not None:
            out["errors"] = dict(self.errors.rows())
            out["error_nodes"] = self.errors.n_nodes
        return out


def _field_names(config: RunConfig) -> tuple[str, ...]:
    return config.problem_def().field_names


def run(config: RunConfig, reference: GridSolution | None = None) -> RunReport:
    """Execute the pipeline in ``config.engine``.

    Lindblad engines are always checked against the classical propagator;
    a relative discrepancy above ``1e-8`` raises :class:`EngineMismatch`.
    """
    timings: dict[str, float] = {}
    t0 = time.perf_counter()
    system, _ = build_system(config)
    timings["lift"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    y_classical = classical_solution(system, config.T)
    timings["classical"] = time.perf_counter() - t0

    report_kw: dict[str, Any] = {}
    if config.engine == "classical-expm":
        y = y_classical
    else:
        t0 = time.perf_counter()
        emb, ch = embedding_and_channel(system.A, config.dt, config.extra_shift)
        timings["channel"] = time.perf_counter() - t0
        t0 = time.perf_counter()
        res, ev, _, _ = lindblad.run_embedding(system.A, system.y0, config.dt, config.n_steps,
                                               REALIZATION_OF[config.engine], channel=ch, embedding=emb)
        timings["evolve_readout"] = time.perf_counter() - t0
        y = res.y
        rel = float(np.linalg.norm(y - y_classical) / np.linalg.norm(y_classical))
        if not rel <= AGREEMENT_TOL:
            raise EngineMismatch(f"{config.engine} readout differs from expm by {rel:.3g} (relative)")
        report_kw.update(
            engine_agreement=rel, gamma=emb.gamma, step_diagnostics=ev.diagnostics,
            channel_diagnostics=ch.diagnostics(), embedding_diagnostics=emb.diagnostics(),
        )

    ms, nf = config.mode_set(), config.problem_def().n_fields
    orders = [CoeffVector(ms, nf, s) for s in system.order_slices(y)]
    total = sum_series(y, system)
    report = RunReport(config, system, y, orders, total, timings=timings, **report_kw)

    if config.reference or reference is not None:
        t0 = time.perf_counter()
        ref = reference if reference is not None else reference_solution(config)
        timings["reference"] = time.perf_counter() - t0
        report.reference = ref
        report.lham_grid = evaluate_on_grid(total, ref.grid, _field_names(config), config.T)
        report.errors = error_metrics(report.lham_grid, ref)

    if config.output_dir:
        write_report(report, config.output_dir)
    return report


def write_report(report: RunReport, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report.to_json(), indent=1))
    (out / "config.txt").write_text(report.config.to_text())
    paths = [out / "report.json", out / "config.txt"]
    if report.errors is not None:
        report.errors.to_csv(out / "errors.csv")
        paths.append(out / "errors.csv")
    return paths + emit_plot_data(report, out)


# --- sweeps and plot data --------------------------------------------------

@dataclass
class SweepResult:
    config: RunConfig
    orders: list[int]
    reports: list[RunReport] = field(repr=False)

    def table(self) -> list[dict]:
        rows = []
        for m, r in zip(self.orders, self.reports):
            row: dict[str, Any] = {"order": m}
            if r.errors is not None:
                row.update(dict(r.errors.rows()))
            rows.append(row)
        return rows


def sweep_orders(config: RunConfig, max_order: int) -> SweepResult:
    """One run per order ``0..max_order`` sharing one reference solution."""
    if max_order < 0:
        raise ConfigError("max_order must be non-negative")
    ref = reference_solution(config) if config.reference else None
    base = config.replace(output_dir=None)
    reports = [run(base.replace(order=m), ref) for m in range(max_order + 1)]
    result = SweepResult(config, list(range(max_order + 1)), reports)
    if config.output_dir:
        write_sweep(result, config.output_dir)
    return result


def _metric_columns(names: tuple[str, ...]) -> list[str]:
    cols = ["order", "rms", "rel_l2"]
    if len(names) > 1:
        cols.append("combined_rel_l2")
    for n in names:
        cols += [f"rms_{n}", f"rel_l2_{n}"]
    return cols


def write_error_table(rows: list[dict], names: tuple[str, ...], path: Path) -> Path:
    cols = _metric_columns(names)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for row in rows:
            w.writerow([row["order"]] + [f"{row[c]:.17g}" if c in row else "" for c in cols[1:]])
    return path


def write_sweep(result: SweepResult, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = _field_names(result.config)
    paths = [write_error_table(result.table(), names, out / "errors_vs_order.csv")]
    if result.reports:
        paths += emit_plot_data(result.reports[-1], out, with_errors=False)
    return paths


def _write_rows(path: Path, header: list[str], cols: list[np.ndarray]) -> Path:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(len(cols[0]) if cols else 0):
            w.writerow([f"{c[i]:.17g}" for c in cols])
    return path


def emit_plot_data(report: RunReport, out_dir: str | Path, with_errors: bool = True) -> list[Path]:
    """CSV data behind the convergence, profile and field plots.

    * ``errors_vs_order.csv``: errors of every partial sum ``0..order``.
    * Burgers ``profile.csv``: ``x, u_ref, u_m0 .. u_m<order>``.
    * MHD ``<field>.csv``: ``x, y, lham, ref, error`` on the reference grid.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths: list[Path] = []
    names = _field_names(report.config)
    ref = report.reference
    if ref is None:
        return paths
    partial_grids = [evaluate_on_grid(report.partial_sum(m), ref.grid, names, report.config.T)
                     for m in range(len(report.order_coefficients))]
    if with_errors:
        rows = []
        for m, g in enumerate(partial_grids):
            rows.append({"order": m, **dict(error_metrics(g, ref).rows())})
        paths.append(write_error_table(rows, names, out / "errors_vs_order.csv"))
    if report.config.problem == "burgers":
        header = ["x", "u_ref"] + [f"u_m{m}" for m in range(len(partial_grids))]
        cols = [ref.grid.x, ref.fields["u"]] + [g.fields["u"] for g in partial_grids]
        paths.append(_write_rows(out / "profile.csv", header, cols))
    else:
        xs, ys = (m.ravel() for m in ref.grid.mesh())
        lham = report.lham_grid
        for n in names:
            d = lham.fields[n] - ref.fields[n]
            paths.append(_write_rows(out / f"{n}.csv", ["x", "y", "lham", "ref", "error"],
                                     [xs, ys, lham.fields[n].ravel(), ref.fields[n].ravel(), d.ravel()]))
    return paths
