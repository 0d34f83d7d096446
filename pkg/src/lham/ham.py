"""Homotopy deformation hierarchy and its lifted block-triangular system.

Every deformation solution is carried exactly as a vector-valued
:class:`~lham.expsum.ExpSum` with extended-precision amplitudes.  Each
distinct ``(rate, power)`` of an order's forcing becomes one auxiliary
channel; the channels and the order solutions are stacked into a single
autonomous system ``y' = A y`` in ordinary double precision.
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import mpmath
import numpy as np

from .expsum import EXTENDED_DPS, ExpSum, extended, solve_forced_decay
from .reference import expm
from .spectral import CoeffVector, ModeSet, ProblemDef, bilinear_for

Bilinear = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _extended_precision(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        with mpmath.workdps(EXTENDED_DPS):
            return fn(*args, **kwargs)

    return wrapper


def _complex(a) -> np.ndarray:
    return np.array(a, dtype=complex)


@dataclass(frozen=True)
class HamConfig:
    order: int = 1
    mu: float = -1.0

    def __post_init__(self):
        if self.order < 0:
            raise ValueError(f"homotopy order must be non-negative, got {self.order}")


@dataclass(frozen=True)
class DeformationLevel:
    """Exact order-``m`` solution; ``solution`` has array amplitudes over (field, mode)."""

    order: int
    solution: ExpSum
    size: int

    def at(self, t: float) -> np.ndarray:
        if not self.solution:
            return np.zeros(self.size, dtype=complex)
        return np.asarray(self.solution.eval(t), dtype=complex)

    def entry(self, i: int) -> ExpSum:
        return self.solution.entry(i)


@dataclass(frozen=True)
class ForcingChannel:
    """One auxiliary forcing variable ``scale * t^power e^{-rate t}`` feeding
    the order solution through ``column`` (max-magnitude 1).

    ``column`` may hold extended-precision entries; :attr:`coupling` is its
    double-precision copy used in the lifted matrix.
    """

    rate: complex
    power: int
    column: np.ndarray
    scale: float

    def forcing(self) -> ExpSum:
        return ExpSum.exp(self.rate, self.scale * self.column, self.power)

    @property
    def width(self) -> int:
        return self.power + 1

    @property
    def coupling(self) -> np.ndarray:
        return _complex(self.column)


def _diag(M: np.ndarray) -> np.ndarray:
    M = np.asarray(M)
    d = np.diag(M)
    if np.any(M - np.diag(d)):
        raise ValueError("linear operator must be diagonal in the spectral basis")
    return d.astype(complex)


@_extended_precision
def solve_order_zero(M: np.ndarray, c0: CoeffVector | np.ndarray) -> DeformationLevel:
    """Mode-wise ``c_j(t) = c0_j e^{M_jj t}``."""
    d = _diag(M)
    v = extended(c0.values if isinstance(c0, CoeffVector) else c0)
    terms = []
    for rate in np.unique(-d):
        mask = (-d == rate) & (v != 0)
        if mask.any():
            terms.append((np.where(mask, v, 0), rate, 0))
    return DeformationLevel(0, ExpSum(terms), len(d))


@_extended_precision
def nonlinear_source(m: int, levels: Sequence[DeformationLevel], bilinear: Bilinear) -> ExpSum:
    """``S^{(m-1)} = sum_{a+b=m-1} N(u^a, u^b)``."""
    if len(levels) < m:
        raise ValueError(f"order {m} forcing needs levels 0..{m - 1}, have {len(levels)}")
    total = ExpSum()
    for a in range(m):
        total = total + levels[a].solution.bilinear(levels[m - 1 - a].solution, bilinear)
    return total


def _residual_operator(u: ExpSum, d: np.ndarray) -> ExpSum:
    """``du/dt - M u`` for diagonal ``M``."""
    return u.derivative() - u.map(lambda a, lam, k: d * a)


@_extended_precision
def forcing(m: int, levels: Sequence[DeformationLevel], M: np.ndarray, bilinear: Bilinear,
            config: HamConfig = HamConfig()) -> ExpSum:
    """Forcing of the order-``m`` deformation equation.

    ``f^0 = mu R^0`` and ``f^{m-1} = (d/dt - M) u^{m-1} + mu R^{m-1}`` with
    ``R^{m-1} = (d/dt - M) u^{m-1} - S^{m-1}``.  For ``mu = -1`` this is the
    nonlinear source alone.
    """
    if m < 1:
        raise ValueError("forcing is defined for orders m >= 1")
    if len(levels) < m:
        raise ValueError(f"order {m} forcing needs levels 0..{m - 1}, have {len(levels)}")
    d = _diag(M)
    mu = config.mu
    prev = levels[m - 1].solution
    lin = _residual_operator(prev, d)
    R = lin - nonlinear_source(m, levels, bilinear)
    if m == 1:
        return R.scale(mu)
    return lin + R.scale(mu)


def extract_channels(f: ExpSum) -> list[ForcingChannel]:
    """One channel per ``(rate, power)`` term of a vector forcing."""
    out = []
    for amp, lam, k in f.terms:
        amp = np.asarray(amp)
        scale = float(np.max(np.abs(_complex(amp))))
        if scale < 1e-14:
            continue
        with mpmath.workdps(EXTENDED_DPS):
            col = amp / scale
        col.setflags(write=False)
        out.append(ForcingChannel(lam, k, col, scale))
    return out


@_extended_precision
def solve_order_m(M: np.ndarray, channels: Sequence[ForcingChannel], order: int = 1,
                  resonance_tol: float = 1e-9) -> DeformationLevel:
    """Zero-initial-value solution of ``c' = M c + sum_r channel_r(t)``.

    Each mode/channel pair is integrated in closed form; a mode decay equal to
    a channel rate produces the ``t^{k+1}`` resonance term.
    """
    d = _diag(M)
    sigma = -d
    terms = []
    for ch in channels:
        amp = ch.column * ch.scale
        if amp.dtype != object:
            amp = extended(amp)
        nz = _complex(amp) != 0
        for s in np.unique(sigma[nz]):
            mask = nz & (sigma == s)
            terms += solve_forced_decay(s, np.where(mask, amp, 0), ch.rate, ch.power, resonance_tol)
    return DeformationLevel(order, ExpSum(terms), len(d))


@dataclass
class Hierarchy:
    levels: list[DeformationLevel]
    channels: list[list[ForcingChannel]]
    forcings: list[ExpSum]


@_extended_precision
def build_hierarchy(M: np.ndarray, c0: CoeffVector, bilinear: Bilinear,
                    config: HamConfig) -> Hierarchy:
    """Orders ``0..config.order`` with their forcings and channels."""
    levels = [solve_order_zero(M, c0)]
    channels: list[list[ForcingChannel]] = [[]]
    forcings: list[ExpSum] = [ExpSum()]
    for m in range(1, config.order + 1):
        f = forcing(m, levels, M, bilinear, config)
        ch = extract_channels(f)
        forcings.append(f)
        channels.append(ch)
        levels.append(solve_order_m(M, ch, m))
    return Hierarchy(levels, channels, forcings)


# --- lifted system ---------------------------------------------------------

@dataclass(frozen=True)
class Block:
    kind: str  # "u" or "z"
    order: int
    start: int
    stop: int

    @property
    def slice(self) -> slice:
        return slice(self.start, self.stop)

    @property
    def size(self) -> int:
        return self.stop - self.start


@dataclass
class LiftedSystem:
    A: np.ndarray
    layout: list[Block]
    y0: np.ndarray
    mode_set: ModeSet | None = None
    n_fields: int = 1
    channels: list[list[ForcingChannel]] = field(default_factory=list, repr=False)

    @property
    def y0_norm(self) -> float:
        return float(np.linalg.norm(self.y0))

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    @property
    def order(self) -> int:
        return max(b.order for b in self.layout if b.kind == "u")

    def u_block(self, m: int) -> Block:
        for b in self.layout:
            if b.kind == "u" and b.order == m:
                return b
        raise KeyError(f"no u block for order {m}")

    def order_slices(self, y: np.ndarray) -> list[np.ndarray]:
        y = np.asarray(y)
        if y.shape != (self.dim,):
            raise ValueError(f"lifted vector has shape {y.shape}, expected ({self.dim},)")
        return [y[b.slice] for b in self.layout if b.kind == "u"]

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "n_fields": self.n_fields,
            "mode_dimension": self.mode_set.dimension if self.mode_set else None,
            "J": self.mode_set.J if self.mode_set else None,
            "layout": [{"kind": b.kind, "order": b.order, "start": b.start, "stop": b.stop}
                       for b in self.layout],
            "channels": [
                [{"order": m, "rate": [ch.rate.real, ch.rate.imag], "power": ch.power,
                  "scale": ch.scale} for ch in chs]
                for m, chs in enumerate(self.channels)
            ],
            "A": [[[float(z.real), float(z.imag)] for z in row] for row in self.A],
            "y0": [[float(z.real), float(z.imag)] for z in self.y0],
            "y0_norm": self.y0_norm,
        }

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1))

    @classmethod
    def from_json(cls, data: dict) -> "LiftedSystem":
        A = np.array([[complex(re, im) for re, im in row] for row in data["A"]])
        y0 = np.array([complex(re, im) for re, im in data["y0"]])
        layout = [Block(b["kind"], b["order"], b["start"], b["stop"]) for b in data["layout"]]
        ms = ModeSet(data["mode_dimension"], data["J"]) if data.get("J") is not None else None
        return cls(A, layout, y0, ms, data.get("n_fields", 1))


def assemble_lifted(M: np.ndarray, channels: Sequence[Sequence[ForcingChannel]],
                    c0: CoeffVector | np.ndarray) -> LiftedSystem:
    """Stack ``[u0 | z1 | u1 | ... | z_m | u_m]`` into one autonomous system.

    ``channels[m]`` holds the order-``m`` channels (``channels[0]`` is ignored).
    A channel of power ``k`` occupies a chain of ``k+1`` auxiliary slots with
    unit subdiagonal, so its last slot carries ``scale t^k/k! e^{-rate t}``.
    """
    d = _diag(M)
    n = len(d)
    v0 = c0.values if isinstance(c0, CoeffVector) else np.asarray(c0, complex)
    order = max(len(channels) - 1, 0)
    layout, pos = [Block("u", 0, 0, n)], n
    for m in range(1, order + 1):
        width = sum(ch.width for ch in channels[m])
        layout.append(Block("z", m, pos, pos + width))
        pos += width
        layout.append(Block("u", m, pos, pos + n))
        pos += n
    D = pos
    A = np.zeros((D, D), dtype=complex)
    y0 = np.zeros(D, dtype=complex)
    for b in layout:
        if b.kind == "u":
            A[b.slice, b.slice] = np.diag(d)
    y0[:n] = v0
    for m in range(1, order + 1):
        zb = next(b for b in layout if b.kind == "z" and b.order == m)
        ub = next(b for b in layout if b.kind == "u" and b.order == m)
        p = zb.start
        for ch in channels[m]:
            for i in range(ch.width):
                A[p + i, p + i] = -ch.rate
                if i:
                    A[p + i, p + i - 1] = 1.0
            y0[p] = ch.scale
            A[ub.slice, p + ch.power] = math.factorial(ch.power) * ch.coupling
            p += ch.width
        assert p == zb.stop, "auxiliary block bookkeeping mismatch"
    ms = c0.mode_set if isinstance(c0, CoeffVector) else None
    nf = c0.n_fields if isinstance(c0, CoeffVector) else 1
    return LiftedSystem(A, layout, y0, ms, nf, [list(c) for c in channels])


def classical_solution(system: LiftedSystem, t: float) -> np.ndarray:
    """``y(t) = e^{A t} y(0)``."""
    if t < 0:
        raise ValueError("t must be non-negative")
    if t == 0:
        return system.y0.copy()
    return expm(system.A * t) @ system.y0


def sum_series(y: np.ndarray, system: LiftedSystem) -> CoeffVector | np.ndarray:
    """Homotopy series at ``q = 1``: the sum of all order slices of ``y``."""
    total = np.sum(system.order_slices(y), axis=0)
    if system.mode_set is None:
        return total
    return CoeffVector(system.mode_set, system.n_fields, total)


def lift_problem(problem: ProblemDef, mode_set: ModeSet, c0: CoeffVector,
                 config: HamConfig) -> tuple[LiftedSystem, Hierarchy]:
    from .spectral import linear_matrix

    M = linear_matrix(problem, mode_set)
    hier = build_hierarchy(M, c0, bilinear_for(problem, mode_set), config)
    return assemble_lifted(M, hier.channels, c0), hier
