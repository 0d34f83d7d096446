"""Classical references: matrix exponential, Duhamel quadrature, grid solvers
for Burgers (finite differences) and reduced MHD (pseudo-spectral), grid
evaluation of spectral coefficients, and error metrics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg

from .expsum import ExpSum
from .spectral import CoeffVector, ICTerm


class QuadratureError(RuntimeError):
    pass


class CFLError(ValueError):
    pass


class InstabilityError(RuntimeError):
    pass


# --- matrix exponential ----------------------------------------------------

def expm(A: np.ndarray) -> np.ndarray:
    """``e^A`` by Pade scaling and squaring."""
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expm needs a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("expm input has non-finite entries")
    return scipy.linalg.expm(A)


def taylor_expm(A: np.ndarray, terms: int = 60) -> np.ndarray:
    """Truncated Taylor series of ``e^A``; only sensible for small ``||A||``."""
    A = np.asarray(A, dtype=complex)
    out = np.eye(A.shape[0], dtype=complex)
    term = np.eye(A.shape[0], dtype=complex)
    for k in range(1, terms + 1):
        term = term @ A / k
        out = out + term
    return out


# --- Duhamel quadrature ----------------------------------------------------

_GL_X, _GL_W = np.polynomial.legendre.leggauss(20)


def _gl_panel(fn, a: float, b: float) -> np.ndarray:
    half, mid = 0.5 * (b - a), 0.5 * (b + a)
    total = 0.0
    for x, w in zip(_GL_X, _GL_W):
        total = total + w * fn(mid + half * x)
    return half * total


def adaptive_gauss_legendre(fn, a: float, b: float, tol: float = 1e-11,
                            max_depth: int = 30) -> np.ndarray:
    """Adaptive bisection with a 20-point Gauss-Legendre rule per panel.

    ``fn`` may return an array; convergence is measured in the max norm.
    """
    if b == a:
        return np.asarray(fn(a)) * 0.0

    def rec(lo, hi, whole, depth, tol_here):
        mid = 0.5 * (lo + hi)
        left, right = _gl_panel(fn, lo, mid), _gl_panel(fn, mid, hi)
        err = np.max(np.abs(left + right - whole))
        if err <= tol_here:
            return left + right
        if depth >= max_depth:
            raise QuadratureError(f"quadrature did not converge on [{lo}, {hi}] (err {err:.3g})")
        return rec(lo, mid, left, depth + 1, tol_here / 2) + rec(mid, hi, right, depth + 1, tol_here / 2)

    return rec(a, b, _gl_panel(fn, a, b), 0, tol)


def duhamel_quadrature(M: np.ndarray, f: ExpSum, T: float, tol: float = 1e-11) -> np.ndarray:
    """``int_0^T e^{M (T-s)} f(s) ds`` for diagonal ``M`` and exponential-sum forcing."""
    if T < 0:
        raise ValueError("T must be non-negative")
    d = np.diag(np.asarray(M)).astype(complex)
    if not f:
        return np.zeros(len(d), dtype=complex)

    def integrand(s):
        return np.exp(d * (T - s)) * f.eval(s)

    return np.asarray(adaptive_gauss_legendre(integrand, 0.0, float(T), tol), dtype=complex)


# --- grids -----------------------------------------------------------------

@dataclass(frozen=True)
class PeriodicGrid:
    nx: int
    ny: int | None = None

    def __post_init__(self):
        for n in (self.nx, self.ny):
            if n is None:
                continue
            if n < 64 or n & (n - 1):
                raise ValueError(f"grid size must be a power of two >= 64, got {n}")

    @property
    def dimension(self) -> int:
        return 1 if self.ny is None else 2

    @property
    def x(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.nx) / self.nx

    @property
    def y(self) -> np.ndarray:
        if self.ny is None:
            raise AttributeError("1-D grid has no y axis")
        return 2 * np.pi * np.arange(self.ny) / self.ny

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.nx,) if self.ny is None else (self.nx, self.ny)

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.shape))

    def mesh(self) -> tuple[np.ndarray, ...]:
        if self.ny is None:
            return (self.x,)
        return tuple(np.meshgrid(self.x, self.y, indexing="ij"))


@dataclass
class GridSolution:
    grid: PeriodicGrid
    fields: dict[str, np.ndarray]
    time: float
    imag_residual: float = 0.0

    def __post_init__(self):
        for name, v in self.fields.items():
            if v.shape != self.grid.shape:
                raise ValueError(f"field {name} has shape {v.shape}, grid is {self.grid.shape}")
            if not np.all(np.isfinite(v)):
                raise ValueError(f"field {name} has non-finite values")

    def to_csv(self, path: str | Path) -> None:
        path = Path(path)
        names = list(self.fields)
        coords = ["x"] if self.grid.dimension == 1 else ["x", "y"]
        mesh = [m.ravel() for m in self.grid.mesh()]
        cols = [self.fields[n].ravel() for n in names]
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            fh.write(f"# T={self.time!r} nodes={self.grid.n_nodes} shape={self.grid.shape}\n")
            w.writerow(coords + names)
            for i in range(self.grid.n_nodes):
                w.writerow([_fmt(m[i]) for m in mesh] + [_fmt(c[i]) for c in cols])


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _ic_on_grid(grid: PeriodicGrid, terms: Sequence[ICTerm], n_fields: int) -> list[np.ndarray]:
    mesh = grid.mesh()
    out = [np.zeros(grid.shape) for _ in range(n_fields)]
    for t in terms:
        phase = sum(k * m for k, m in zip(t.wavevector, mesh))
        out[t.field] += t.amplitude * (np.sin(phase) if t.kind == "sin" else np.cos(phase))
    return out


def evaluate_on_grid(c: CoeffVector, grid: PeriodicGrid, names: Sequence[str] | None = None,
                     time: float = 0.0) -> GridSolution:
    """Real part of ``sum_j c_j e^{i j.x}`` at the nodes; the largest imaginary
    part is kept as a conjugate-symmetry diagnostic."""
    ms = c.mode_set
    if ms.dimension != grid.dimension:
        raise ValueError("grid and mode set dimensions differ")
    names = list(names) if names else [f"f{i}" for i in range(c.n_fields)]
    mesh = grid.mesh()
    phase = np.exp(1j * sum(np.multiply.outer(m, ms.modes[:, i]) for i, m in enumerate(mesh)))
    fields, resid = {}, 0.0
    for i, name in enumerate(names):
        vals = phase @ c.field(i)
        resid = max(resid, float(np.max(np.abs(vals.imag))))
        fields[name] = vals.real.copy()
    return GridSolution(grid, fields, time, resid)


# --- Burgers finite differences --------------------------------------------

def _rk4(rhs, u, dt, n_steps, check=None):
    for _ in range(n_steps):
        k1 = rhs(u)
        k2 = rhs(u + 0.5 * dt * k1)
        k3 = rhs(u + 0.5 * dt * k2)
        k4 = rhs(u + dt * k3)
        u = u + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if check is not None:
            check(u)
    return u


def fdm_burgers(u0: Sequence[ICTerm], nu: float, T: float, nx: int = 256,
                dt_ref: float = 1e-4) -> GridSolution:
    """Periodic Burgers by 2nd-order central differences and classical RK4.

    Advection is written in conservative form ``-(u^2/2)_x``.
    """
    if not nu > 0:
        raise ValueError("viscosity must be positive")
    grid = PeriodicGrid(nx)
    h = 2 * np.pi / nx
    (u,) = _ic_on_grid(grid, u0, 1)
    n_steps = max(1, math.ceil(T / dt_ref - 1e-9)) if T > 0 else 0
    dt = T / n_steps if n_steps else 0.0
    umax = float(np.max(np.abs(u)))
    if n_steps and (nu * dt / h**2 > 0.5 or umax * dt / h > 1.0):
        raise CFLError(
            f"dt={dt:.3g} too large for nx={nx}: diffusion number {nu * dt / h**2:.3g}, "
            f"Courant number {umax * dt / h:.3g}"
        )

    def rhs(v):
        vp, vm = np.roll(v, -1), np.roll(v, 1)
        return nu * (vp - 2 * v + vm) / h**2 - (vp**2 - vm**2) / (4 * h)

    u = _rk4(rhs, u, dt, n_steps)
    return GridSolution(grid, {"u": u}, T)


# --- reduced MHD pseudo-spectral -------------------------------------------

def psm_mhd(omega0: Sequence[ICTerm], xi0: Sequence[ICTerm], nu: float, eta: float, T: float,
            nx: int = 64, ny: int = 64, dt_ref: float = 1e-3, nonlinear: bool = True) -> GridSolution:
    """Reduced MHD by Fourier collocation with 2/3-rule dealiasing and RK4.

    Brackets are evaluated pointwise on the grid; ``phi`` has zero mean.
    """
    if not (nu > 0 and eta > 0):
        raise ValueError("viscosity and resistivity must be positive")
    grid = PeriodicGrid(nx, ny)
    (w,) = _ic_on_grid(grid, [ICTerm(t.amplitude, t.kind, t.wavevector) for t in omega0], 1)
    (x,) = _ic_on_grid(grid, [ICTerm(t.amplitude, t.kind, t.wavevector) for t in xi0], 1)

    kx = np.fft.fftfreq(nx, 1.0 / nx)[:, None] * np.ones((1, ny))
    ky = np.fft.fftfreq(ny, 1.0 / ny)[None, :] * np.ones((nx, 1))
    k2 = kx**2 + ky**2
    inv_k2 = np.where(k2 == 0, 0.0, 1.0 / np.where(k2 == 0, 1.0, k2))
    dealias = (np.abs(kx) < nx / 3.0) & (np.abs(ky) < ny / 3.0)

    def ddx(fh):
        return np.fft.ifft2(1j * kx * fh).real

    def ddy(fh):
        return np.fft.ifft2(1j * ky * fh).real

    def bracket(fh, gh):
        return np.fft.fft2(ddx(fh) * ddy(gh) - ddy(fh) * ddx(gh)) * dealias

    def rhs(state):
        wh, xh = state
        out_w = -nu * k2 * wh
        out_x = -eta * k2 * xh
        if nonlinear:
            ph = -wh * inv_k2
            zh = k2 * xh
            out_w = out_w - bracket(ph, wh) + bracket(xh, zh)
            out_x = out_x - bracket(ph, xh)
        return np.array([out_w, out_x])

    state = np.array([np.fft.fft2(w), np.fft.fft2(x)])
    n0 = float(np.max(np.abs(state)))
    n_steps = max(1, math.ceil(T / dt_ref - 1e-9)) if T > 0 else 0
    dt = T / n_steps if n_steps else 0.0

    def check(s):
        m = float(np.max(np.abs(s)))
        if not np.isfinite(m) or m > 1e6 * max(n0, 1.0):
            raise InstabilityError(f"field norm blew up to {m:.3g}")

    state = _rk4(rhs, state, dt, n_steps, check)
    w = np.fft.ifft2(state[0]).real
    x = np.fft.ifft2(state[1]).real
    return GridSolution(grid, {"omega": w, "xi": x}, T)


# --- error metrics ---------------------------------------------------------

@dataclass
class ErrorReport:
    rms: float
    rel_l2: float
    combined_rel_l2: float | None = None
    per_field: dict[str, dict[str, float]] = field(default_factory=dict)
    difference: dict[str, np.ndarray] = field(default_factory=dict, repr=False)
    n_nodes: int = 0

    def rows(self) -> list[tuple[str, float]]:
        out = [("rms", self.rms), ("rel_l2", self.rel_l2)]
        if self.combined_rel_l2 is not None:
            out.append(("combined_rel_l2", self.combined_rel_l2))
        for name, m in self.per_field.items():
            out += [(f"rms_{name}", m["rms"]), (f"rel_l2_{name}", m["rel_l2"])]
        return out

    def to_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            fh.write(f"# nodes={self.n_nodes}\n")
            w = csv.writer(fh)
            w.writerow(["metric", "value"])
            for k, v in self.rows():
                w.writerow([k, _fmt(v)])


def error_metrics(lham: GridSolution, ref: GridSolution) -> ErrorReport:
    """RMS and relative L2 errors of ``lham`` against ``ref`` per field,
    plus the combined relative L2 error when there is more than one field.

    The signed difference ``lham - ref`` is kept per field.
    """
    if lham.grid != ref.grid:
        raise ValueError("solutions live on different grids")
    if set(lham.fields) != set(ref.fields):
        raise ValueError("solutions carry different fields")
    n = ref.grid.n_nodes
    per, diff = {}, {}
    num_tot = den_tot = 0.0
    for name in ref.fields:
        d = lham.fields[name] - ref.fields[name]
        num, den = float(np.sum(d**2)), float(np.sum(ref.fields[name] ** 2))
        per[name] = {"rms": math.sqrt(num / n), "rel_l2": math.sqrt(num / den) if den else math.inf}
        diff[name] = d
        num_tot += num
        den_tot += den
    if len(per) == 1:
        (m,) = per.values()
        return ErrorReport(m["rms"], m["rel_l2"], None, per, diff, n)
    comb = math.sqrt(num_tot / den_tot) if den_tot else math.inf
    rms = math.sqrt(num_tot / (n * len(per)))
    return ErrorReport(rms, comb, comb, per, diff, n)
