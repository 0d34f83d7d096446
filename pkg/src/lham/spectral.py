"""Fourier-Galerkin projection of periodic Burgers and reduced MHD.

Fields live on ``[0, 2pi)^d`` and are expanded in ``exp(i j.x)`` with
``|j_x|, |j_y| <= J``.  Modes are stored in lexicographic order, so a 2-D
coefficient array reshapes to ``(2J+1, 2J+1)`` indexed ``[jx + J, jy + J]``.
Multi-field vectors are stored field-major: ``[field0 modes | field1 modes]``.
"""

from __future__ import annotations

import functools
import itertools
import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class ModeSetMismatch(ValueError):
    pass


@dataclass(frozen=True)
class ModeSet:
    dimension: int
    J: int
    modes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.dimension}")
        if self.J < 0:
            raise ValueError(f"truncation must be non-negative, got {self.J}")
        r = range(-self.J, self.J + 1)
        modes = np.array(list(itertools.product(r, repeat=self.dimension)), dtype=int)
        object.__setattr__(self, "modes", modes)

    def __len__(self) -> int:
        return len(self.modes)

    @property
    def side(self) -> int:
        return 2 * self.J + 1

    @property
    def k2(self) -> np.ndarray:
        """Squared wavenumber magnitude per mode."""
        return np.sum(self.modes**2, axis=1)

    def index(self, j: Sequence[int] | int) -> int:
        j = (j,) if np.isscalar(j) else tuple(j)
        if len(j) != self.dimension:
            raise ValueError(f"mode {j} has wrong dimension for {self.dimension}-D set")
        if any(abs(x) > self.J for x in j):
            raise KeyError(f"mode {j} outside truncation J={self.J}")
        idx = 0
        for x in j:
            idx = idx * self.side + (x + self.J)
        return idx

    def grid_shape(self) -> tuple[int, ...]:
        return (self.side,) * self.dimension


@dataclass(frozen=True)
class CoeffVector:
    mode_set: ModeSet
    n_fields: int
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != (self.n_fields * len(self.mode_set),):
            raise ValueError(
                f"expected {self.n_fields * len(self.mode_set)} coefficients, got shape {v.shape}"
            )
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, mode_set: ModeSet, n_fields: int = 1) -> "CoeffVector":
        return cls(mode_set, n_fields, np.zeros(n_fields * len(mode_set), dtype=complex))

    def field(self, i: int) -> np.ndarray:
        n = len(self.mode_set)
        return self.values[i * n:(i + 1) * n]

    def at(self, j, field: int = 0) -> complex:
        return complex(self.values[field * len(self.mode_set) + self.mode_set.index(j)])

    def conjugate_symmetry_residual(self) -> float:
        """``max |c_{-j} - conj(c_j)|`` over fields and modes."""
        n = len(self.mode_set)
        flip = np.array([self.mode_set.index(tuple(-m)) for m in self.mode_set.modes])
        res = 0.0
        for f in range(self.n_fields):
            c = self.values[f * n:(f + 1) * n]
            res = max(res, float(np.max(np.abs(c[flip] - np.conj(c)), initial=0.0)))
        return res

    def __add__(self, other: "CoeffVector") -> "CoeffVector":
        _check_same(self, other)
        return CoeffVector(self.mode_set, self.n_fields, self.values + other.values)

    def __mul__(self, alpha) -> "CoeffVector":
        return CoeffVector(self.mode_set, self.n_fields, alpha * self.values)

    __rmul__ = __mul__


@dataclass(frozen=True)
class ProblemDef:
    kind: str
    nu: float
    eta: float | None = None

    def __post_init__(self):
        if self.kind not in ("burgers", "mhd"):
            raise ValueError(f"unknown problem kind {self.kind!r}")
        if not self.nu > 0:
            raise ValueError(f"viscosity must be positive, got {self.nu}")
        if self.kind == "mhd" and (self.eta is None or not self.eta > 0):
            raise ValueError(f"resistivity must be positive for MHD, got {self.eta}")

    @property
    def dimension(self) -> int:
        return 1 if self.kind == "burgers" else 2

    @property
    def n_fields(self) -> int:
        return 1 if self.kind == "burgers" else 2

    @property
    def field_names(self) -> tuple[str, ...]:
        return ("u",) if self.kind == "burgers" else ("omega", "xi")


# --- initial-condition DSL -------------------------------------------------

@dataclass(frozen=True)
class ICTerm:
    """``amplitude * sin(k.x)`` or ``amplitude * cos(k.x)`` on one field."""

    amplitude: float
    kind: str
    wavevector: tuple[int, ...]
    field: int = 0

    def __post_init__(self):
        if self.kind not in ("sin", "cos"):
            raise ValueError(f"IC term kind must be sin or cos, got {self.kind!r}")


_TERM_RE = re.compile(
    r"""\s*(?P<sign>[+-])?\s*
        (?:(?P<amp>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)\s*\*?\s*)?
        (?P<kind>sin|cos)\s*\(\s*(?P<k>-?\d+(?:\s*,\s*-?\d+)*)\s*\)\s*""",
    re.VERBOSE,
)


def parse_ic(text: str, field: int = 0) -> list[ICTerm]:
    """Parse ``"sin(1) + 0.5*sin(1,-1) - 2e-1 cos(0,1)"`` into IC terms.

    Wavevectors are integer tuples in parentheses; ``"0"`` denotes a zero field.
    """
    text = text.strip()
    if text in ("", "0"):
        return []
    terms, pos = [], 0
    while pos < len(text):
        m = _TERM_RE.match(text, pos)
        if not m or m.end() == pos:
            raise ValueError(f"cannot parse initial condition near {text[pos:]!r}")
        amp = float(m["amp"]) if m["amp"] else 1.0
        if m["sign"] == "-":
            amp = -amp
        k = tuple(int(x) for x in m["k"].split(","))
        terms.append(ICTerm(amp, m["kind"], k, field))
        pos = m.end()
    return terms


def format_ic(terms: Sequence[ICTerm]) -> str:
    if not terms:
        return "0"
    parts = []
    for t in terms:
        k = ",".join(str(x) for x in t.wavevector)
        parts.append(f"{t.amplitude!r}*{t.kind}({k})")
    return " + ".join(parts).replace("+ -", "- ")


def project_initial(problem: ProblemDef, mode_set: ModeSet, ic: Sequence[ICTerm]) -> CoeffVector:
    """Exact Fourier coefficients of a finite sin/cos initial condition."""
    if mode_set.dimension != problem.dimension:
        raise ModeSetMismatch("mode set dimension does not match the problem")
    n = len(mode_set)
    c = np.zeros(problem.n_fields * n, dtype=complex)
    for term in ic:
        if len(term.wavevector) != mode_set.dimension:
            raise ValueError(f"term {term} has wrong wavevector dimension")
        if not 0 <= term.field < problem.n_fields:
            raise ValueError(f"term {term} targets a missing field")
        if any(abs(x) > mode_set.J for x in term.wavevector):
            raise ValueError(f"term {term} has a wavenumber outside the truncation J={mode_set.J}")
        k = term.wavevector
        mk = tuple(-x for x in k)
        off = term.field * n
        if all(x == 0 for x in k):
            if term.kind == "cos":
                c[off + mode_set.index(k)] += term.amplitude
            continue
        if term.kind == "sin":
            c[off + mode_set.index(k)] += -0.5j * term.amplitude
            c[off + mode_set.index(mk)] += 0.5j * term.amplitude
        else:
            c[off + mode_set.index(k)] += 0.5 * term.amplitude
            c[off + mode_set.index(mk)] += 0.5 * term.amplitude
    return CoeffVector(mode_set, problem.n_fields, c)


def linear_matrix(problem: ProblemDef, mode_set: ModeSet) -> np.ndarray:
    """Diagonal Galerkin matrix of the diffusion operator(s)."""
    k2 = mode_set.k2.astype(float)
    if problem.kind == "burgers":
        d = -problem.nu * k2
    else:
        d = np.concatenate([-problem.nu * k2, -problem.eta * k2])
    return np.diag(d.astype(complex))


# --- truncated convolutions ------------------------------------------------

@functools.lru_cache(maxsize=None)
def _pair_table(dimension: int, J: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Index triples ``(p, q, p+q)`` over mode pairs whose sum stays in the truncation."""
    ms = ModeSet(dimension, J)
    sums = ms.modes[:, None, :] + ms.modes[None, :, :]
    ok = np.all(np.abs(sums) <= J, axis=-1)
    p, q = np.nonzero(ok)
    out = np.zeros(len(p), dtype=int)
    for axis in range(dimension):
        out = out * ms.side + (sums[p, q, axis] + J)
    return p, q, out


def _amp(a) -> np.ndarray:
    """Coefficient array as complex, or untouched if it holds extended-precision objects."""
    a = np.asarray(a)
    return a if a.dtype == object else a.astype(complex)


def _conv_trunc(mode_set: ModeSet, f: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Truncated Cauchy product ``sum_{p+q=j} f_p g_q`` for every mode ``j``."""
    p, q, out = _pair_table(mode_set.dimension, mode_set.J)
    res = np.zeros(len(mode_set), dtype=np.result_type(f, g))
    np.add.at(res, out, f[p] * g[q])
    return res


def burgers_bilinear(mode_set: ModeSet, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``N_j = -sum_{p+q=j} (i q) a_p b_q`` (advection ``-u_a d/dx u_b``)."""
    q = mode_set.modes[:, 0]
    return -_conv_trunc(mode_set, _amp(a), 1j * q * _amp(b))


def _bracket(mode_set: ModeSet, f: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Coefficients of ``f_x g_y - f_y g_x`` = ``-sum (a_x b_y - a_y b_x) f_a g_b``."""
    kx, ky = mode_set.modes[:, 0], mode_set.modes[:, 1]
    return -(_conv_trunc(mode_set, kx * f, ky * g) - _conv_trunc(mode_set, ky * f, kx * g))


def stream_function(mode_set: ModeSet, omega: np.ndarray) -> np.ndarray:
    """``phi`` with ``laplacian(phi) = omega`` and zero mean."""
    k2 = mode_set.k2
    omega = _amp(omega)
    phi = omega * 0
    nz = k2 != 0
    phi[nz] = -omega[nz] / k2[nz]
    return phi


def mhd_bilinear(mode_set: ModeSet, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Reduced-MHD bilinear term on stacked ``(omega, xi)`` coefficient arrays.

    ``N(a, b) = (-{phi_a, omega_b} + {xi_a, zeta_b}, -{phi_a, xi_b})`` with
    ``{f, g} = f_x g_y - f_y g_x``, ``phi = lap^{-1} omega``, ``zeta = -lap xi``.
    """
    n = len(mode_set)
    a, b = _amp(a), _amp(b)
    om_a, xi_a = a[:n], a[n:]
    om_b, xi_b = b[:n], b[n:]
    phi_a = stream_function(mode_set, om_a)
    zeta_b = mode_set.k2 * xi_b
    n_om = -_bracket(mode_set, phi_a, om_b) + _bracket(mode_set, xi_a, zeta_b)
    n_xi = -_bracket(mode_set, phi_a, xi_b)
    return np.concatenate([n_om, n_xi])


def _check_same(a: CoeffVector, b: CoeffVector):
    if a.mode_set != b.mode_set or a.n_fields != b.n_fields:
        raise ModeSetMismatch("coefficient vectors live on different mode sets")


def burgers_nonlinear(a: CoeffVector, b: CoeffVector) -> CoeffVector:
    _check_same(a, b)
    if a.mode_set.dimension != 1 or a.n_fields != 1:
        raise ModeSetMismatch("Burgers convolution needs a single 1-D field")
    return CoeffVector(a.mode_set, 1, burgers_bilinear(a.mode_set, a.values, b.values))


def mhd_nonlinear(a: CoeffVector, b: CoeffVector) -> CoeffVector:
    _check_same(a, b)
    if a.mode_set.dimension != 2 or a.n_fields != 2:
        raise ModeSetMismatch("MHD brackets need two fields on a 2-D mode set")
    return CoeffVector(a.mode_set, 2, mhd_bilinear(a.mode_set, a.values, b.values))


def bilinear_for(problem: ProblemDef, mode_set: ModeSet):
    """Raw-array bilinear map ``(a, b) -> N(a, b)`` for the problem."""
    if problem.kind == "burgers":
        return lambda a, b: burgers_bilinear(mode_set, a, b)
    return lambda a, b: mhd_bilinear(mode_set, a, b)
