"""Finite sums of terms ``a * t**k * exp(-lam * t)``.

Amplitudes may be complex scalars or complex numpy arrays of a common shape,
so the same container carries a single time profile or a whole coefficient
vector whose entries share the exponential time dependence.

Array amplitudes may also be object arrays of ``mpmath.mpc`` (see
:func:`extended`).  Closed-form solutions of forced decays have amplitudes
that grow like ``1/(rate gap)^order`` and cancel strongly at small ``t``;
carrying them at :data:`EXTENDED_DPS` digits keeps evaluated values accurate
to double precision.  Evaluation always returns ordinary complex numbers.
"""

from __future__ import annotations

import math
import operator
from typing import Callable, Iterable, Union

import mpmath
import numpy as np

Amplitude = Union[complex, np.ndarray]

# Relative tolerances used when normalizing a sum.
RATE_TOL = 1e-12
AMP_TOL = 1e-14
# Working precision (decimal digits) for extended amplitudes.
EXTENDED_DPS = 34


def extended(values) -> np.ndarray:
    """Object array of ``mpmath.mpc`` holding ``values`` exactly."""
    v = np.asarray(values, dtype=complex)
    out = np.empty(v.shape, dtype=object)
    for i, z in np.ndenumerate(v):
        out[i] = mpmath.mpc(z.real, z.imag)
    return out


def _is_extended(a) -> bool:
    return isinstance(a, np.ndarray) and a.dtype == object


def _mag(a: Amplitude) -> float:
    return float(np.max(np.abs(a))) if np.ndim(a) else abs(a)


def _same_rate(l1: complex, l2: complex, tol: float = RATE_TOL) -> bool:
    return abs(l1 - l2) <= tol * max(1.0, abs(l1), abs(l2))


class ExpSum:
    """Immutable exponential sum with terms ``(amplitude, rate, power)``.

    Terms sharing ``(rate, power)`` are merged on construction and terms whose
    amplitude is negligible relative to the largest one are dropped.
    Array amplitudes additionally have negligible entries zeroed.
    """

    __slots__ = ("terms",)

    def __init__(self, terms: Iterable[tuple[Amplitude, complex, int]] = ()):
        self.terms: tuple[tuple[Amplitude, complex, int], ...] = _normalize(terms)

    # construction helpers
    @classmethod
    def exp(cls, rate: complex, amplitude: Amplitude = 1.0, power: int = 0) -> "ExpSum":
        return cls([(amplitude, rate, power)])

    @classmethod
    def zero(cls) -> "ExpSum":
        return cls()

    def __repr__(self) -> str:
        parts = []
        for a, lam, k in self.terms:
            amp = f"{a:.6g}" if not np.ndim(a) else f"array{np.shape(a)}"
            parts.append(f"{amp}*t^{k}*exp(-{lam:.6g} t)")
        return "ExpSum(" + " + ".join(parts) + ")"

    def __len__(self) -> int:
        return len(self.terms)

    def __bool__(self) -> bool:
        return bool(self.terms)

    @property
    def rates(self) -> list[tuple[complex, int]]:
        return [(lam, k) for _, lam, k in self.terms]

    # ring operations
    def __add__(self, other: "ExpSum") -> "ExpSum":
        if not isinstance(other, ExpSum):
            return NotImplemented
        return ExpSum(self.terms + other.terms)

    def __neg__(self) -> "ExpSum":
        return self.scale(-1.0)

    def __sub__(self, other: "ExpSum") -> "ExpSum":
        return self + (-other)

    def scale(self, alpha) -> "ExpSum":
        return ExpSum((alpha * a, lam, k) for a, lam, k in self.terms)

    def __mul__(self, other):
        if isinstance(other, ExpSum):
            return self.bilinear(other, operator.mul)
        return self.scale(other)

    __rmul__ = __mul__

    def bilinear(self, other: "ExpSum", op: Callable[[Amplitude, Amplitude], Amplitude]) -> "ExpSum":
        """Product of two sums through a bilinear map on the amplitudes.

        Rates add and powers add; ``op`` combines the amplitudes (plain
        multiplication for scalars, a convolution for coefficient vectors).
        """
        out = []
        for a, la, ka in self.terms:
            for b, lb, kb in other.terms:
                out.append((op(a, b), la + lb, ka + kb))
        return ExpSum(out)

    def map(self, fn: Callable[[Amplitude, complex, int], Amplitude]) -> "ExpSum":
        """Apply ``fn(amplitude, rate, power)`` to every amplitude."""
        return ExpSum((fn(a, lam, k), lam, k) for a, lam, k in self.terms)

    def shift_rate(self, delta: complex) -> "ExpSum":
        """Multiply by ``exp(-delta t)``."""
        return ExpSum((a, lam + delta, k) for a, lam, k in self.terms)

    def derivative(self) -> "ExpSum":
        out = []
        for a, lam, k in self.terms:
            out.append((-lam * a, lam, k))
            if k > 0:
                out.append((k * a, lam, k - 1))
        return ExpSum(out)

    # evaluation
    def __call__(self, t):
        return self.eval(t)

    def eval(self, t):
        """Evaluate at scalar time ``t``; for array amplitudes returns an array."""
        if not self.terms:
            return 0.0 + 0.0j
        if any(_is_extended(a) for a, _, _ in self.terms):
            return self._eval_extended(t)
        total: Amplitude = 0.0
        for a, lam, k in self.terms:
            total = total + a * (t**k) * np.exp(-lam * t)
        return total

    def _eval_extended(self, t) -> np.ndarray:
        with mpmath.workdps(EXTENDED_DPS):
            tt = mpmath.mpf(float(t))
            total = 0
            for a, lam, k in self.terms:
                total = total + a * (tt**k * mpmath.exp(-mpmath.mpc(lam.real, lam.imag) * tt))
            return np.asarray(total, dtype=complex)

    def entry(self, index) -> "ExpSum":
        """Scalar ExpSum of one entry of an array-valued sum."""
        return ExpSum((complex(np.asarray(a)[index]), lam, k) for a, lam, k in self.terms)

    def max_amplitude(self) -> float:
        return max((_mag(a) for a, _, _ in self.terms), default=0.0)


def _normalize(terms: Iterable[tuple[Amplitude, complex, int]]) -> tuple:
    merged: list[list] = []
    for a, lam, k in terms:
        k = int(k)
        if k < 0:
            raise ValueError(f"negative power {k}")
        lam = complex(lam)
        if np.ndim(a):
            a = a if _is_extended(a) else np.asarray(a, dtype=complex)
        else:
            a = complex(a)
        for slot in merged:
            if slot[2] == k and _same_rate(slot[1], lam):
                slot[0] = slot[0] + a
                break
        else:
            merged.append([a.copy() if np.ndim(a) else a, lam, k])
    if not merged:
        return ()
    scale = max(_mag(s[0]) for s in merged)
    if scale == 0.0:
        return ()
    cut = AMP_TOL * scale
    out = []
    for a, lam, k in merged:
        if _mag(a) <= cut:
            continue
        if np.ndim(a):
            a = np.where(np.abs(a) <= cut, 0.0, a)
        out.append((a, lam, k))
    out.sort(key=lambda s: (s[1].real, s[1].imag, s[2]))
    return tuple(out)


def solve_forced_decay(sigma: complex, amp: Amplitude, lam: complex, k: int,
                       resonance_tol: float = 1e-9) -> list[tuple[Amplitude, complex, int]]:
    """Terms of the solution of ``c' = -sigma c + amp t^k e^{-lam t}``, ``c(0) = 0``.

    For ``sigma != lam`` the integral ``int_0^t e^{-sigma(t-s)} s^k e^{-lam s} ds``
    is expanded in closed form; at resonance it is ``t^{k+1}/(k+1) e^{-lam t}``.
    Extended amplitudes get extended-precision coefficients.
    """
    sigma, lam = complex(sigma), complex(lam)
    delta = sigma - lam
    if abs(delta) <= resonance_tol * max(abs(sigma), abs(lam)) or delta == 0:
        return [(amp / (k + 1), lam, k + 1)]
    if _is_extended(amp):
        with mpmath.workdps(EXTENDED_DPS):
            d = mpmath.mpc(sigma.real, sigma.imag) - mpmath.mpc(lam.real, lam.imag)
            return _decay_terms(amp, sigma, lam, k, d)
    return _decay_terms(amp, sigma, lam, k, delta)


def _decay_terms(amp, sigma, lam, k, delta):
    terms = []
    fk = math.factorial(k)
    for p in range(k + 1):
        coef = (-1) ** p * fk / math.factorial(k - p) / delta ** (p + 1)
        terms.append((amp * coef, lam, k - p))
    terms.append((-amp * ((-1) ** k * fk / delta ** (k + 1)), sigma, 0))
    return terms
