"""Lindblad embedding of a linear system, CPTP step channels and observable readout.

The doubled space is ordered ancilla (x) system, so a ``2D x 2D`` density matrix
has blocks ``rho[:D, :D] = rho_00``, ``rho[:D, D:] = rho_01`` and so on.
Vectorization is column stacking: ``vec(rho)[i + n*j] = rho[i, j]``.

Because ``H`` and ``F`` live only in the ancilla-0 sector, one step acts
block-wise::

    rho_00 -> E_D(rho_00)      (D-dimensional Lindblad channel)
    rho_01 -> G rho_01         (G = exp(A_shift dt))
    rho_10 -> rho_10 G^dagger
    rho_11 -> rho_11

:class:`StepChannel` stores ``E_D`` and ``G`` instead of the full
``(2D)^2 x (2D)^2`` superoperator, and derives its Kraus set from the Choi
matrix restricted to its ``D^2 + 1`` dimensional support.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from .reference import expm

REALIZATIONS = ("superop", "kraus", "stinespring")


class IsometryError(RuntimeError):
    """The Stinespring operator built from a Kraus set is not an isometry."""


class ShiftOverflowError(OverflowError):
    """``exp(gamma T)`` would overflow double precision."""


def _herm(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.conj().T)


def _psd_sqrt(M: np.ndarray) -> np.ndarray:
    w, U = np.linalg.eigh(_herm(M))
    w = np.clip(w, 0.0, None)
    return (U * np.sqrt(w)) @ U.conj().T


def _vec(M: np.ndarray) -> np.ndarray:
    return M.reshape(-1, order="F")


def _unvec(v: np.ndarray, n: int) -> np.ndarray:
    return v.reshape(n, n, order="F")


# --- embedding -------------------------------------------------------------

@dataclass(frozen=True)
class LindbladEmbedding:
    """Shifted generator ``A_shift = A - gamma I = -A1 - i A2`` with ``A1 >= 0``."""

    A: np.ndarray
    gamma: float
    A_shift: np.ndarray
    A1: np.ndarray
    A2: np.ndarray
    sqrt2A1: np.ndarray

    @property
    def D(self) -> int:
        return self.A.shape[0]

    def _pad(self, block: np.ndarray) -> np.ndarray:
        out = np.zeros((2 * self.D, 2 * self.D), dtype=complex)
        out[: self.D, : self.D] = block
        return out

    @property
    def H(self) -> np.ndarray:
        return self._pad(self.A2)

    @property
    def F(self) -> np.ndarray:
        return self._pad(self.sqrt2A1)

    def diagnostics(self) -> dict:
        return {
            "D": self.D,
            "gamma": self.gamma,
            "A1_min_eig": float(np.linalg.eigvalsh(self.A1)[0]),
            "A1_hermiticity": float(np.abs(self.A1 - self.A1.conj().T).max()),
            "A2_hermiticity": float(np.abs(self.A2 - self.A2.conj().T).max()),
            "reconstruction": float(np.abs(-self.A1 - 1j * self.A2 - self.A_shift).max()),
        }


def split_and_shift(A: np.ndarray, extra_shift: float = 0.0) -> LindbladEmbedding:
    """Hermitian split of ``A`` and the minimal shift making the dissipative part PSD.

    ``gamma = max(0, -lambda_min(A1)) + 1e-12 ||A|| + extra_shift``.
    """
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"generator must be square, got shape {A.shape}")
    if extra_shift < 0:
        raise ValueError("extra_shift must be non-negative")
    Ah = A.conj().T
    A1 = _herm(-(A + Ah) / 2)
    A2 = _herm(1j * (A - Ah) / 2)
    lmin = float(np.linalg.eigvalsh(A1)[0])
    norm = float(np.linalg.norm(A, 2)) if A.size else 0.0
    gamma = max(0.0, -lmin) + 1e-12 * norm + extra_shift
    eye = np.eye(A.shape[0])
    A1s = A1 + gamma * eye
    return LindbladEmbedding(A, gamma, A - gamma * eye, A1s, A2, _psd_sqrt(2 * A1s))


def lindbladian_superop(H: np.ndarray, jumps: Sequence[np.ndarray]) -> np.ndarray:
    """Column-stacking generator
    ``-i(I(x)H - H^T(x)I) + sum_k [conj(F)(x)F - (I(x)F^dag F + (F^dag F)^T(x)I)/2]``."""
    n = H.shape[0]
    eye = np.eye(n)
    L = -1j * (np.kron(eye, H) - np.kron(H.T, eye))
    for F in jumps:
        FF = F.conj().T @ F
        L = L + np.kron(F.conj(), F) - 0.5 * (np.kron(eye, FF) + np.kron(FF.T, eye))
    return L


# --- density states --------------------------------------------------------

@dataclass(frozen=True)
class DensityState:
    rho: np.ndarray

    def __post_init__(self):
        rho = np.array(self.rho, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1] or rho.shape[0] % 2:
            raise ValueError(f"density matrix must be square of even size, got {rho.shape}")
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)

    @property
    def D(self) -> int:
        return self.rho.shape[0] // 2

    @property
    def trace(self) -> complex:
        return complex(np.trace(self.rho))

    @property
    def min_eig(self) -> float:
        return float(np.linalg.eigvalsh(_herm(self.rho))[0])

    @property
    def hermiticity(self) -> float:
        return float(np.abs(self.rho - self.rho.conj().T).max())

    def block(self, a: int, b: int) -> np.ndarray:
        D = self.D
        return self.rho[a * D:(a + 1) * D, b * D:(b + 1) * D]


def init_density(y0: np.ndarray) -> DensityState:
    """``|+><+| (x) |y0_hat><y0_hat|`` with ``y0_hat = y0/||y0||``."""
    y0 = np.asarray(y0, dtype=complex)
    n = np.linalg.norm(y0)
    if n == 0:
        raise ValueError("initial lifted vector is zero")
    yh = y0 / n
    plus = np.full((2, 2), 0.5)
    return DensityState(np.kron(plus, np.outer(yh, yh.conj())))


# --- step channel ----------------------------------------------------------

@dataclass
class StepChannel:
    """One-step CPTP map ``exp(L dt)`` of an embedding, in block form.

    ``E_D`` is the column-stacking superoperator on the ancilla-0 block and
    ``G`` the propagator of the coherence block.  ``kraus`` holds full
    ``2D x 2D`` Kraus operators.
    """

    dt: float
    E_D: np.ndarray
    G: np.ndarray
    kraus: np.ndarray
    choi_eigs: np.ndarray
    choi_rank_tol: float
    _isometry_residual: float | None = field(default=None, repr=False)

    @property
    def D(self) -> int:
        return self.G.shape[0]

    @property
    def rank(self) -> int:
        return self.kraus.shape[0]

    @property
    def choi_min_eig(self) -> float:
        # the full Choi matrix is zero off its (D^2+1)-dim support
        return min(float(self.choi_eigs[0]), 0.0)

    def completeness_residual(self) -> float:
        K = self.kraus
        S = np.einsum("rij,rik->jk", K.conj(), K)
        return float(np.abs(S - np.eye(2 * self.D)).max())

    def isometry(self) -> np.ndarray:
        """Stinespring ``V = sum_i |i>_E (x) K_i`` (environment-major rows)."""
        return self.kraus.reshape(self.rank * 2 * self.D, 2 * self.D)

    def isometry_residual(self) -> float:
        if self._isometry_residual is None:
            V = self.isometry()
            self._isometry_residual = float(np.abs(V.conj().T @ V - np.eye(2 * self.D)).max())
        return self._isometry_residual

    def apply_superop(self, rho: np.ndarray) -> np.ndarray:
        D = self.D
        out = np.empty_like(rho, dtype=complex)
        out[:D, :D] = _unvec(self.E_D @ _vec(rho[:D, :D]), D)
        out[:D, D:] = self.G @ rho[:D, D:]
        out[D:, :D] = rho[D:, :D] @ self.G.conj().T
        out[D:, D:] = rho[D:, D:]
        return out

    def apply_kraus(self, rho: np.ndarray) -> np.ndarray:
        K = self.kraus
        return np.einsum("rij,jk,rlk->il", K, rho, K.conj(), optimize=True)

    def apply_stinespring(self, rho: np.ndarray, tol: float = 1e-10) -> np.ndarray:
        res = self.isometry_residual()
        if res > tol:
            raise IsometryError(f"||V^dag V - I||_max = {res:.3g} exceeds {tol:g}")
        n = 2 * self.D
        V = self.isometry()
        W = (V @ rho).reshape(self.rank, n, n)
        Vr = V.reshape(self.rank, n, n)
        # Tr_E(V rho V^dag): environment index contracted, never forming the full product
        return np.einsum("rik,rjk->ij", W, Vr.conj())

    def dense(self, max_dim: int = 64) -> np.ndarray:
        """Full ``(2D)^2 x (2D)^2`` superoperator; only for small embeddings."""
        D, n = self.D, 2 * self.D
        if n > max_dim:
            raise MemoryError(f"dense superoperator of size {n * n} exceeds max_dim={max_dim}")
        S = np.zeros((n * n, n * n), dtype=complex)
        for col in range(n * n):
            E = np.zeros((n, n), dtype=complex)
            E[col % n, col // n] = 1.0
            S[:, col] = _vec(self.apply_superop(E))
        return S

    def diagnostics(self) -> dict:
        return {
            "dt": self.dt,
            "kraus_rank": self.rank,
            "choi_min_eig": self.choi_min_eig,
            "choi_max_eig": float(self.choi_eigs[-1]),
            "choi_rank_tol": self.choi_rank_tol,
            "completeness_residual": self.completeness_residual(),
            "isometry_residual": self.isometry_residual(),
        }


def _reduced_choi(E_D: np.ndarray, G: np.ndarray) -> np.ndarray:
    """Choi matrix on span{|0x>|0x'>} + span{sum_y |1y>|1y>/sqrt(D)}.

    Input index first: ``C[(x, x'), (y, y')] = E_D(|x><y|)[x', y']``.
    """
    D = G.shape[0]
    CD = E_D.reshape(D, D, D, D).transpose(3, 1, 2, 0).reshape(D * D, D * D)
    g = G.T.reshape(-1) * math.sqrt(D)
    C = np.empty((D * D + 1, D * D + 1), dtype=complex)
    C[:-1, :-1] = CD
    C[:-1, -1] = g
    C[-1, :-1] = g.conj()
    C[-1, -1] = D
    return _herm(C)


def build_channel(emb: LindbladEmbedding, dt: float, rank_tol: float = 1e-12) -> StepChannel:
    """Step channel ``exp(L dt)`` with Kraus operators from the Choi eigendecomposition.

    Choi eigenvalues below ``rank_tol * lambda_max`` are dropped.
    """
    if not dt > 0:
        raise ValueError("step size must be positive")
    D = emb.D
    E_D = expm(lindbladian_superop(emb.A2, [emb.sqrt2A1]) * dt)
    G = expm(emb.A_shift * dt)
    C = _reduced_choi(E_D, G)
    # full spectrum for the positivity diagnostic, eigenvectors only for the kept part
    lam = np.linalg.eigvalsh(C)
    n = len(lam)
    r = int(np.count_nonzero(lam > rank_tol * lam[-1]))
    top, W = scipy.linalg.eigh(C, subset_by_index=[n - r, n - 1], driver="evr")
    K = np.zeros((r, 2 * D, 2 * D), dtype=complex)
    for out, i in enumerate(range(r - 1, -1, -1)):
        w = np.sqrt(max(top[i], 0.0)) * W[:, i]
        K[out, :D, :D] = w[:-1].reshape(D, D).T
        K[out, D:, D:] = (w[-1] / math.sqrt(D)) * np.eye(D)
    return StepChannel(dt, E_D, G, K, lam, rank_tol)


def step(state: DensityState, ch: StepChannel, realization: str = "superop") -> DensityState:
    if state.D != ch.D:
        raise ValueError(f"state dimension {state.D} does not match channel dimension {ch.D}")
    if realization == "superop":
        return DensityState(ch.apply_superop(state.rho))
    if realization == "kraus":
        return DensityState(ch.apply_kraus(state.rho))
    if realization == "stinespring":
        return DensityState(ch.apply_stinespring(state.rho))
    raise ValueError(f"unknown realization {realization!r}; expected one of {REALIZATIONS}")


@dataclass
class Evolution:
    states: list[DensityState]
    diagnostics: list[dict]

    @property
    def final(self) -> DensityState:
        return self.states[-1]


def _step_diag(k: int, prev: DensityState, cur: DensityState) -> dict:
    return {
        "step": k,
        "trace": cur.trace.real,
        "trace_change": abs(cur.trace - prev.trace),
        "min_eig": cur.min_eig,
        "hermiticity": cur.hermiticity,
        "block_norm": float(np.linalg.norm(cur.block(0, 1))),
    }


def evolve(rho0: DensityState, ch: StepChannel, n_steps: int,
           realization: str = "superop") -> Evolution:
    """``n_steps`` applications of ``ch``; keeps every intermediate state."""
    if n_steps < 0:
        raise ValueError("number of steps must be non-negative")
    states = [rho0]
    diags = [_step_diag(0, rho0, rho0)]
    for k in range(1, n_steps + 1):
        states.append(step(states[-1], ch, realization))
        diags.append(_step_diag(k, states[-2], states[-1]))
    return Evolution(states, diags)


# --- readout ---------------------------------------------------------------

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)


def read_block(state: DensityState) -> np.ndarray:
    """``(<0| (x) I) rho (|1> (x) I)``."""
    return state.block(0, 1).copy()


def partial_trace_ancilla(M: np.ndarray) -> np.ndarray:
    D = M.shape[0] // 2
    return np.einsum("aiaj->ij", M.reshape(2, D, 2, D))


def read_block_pauli(state: DensityState) -> np.ndarray:
    """``rho_01`` via ``(Tr_a[(X(x)I) rho] - i Tr_a[(Y(x)I) rho]) / 2``."""
    eye = np.eye(state.D)
    tx = partial_trace_ancilla(np.kron(PAULI_X, eye) @ state.rho)
    ty = partial_trace_ancilla(np.kron(PAULI_Y, eye) @ state.rho)
    return 0.5 * (tx - 1j * ty)


def observables(y0_hat: np.ndarray, j: int) -> tuple[np.ndarray, np.ndarray]:
    """Hermitian pair ``O_R = |y><j| + |j><y|`` and ``O_I = -i|y><j| + i|j><y|``."""
    D = len(y0_hat)
    if not 0 <= j < D:
        raise IndexError(f"component {j} out of range for dimension {D}")
    e = np.zeros(D, dtype=complex)
    e[j] = 1.0
    P = np.outer(y0_hat, e)
    return P + P.conj().T, -1j * P + 1j * P.conj().T


def _expect(O: np.ndarray, rho: np.ndarray) -> float:
    return float(np.einsum("ij,ji->", O, rho).real)


def readout_component(state: DensityState, y0_hat: np.ndarray, j: int) -> complex:
    """``y_tilde_j`` from four real expectation values of Hermitian observables."""
    y0_hat = np.asarray(y0_hat, dtype=complex)
    if abs(np.linalg.norm(y0_hat) - 1.0) > 1e-12:
        raise ValueError("reference vector must be normalized")
    OR, OI = observables(y0_hat, j)
    rho = state.rho
    xr = _expect(np.kron(PAULI_X, OR), rho)
    xi = _expect(np.kron(PAULI_X, OI), rho)
    yr = _expect(np.kron(PAULI_Y, OR), rho)
    yi = _expect(np.kron(PAULI_Y, OI), rho)
    return 0.5 * (xr + 1j * xi - 1j * yr + yi)


def readout_components(state: DensityState, y0_hat: np.ndarray) -> np.ndarray:
    return np.array([readout_component(state, y0_hat, j) for j in range(state.D)])


def direct_components(state: DensityState, y0_hat: np.ndarray) -> np.ndarray:
    """``2 <j| rho_01 |y0_hat>`` for all ``j``."""
    return 2.0 * read_block(state) @ np.asarray(y0_hat, dtype=complex)


@dataclass
class ReadoutResult:
    y_tilde: np.ndarray
    y: np.ndarray
    trace: float
    min_eig: float


def recover(y_tilde: np.ndarray, gamma: float, T: float, y0_norm: float) -> np.ndarray:
    """``y(T) = exp(gamma T) ||y0|| y_tilde``."""
    if gamma * T > 700:
        raise ShiftOverflowError(
            f"gamma*T = {gamma * T:.4g} exceeds 700; the shift is too large for this horizon"
        )
    return math.exp(gamma * T) * y0_norm * np.asarray(y_tilde)


def run_embedding(A: np.ndarray, y0: np.ndarray, dt: float, n_steps: int,
                  realization: str = "superop", extra_shift: float = 0.0,
                  channel: StepChannel | None = None,
                  embedding: LindbladEmbedding | None = None):
    """Full density-matrix pipeline for ``y' = A y``; returns
    ``(ReadoutResult, Evolution, StepChannel, LindbladEmbedding)``."""
    emb = embedding or split_and_shift(A, extra_shift)
    ch = channel or build_channel(emb, dt)
    y0 = np.asarray(y0, dtype=complex)
    norm = float(np.linalg.norm(y0))
    rho0 = init_density(y0)
    ev = evolve(rho0, ch, n_steps, realization)
    yh = y0 / norm
    yt = readout_components(ev.final, yh)
    y = recover(yt, emb.gamma, n_steps * dt, norm)
    return ReadoutResult(yt, y, ev.final.trace.real, ev.final.min_eig), ev, ch, emb
