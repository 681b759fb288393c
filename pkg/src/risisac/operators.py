"""Quadratic and quartic forms in the lifted RIS variable ``q = [omega; 1]``.

The UE signal ``g^H w`` is affine in ``omega`` and therefore a quadratic
form ``q^H Z q``.  The normalized echo integral is a sum of products of two
quadratic forms, which after vectorization ``vec(q q^H)`` becomes a single
PSD quadratic form ``vec(Q)^H K vec(Q)``.  Factoring ``K`` yields a linear
map ``v(Q)`` with ``||v(q q^H)||^2`` equal to the echo integral; its
first-order expansion gives a linear minorizer used by the SCA loops.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelSet
from .linalg import hermitian_eig
from .sensing import EchoGrid, effective_channel

EIG_FLOOR = 1e-9


def vec(X: np.ndarray) -> np.ndarray:
    return np.asarray(X).ravel(order="F")


def unvec(x: np.ndarray, n: int) -> np.ndarray:
    return np.asarray(x).reshape((n, n), order="F")


def lift(omega) -> np.ndarray:
    return np.append(np.asarray(omega, complex), 1.0)


@dataclass
class CommQuadratics:
    """``Xi = g g^H`` plus the lifted forms with ``q^H Z q = |g^H w|^2``."""

    Xi: np.ndarray
    Z_c: np.ndarray
    Z_s: np.ndarray


def _lifted_signal(w, channels: ChannelSet) -> np.ndarray:
    # g^H w = e[:N] . omega + e[N]
    top = channels.comm_cell_gain * channels.h_RU.conj() * (channels.H_BR @ w)
    return np.append(top, np.vdot(channels.h_BU, w))


def build_comm_quadratics(w_c, w_s, omega, channels: ChannelSet) -> CommQuadratics:
    g = effective_channel(omega, channels)
    e_c = _lifted_signal(w_c, channels)
    e_s = _lifted_signal(w_s, channels)
    return CommQuadratics(np.outer(g, g.conj()), np.outer(e_c.conj(), e_c), np.outer(e_s.conj(), e_s))


@dataclass
class SensingOperatorSet:
    """Factored echo operator for fixed beamformers and combiner.

    ``factor`` holds ``U Lambda^{1/2}`` column-wise; the matrices ``S_i`` are
    defined so that ``tr(S_i X) = factor[:, i]^H vec(X)``.
    """

    K: np.ndarray
    factor: np.ndarray
    n: int
    provenance: dict = field(default_factory=dict)

    @property
    def S_list(self):
        return [unvec(self.factor[:, i], self.n).conj().T for i in range(self.factor.shape[1])]


def _sensing_vectors(grid: EchoGrid, w_c, w_s, w_rx):
    """Per-node vectors ``b_c, b_s, c`` (zero-padded to N+1) with weights."""
    Ac = grid.conj_steering  # (nodes, N)
    H = grid.channels.H_BR
    pad = lambda X: np.hstack([X, np.zeros((X.shape[0], 1))])
    return pad(Ac * (H @ w_c)), pad(Ac * (H @ w_s)), pad(Ac * (H @ w_rx))


def build_sensing_operators(w_c, w_s, w_rx, grid: EchoGrid, chunk: int = 512) -> SensingOperatorSet:
    """Assemble ``K`` and its PSD square-root factor on the grid's nodes."""
    N = grid.channels.N
    n = N + 1
    b_c, b_s, c = _sensing_vectors(grid, w_c, w_s, w_rx)
    sw = np.sqrt(grid.weights)
    K = np.zeros((n * n, n * n), complex)
    for start in range(0, len(sw), chunk):
        sl = slice(start, start + chunk)
        for b in (b_c[sl], b_s[sl]):
            # rows are sqrt(w) * kron(b, c); column-major vec(q q^H) = conj(q) kron q
            Z = (sw[sl, None, None] * b[:, :, None] * c[sl][:, None, :]).reshape(-1, n * n)
            K += Z.T @ Z.conj()
    K = 0.5 * (K + K.conj().T)
    lam, U = hermitian_eig(K)
    top = max(lam[0], 0.0)
    if lam[-1] < -EIG_FLOOR * top * 10:
        raise ValueError(f"echo operator is not PSD: min eigenvalue {lam[-1]:.3e} vs max {top:.3e}")
    lam = np.clip(lam, 0.0, None)
    factor = U * np.sqrt(lam)
    return SensingOperatorSet(K, factor, n, {"w_c": w_c, "w_s": w_s, "w_rx": w_rx,
                                             "region": grid.region, "rule": grid.rule})


def eval_v(ops: SensingOperatorSet, X) -> np.ndarray:
    return ops.factor.conj().T @ vec(X)


def quartic_value(ops: SensingOperatorSet, q) -> float:
    """``||v(q q^H)||^2``, the normalized echo integral for ``q = [omega; 1]``."""
    v = eval_v(ops, np.outer(q, np.conj(q)))
    return float(np.real(np.vdot(v, v)))


def upsilon(ops: SensingOperatorSet, X_k) -> np.ndarray:
    """Linear minorizer of ``||v(X)||`` that is exact at ``X_k``.

    ``tr(Upsilon X) = Re<v(X_k), v(X)> / ||v(X_k)||`` for Hermitian ``X``.
    """
    v = eval_v(ops, X_k)
    nv = np.linalg.norm(v)
    if nv == 0:
        raise ValueError("expansion point has zero sensing response")
    R = unvec(ops.factor @ v, ops.n)
    return (R + R.conj().T) / (2 * nv)
