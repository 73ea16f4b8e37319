"""CTMC numerics: uniformization, transient and steady-state analysis.

All functions are pure; a :class:`~zigcheck.gcm.Ctmc` is never modified.
Heavy loops run in :mod:`zigcheck.kernels` (compiled when available).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Any, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import breadth_first_order, connected_components

from . import kernels
from .gcm import Ctmc

__all__ = [
    "SolverSettings",
    "UniformizedChain",
    "ConvergenceError",
    "NotIrreducibleError",
    "uniformize",
    "poisson_weights",
    "transient_forward",
    "transient_forward_many",
    "transient_backward",
    "transient_backward_many",
    "steady_state",
    "unbounded_until",
    "check_irreducible",
    "backward_reachable",
]

log = logging.getLogger(__name__)

CLAMP = 1e-12
# Poisson windows never get narrower than this many standard deviations
MIN_SIGMAS = 8.0


class ConvergenceError(RuntimeError):
    def __init__(self, msg: str, residual: float = math.nan, iterations: int = 0):
        super().__init__(f"{msg} (residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


class NotIrreducibleError(ValueError):
    def __init__(self, msg: str, state: dict[str, int] | None = None):
        super().__init__(msg)
        self.state = state


@dataclass(frozen=True)
class SolverSettings:
    """Numerical knobs.

    ``method="power"`` runs the power method on the uniformized chain for at
    most ``max_iter`` iterations and switches to Gauss-Seidel (``max_iter_gs``
    sweeps) if it has not converged; ``method="gauss-seidel"`` goes straight
    to Gauss-Seidel.
    """

    epsilon_transient: float = 1e-10
    epsilon_ss: float = 1e-9
    max_iter: int = 10_000
    max_iter_gs: int = 100_000
    method: str = "power"
    uniformization_factor: float = 1.02

    def __post_init__(self):
        if not (self.epsilon_transient > 0 and self.epsilon_ss > 0):
            raise ValueError("epsilons must be positive")
        if self.max_iter < 1 or self.max_iter_gs < 1:
            raise ValueError("iteration caps must be >= 1")
        if self.method not in ("power", "gauss-seidel"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.uniformization_factor < 1:
            raise ValueError("uniformization factor must be >= 1")

    def with_(self, **kw: Any) -> "SolverSettings":
        return replace(self, **kw)


DEFAULT_SETTINGS = SolverSettings()


@dataclass(frozen=True)
class UniformizedChain:
    q: float
    P: sp.csr_matrix


def _arrays(m: sp.spmatrix):
    m = sp.csr_matrix(m)
    m.sort_indices()
    return (
        np.ascontiguousarray(m.indptr, dtype=np.int64),
        np.ascontiguousarray(m.indices, dtype=np.int64),
        np.ascontiguousarray(m.data, dtype=np.float64),
    )


def _uniformize_generator(q_mat: sp.csr_matrix, max_exit: float, factor: float) -> UniformizedChain:
    n = q_mat.shape[0]
    if max_exit <= 0:
        return UniformizedChain(1.0, sp.identity(n, format="csr"))
    q = factor * max_exit
    p = sp.identity(n, format="csr") + q_mat / q
    p = sp.csr_matrix(p)
    p.eliminate_zeros()
    return UniformizedChain(q, p)


def uniformize(ctmc: Ctmc, factor: float = 1.02) -> UniformizedChain:
    """``q = factor * max exit rate`` and ``P = I + Q/q``.

    Exit rates include self-loops, so ``q`` also bounds the simulator's
    event rate. A chain without transitions gives ``q = 1, P = I``.
    """
    if factor < 1:
        raise ValueError("uniformization factor must be >= 1")
    max_exit = float(ctmc.exit_rates.max()) if ctmc.n_states else 0.0
    return _uniformize_generator(ctmc.generator, max_exit, factor)


def _log_poisson_mode(lam: float, m: int) -> float:
    if m < 1000:
        return -lam + m * math.log(lam) - math.lgamma(m + 1)
    # Stirling form keeps every term O(sqrt(m)) so nothing large cancels
    inv = 1.0 / m
    corr = inv / 12 - inv**3 / 360 + inv**5 / 1260
    return m * math.log1p((lam - m) / m) + (m - lam) - 0.5 * math.log(2 * math.pi * m) - corr


def poisson_weights(lam: float, eps: float = 1e-10) -> tuple[int, int, np.ndarray]:
    """Truncated Poisson(lam) probabilities on ``[left, right]``.

    At most ``eps/2`` of the mass is dropped from each tail, and the window
    always covers ``lam +- 8*sqrt(lam)`` (clipped at 0). Weights are built
    outward from the mode by recurrence, starting from a mode weight computed
    in log space, so nothing under- or overflows for large ``lam``. They are
    scaled to sum to one over a window much wider than the returned one.
    """
    if lam < 0:
        raise ValueError("lam must be >= 0")
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    if lam == 0:
        return 0, 0, np.array([1.0])
    m = int(math.floor(lam))
    log_wm = _log_poisson_mode(lam, m)
    span = int(math.ceil((12.0 + math.sqrt(-2.0 * math.log(eps))) * math.sqrt(lam))) + 30
    while True:
        lo = max(0, m - span)
        hi = m + span
        right_ks = np.arange(m + 1, hi + 1, dtype=np.float64)
        log_right = log_wm + np.cumsum(math.log(lam) - np.log(right_ks))
        left_ks = np.arange(m, lo, -1, dtype=np.float64)  # w_{k-1} = w_k * k / lam
        log_left = log_wm + np.cumsum(np.log(left_ks) - math.log(lam))
        logw = np.concatenate([log_left[::-1], [log_wm], log_right])
        edge_ok = logw[-1] < math.log(eps) - 46 and (lo == 0 or logw[0] < math.log(eps) - 46)
        if edge_ok:
            break
        span *= 2
    w = np.exp(logw)
    # the wide window holds all but ~eps*e^-46 of the mass, so rescaling to
    # its sum cancels the rounding in the mode weight
    w /= math.fsum(w)
    half = eps / 2
    cl = np.cumsum(w)
    n_left = int(np.searchsorted(cl, half, side="right"))
    cr = np.cumsum(w[::-1])
    n_right = int(np.searchsorted(cr, half, side="right"))
    keep = MIN_SIGMAS * math.sqrt(lam)
    n_left = min(n_left, m - lo, max(0, int(math.floor(lam - keep)) - lo))
    n_right = min(n_right, hi - m, max(0, hi - int(math.ceil(lam + keep))))
    left = lo + n_left
    right = hi - n_right
    return left, right, w[n_left : w.size - n_right].copy()


def _clamp(x: np.ndarray) -> np.ndarray:
    x = np.where((x < 0) & (x >= -CLAMP), 0.0, x)
    return x


def _series(chain: UniformizedChain, matrix: sp.csr_matrix, v0: np.ndarray, times: Sequence[float], eps: float):
    lefts, rights, offsets, chunks = [], [], [], []
    off = 0
    for t in times:
        if t < 0:
            raise ValueError("time must be >= 0")
        left, right, w = poisson_weights(chain.q * float(t), eps)
        lefts.append(left)
        rights.append(right)
        offsets.append(off)
        chunks.append(w)
        off += w.size
    indptr, indices, data = _arrays(matrix)
    return kernels.uniformized_series(
        indptr,
        indices,
        data,
        np.ascontiguousarray(v0, dtype=np.float64),
        np.array(lefts, dtype=np.int64),
        np.array(rights, dtype=np.int64),
        np.concatenate(chunks) if chunks else np.zeros(0),
        np.array(offsets, dtype=np.int64),
    )


def transient_forward_many(
    ctmc: Ctmc, pi0: np.ndarray, times: Sequence[float], settings: SolverSettings = DEFAULT_SETTINGS
) -> np.ndarray:
    """Transient distributions ``pi(t)`` for every ``t`` in ``times`` (one pass)."""
    pi0 = np.asarray(pi0, dtype=np.float64)
    if pi0.shape != (ctmc.n_states,):
        raise ValueError("pi0 has the wrong length")
    chain = uniformize(ctmc, settings.uniformization_factor)
    out = _series(chain, sp.csr_matrix(chain.P.T), pi0, times, settings.epsilon_transient)
    return _clamp(out)


def transient_forward(
    ctmc: Ctmc, pi0: np.ndarray, t: float, settings: SolverSettings = DEFAULT_SETTINGS
) -> np.ndarray:
    """``pi(t) = sum_k Poisson(qt; k) pi0 P^k`` truncated at ``epsilon_transient``."""
    return transient_forward_many(ctmc, pi0, [t], settings)[0]


def _absorbing_generator(ctmc: Ctmc, restrict: np.ndarray):
    r = ctmc.rate_matrix
    keep = sp.diags(restrict.astype(np.float64))
    r = sp.csr_matrix(keep @ r)
    exit_ = np.asarray(r.sum(axis=1)).ravel()
    q = sp.csr_matrix(r - sp.diags(exit_))
    # Self-loops do not move probability but count towards the rate bound, as in uniformize().
    loops = np.bincount(
        ctmc.src[ctmc.src == ctmc.dst], weights=ctmc.rate[ctmc.src == ctmc.dst], minlength=ctmc.n_states
    )
    total = (exit_ + loops) * restrict
    return q, float(total.max()) if total.size else 0.0


def transient_backward_many(
    ctmc: Ctmc,
    v: np.ndarray,
    times: Sequence[float],
    restrict: Any = True,
    settings: SolverSettings = DEFAULT_SETTINGS,
) -> np.ndarray:
    """``u(t) = exp(Q~ t) v`` where states failing ``restrict`` are made absorbing."""
    mask = ctmc.mask(restrict)
    q_mat, max_exit = _absorbing_generator(ctmc, mask)
    chain = _uniformize_generator(q_mat, max_exit, settings.uniformization_factor)
    out = _series(chain, chain.P, np.asarray(v, dtype=np.float64), times, settings.epsilon_transient)
    return _clamp(out)


def transient_backward(
    ctmc: Ctmc, v: np.ndarray, t: float, restrict: Any = True, settings: SolverSettings = DEFAULT_SETTINGS
) -> np.ndarray:
    return transient_backward_many(ctmc, v, [t], restrict, settings)[0]


def check_irreducible(ctmc: Ctmc) -> None:
    """Raise :class:`NotIrreducibleError` unless the chain is strongly connected."""
    n = ctmc.n_states
    if n <= 1:
        return
    ncomp, lab = connected_components(ctmc.rate_matrix, directed=True, connection="strong")
    if ncomp == 1:
        return
    # bottom SCCs have no edge leaving them
    r = ctmc.rate_matrix.tocoo()
    leaving = np.zeros(ncomp, dtype=bool)
    cross = lab[r.row] != lab[r.col]
    leaving[lab[r.row[cross]]] = True
    bottoms = np.flatnonzero(~leaving)
    recurrent = bottoms[0]
    outside = int(np.flatnonzero(lab != recurrent)[0])
    raise NotIrreducibleError(
        f"chain is not irreducible ({ncomp} strongly connected components, "
        f"{bottoms.size} closed); state {ctmc.valuation(outside)} lies outside "
        f"the recurrent class",
        ctmc.valuation(outside),
    )


def steady_state(
    ctmc: Ctmc, settings: SolverSettings = DEFAULT_SETTINGS, return_info: bool = False
):
    """Stationary distribution of an irreducible CTMC.

    Returns ``pi`` (or ``(pi, info)`` with ``return_info``), where ``info``
    records the method that converged, its iteration count and the final
    relative change.
    """
    check_irreducible(ctmc)
    n = ctmc.n_states
    if n == 1:
        pi = np.ones(1)
        info = {"method": "trivial", "iterations": 0, "delta": 0.0}
        return (pi, info) if return_info else pi

    x0 = np.full(n, 1.0 / n)
    info: dict[str, Any] = {}
    pi = None
    if settings.method == "power":
        chain = uniformize(ctmc, settings.uniformization_factor)
        pi, it, delta = kernels.power_iterate(*_arrays(chain.P.T), x0, settings.epsilon_ss, settings.max_iter)
        if delta <= settings.epsilon_ss:
            info = {"method": "power", "iterations": it, "delta": delta}
        else:
            log.info("power method did not converge in %d iterations (delta %.3e); using Gauss-Seidel", it, delta)
            x0 = np.asarray(pi)
            pi = None
    if pi is None:
        qt = sp.csr_matrix(ctmc.generator.T)
        diag = qt.diagonal().copy()
        off = sp.csr_matrix(qt - sp.diags(diag))
        off.eliminate_zeros()
        pi, it, delta = kernels.gauss_seidel(
            *_arrays(off), diag, np.zeros(n), x0, settings.epsilon_ss, settings.max_iter_gs, True
        )
        if not delta <= settings.epsilon_ss:
            raise ConvergenceError("steady state: Gauss-Seidel did not converge", delta, it)
        info = {"method": "gauss-seidel", "iterations": it, "delta": delta}
    pi = np.clip(np.asarray(pi), 0.0, None)
    pi = pi / pi.sum()
    info["residual"] = float(np.max(np.abs(ctmc.generator.T @ pi)))
    return (pi, info) if return_info else pi


def backward_reachable(r: sp.csr_matrix, target: np.ndarray, through: np.ndarray) -> np.ndarray:
    """States that can reach ``target`` along paths whose non-final states lie in ``through``."""
    n = r.shape[0]
    coo = r.tocoo()
    keep = through[coo.row] & (coo.data > 0)
    # reversed edges j -> i for i -> j, plus a super source n -> every target
    tgt = np.flatnonzero(target)
    rows = np.concatenate([coo.col[keep], np.full(tgt.size, n)])
    cols = np.concatenate([coo.row[keep], tgt])
    g = sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(n + 1, n + 1))
    order = breadth_first_order(g, n, directed=True, return_predecessors=False)
    out = np.zeros(n, dtype=bool)
    out[order[order < n]] = True
    return out


def unbounded_until(
    ctmc: Ctmc, phi: Any, psi: Any, settings: SolverSettings = DEFAULT_SETTINGS
) -> np.ndarray:
    """Probability of ``phi U psi`` from every state.

    Graph precomputation fixes the states with probability exactly 0 and 1;
    the rest is solved on the embedded jump chain by Gauss-Seidel.
    """
    phi_m = ctmc.mask(phi)
    psi_m = ctmc.mask(psi)
    n = ctmc.n_states
    r = ctmc.rate_matrix
    live = phi_m & ~psi_m
    can_reach = backward_reachable(r, psi_m, live)
    no = ~can_reach
    bad = backward_reachable(r, no, live)
    yes = ~bad
    x = np.zeros(n)
    x[yes] = 1.0
    maybe = ~(yes | no)
    if not maybe.any():
        return x
    exit_ = np.asarray(r.sum(axis=1)).ravel()
    emb = sp.csr_matrix(sp.diags(np.divide(1.0, exit_, out=np.zeros(n), where=exit_ > 0)) @ r)
    idx = np.flatnonzero(maybe)
    p_mm = emb[idx][:, idx]
    b = np.asarray(emb[idx][:, np.flatnonzero(yes)].sum(axis=1)).ravel()
    sol, it, delta = kernels.gauss_seidel(
        *_arrays(-p_mm), np.ones(idx.size), b, np.zeros(idx.size), settings.epsilon_ss, settings.max_iter_gs, False
    )
    if not delta <= settings.epsilon_ss:
        raise ConvergenceError("unbounded until: Gauss-Seidel did not converge", delta, it)
    x[idx] = np.clip(sol, 0.0, 1.0)
    return x
