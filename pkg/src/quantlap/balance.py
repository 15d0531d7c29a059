"""Balanced and volume-balanced inner products by fixed-point iteration.

The map ``T(H) = Hilb_k(FS_k(H))`` is iterated on a fixed quadrature grid.  In
H-orthonormal coordinates ``T(H)`` equals ``(N / (rV)) mu_bar(H)``, so the
iteration stops as soon as the trace-free part of ``mu_bar`` is small.
"""

import csv
import time
from dataclasses import dataclass, field

from .bundles import InnerProductMatrix
from .errors import NonConvergenceError
from .geometry import build_quadrature
from .quantization import QuantizationContext

__all__ = ["BalanceState", "t_iterate", "t_map", "balance_residual", "write_log"]

DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 10_000
DIVERGENCE_WINDOW = 20
DIVERGENCE_FACTOR = 10.0


@dataclass
class BalanceState:
    """Result of a T-iteration.

    ``log`` holds ``(iteration, residual, seconds)`` triples, one per
    residual evaluation.
    """

    H: InnerProductMatrix
    residual: float
    iterations: int
    converged: bool
    log: list = field(default_factory=list)


def balance_residual(H, basis, grid=None, volume=None):
    """``||mu_bar(H) - (tr mu_bar / N) Id||_op``."""
    return QuantizationContext(basis, H, grid, volume).mu_bar().residual()


def t_map(H, basis, grid, volume=None):
    """One application of ``Hilb_k o FS_k``; returns ``(T(H), residual at H)``."""
    ctx = QuantizationContext(basis, H, grid, volume)
    mb = ctx.mu_bar()
    R = ctx.H.cholesky
    # T(H) = R^* (N/(rV) mu_bar) R in the reference basis
    TH = (basis.N / (basis.r * ctx.V)) * (R.conj().T @ mb.matrix @ R)
    return InnerProductMatrix(0.5 * (TH + TH.conj().T)), mb.residual()


def t_iterate(H0, basis, grid=None, volume=None, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER,
              clock=time.perf_counter):
    """Iterate ``H <- Hilb_k(FS_k(H))`` until the balance residual is below ``tol``.

    Parameters
    ----------
    H0 : InnerProductMatrix or array_like
    basis : SectionBasis
    grid : QuadratureGrid, optional
        Defaults to a grid twice as fine as the moment-exact one, since
        ``FS_k(H)`` is not polynomial for general ``H``.
    volume : VolumeForm, optional
    tol, max_iter :
        Stopping rule.  Reaching ``max_iter`` returns an unconverged state.
    clock : callable
        Time source for the log; pass ``lambda: 0.0`` for reproducible logs.

    Raises
    ------
    NonConvergenceError
        If the residual grows by a factor 10 within 20 iterations.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    H = H0 if isinstance(H0, InnerProductMatrix) else InnerProductMatrix(H0)
    if grid is None:
        grid = build_quadrature(basis.max_degree, oversample=2)
    t0 = clock()
    log = []
    history = []
    for it in range(max_iter + 1):
        TH, res = t_map(H, basis, grid, volume)
        log.append((it, res, clock() - t0))
        history.append(res)
        if res < tol:
            return BalanceState(H, res, it, True, log)
        if it >= DIVERGENCE_WINDOW:
            past = history[it - DIVERGENCE_WINDOW]
            if res > DIVERGENCE_FACTOR * past:
                raise NonConvergenceError(
                    f"residual grew from {past:.3e} to {res:.3e} in {DIVERGENCE_WINDOW} steps"
                )
        if it == max_iter:
            break
        H = TH
    return BalanceState(H, history[-1], max_iter, False, log)


def write_log(state, path):
    """CSV log with columns ``iter, residual, time``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iter", "residual", "time"])
        for it, res, t in state.log:
            w.writerow([it, repr(float(res)), repr(float(t))])
