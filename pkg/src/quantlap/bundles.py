"""Holomorphic sections, Hermitian metrics and the Hilb/FS maps on CP^1.

The bundles handled here are ``E(k)`` for ``E = O(a)`` (rank 1) or
``E = O(a) + O(b)`` (rank 2).  A summand ``O(d)`` carries the monomial basis

    v_j = sqrt((d + 1) C(d, j)) z^j,   j = 0..d,

written in the unitary trivialisation of the round metric, where
``|v_j|^2 = (d + 1) C(d, j) ((1-t)/2)^j ((1+t)/2)^(d-j)``.  These sections are
L^2-orthonormal for the round metric and the round volume form, so that
``Hilb_k(round) = (k + 1) Id`` on ``O(k)`` and the Bergman density of the
round metric is ``k + 1``.

Fibre metrics are given in that trivialisation as ``(n, r, r)`` arrays.  A
weight ``psi`` gives the metric ``exp(-psi) Id``.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import DomainError, PrecisionError, UnsupportedError
from .geometry import ROUND_VOLUME, build_quadrature
from .sphere import SphericalTransform, fit_real_harmonics, real_harmonic, round_eigenvalue

__all__ = [
    "SectionBasis",
    "MetricWeight",
    "InnerProductMatrix",
    "FSMetric",
    "plain_gram",
    "hilb",
    "fs_map",
    "bergman_kernel_diag",
    "toeplitz_matrix",
    "toeplitz_kernel_diag",
    "toeplitz_product_kernel_diag",
    "field_values",
]

HERMITIAN_TOL = 1e-10
HILB_TOL = 1e-12
MAX_REFINE = 5


@dataclass(frozen=True)
class SectionBasis:
    """Monomial basis of ``H^0(E(k))`` for ``E`` a sum of line bundles.

    Parameters
    ----------
    k : int
        Twisting degree.
    twists : tuple of int
        Degrees of the line-bundle summands of ``E``.  ``(0,)`` is the trivial
        line bundle, ``(a, b)`` is ``O(a) + O(b)``.
    """

    k: int
    twists: tuple = (0,)

    def __post_init__(self):
        twists = tuple(int(a) for a in self.twists)
        object.__setattr__(self, "twists", twists)
        if len(twists) not in (1, 2):
            raise UnsupportedError("only rank 1 and rank 2 bundles are supported")
        if self.k < 0 or any(self.k + a < 0 for a in twists):
            raise DomainError("every summand of E(k) must have non-negative degree")

    @classmethod
    def line(cls, k, degree=0):
        return cls(int(k), (int(degree),))

    @classmethod
    def split(cls, k, a, b):
        return cls(int(k), (int(a), int(b)))

    @property
    def r(self):
        return len(self.twists)

    @property
    def degrees(self):
        """Degrees ``k + a`` of the summands of ``E(k)``."""
        return tuple(self.k + a for a in self.twists)

    @property
    def N(self):
        return sum(d + 1 for d in self.degrees)

    @property
    def max_degree(self):
        return max(self.degrees)

    def labels(self):
        """``(summand, j)`` for every basis element, in column order."""
        return [(s, j) for s, d in enumerate(self.degrees) for j in range(d + 1)]

    def coefficients(self, summand=0):
        """Holomorphic coefficients ``sqrt((d+1) C(d, j))`` of one summand."""
        d = self.degrees[summand]
        j = np.arange(d + 1)
        return np.exp(0.5 * (np.log(d + 1) + _log_binom(d, j)))

    def evaluate(self, t, theta):
        """Section values in the unitary trivialisation.

        Returns an array of shape ``(n, r, N)``.
        """
        t = np.ravel(np.asarray(t, dtype=float))
        theta = np.ravel(np.asarray(theta, dtype=float))
        out = np.zeros((t.size, self.r, self.N), dtype=complex)
        with np.errstate(divide="ignore"):
            lo = np.log(np.clip((1.0 - t) / 2.0, 0.0, None))
            hi = np.log(np.clip((1.0 + t) / 2.0, 0.0, None))
        col = 0
        for s, d in enumerate(self.degrees):
            j = np.arange(d + 1)
            logmag = 0.5 * (
                np.log(d + 1) + _log_binom(d, j)[None, :]
                + _xlog(j[None, :], lo[:, None]) + _xlog((d - j)[None, :], hi[:, None])
            )
            out[:, s, col : col + d + 1] = np.exp(logmag + 1j * j[None, :] * theta[:, None])
            col += d + 1
        return out


def _log_binom(n, j):
    return gammaln(n + 1) - gammaln(j + 1) - gammaln(n - j + 1)


def _xlog(a, logx):
    # a * log x with 0 * log 0 = 0
    with np.errstate(invalid="ignore"):
        return np.where(a == 0, 0.0, a * logx)


@dataclass(frozen=True)
class MetricWeight:
    """Hermitian metric ``exp(-psi) Id`` on ``E`` with ``psi`` a finite harmonic sum.

    ``terms`` holds ``(l, m, c)`` triples meaning ``psi = sum c Y_lm`` with
    ``Y_lm`` the unit-norm real harmonics.  Use the family constructors rather
    than building ``terms`` by hand.
    """

    terms: tuple = ()
    family: str = "constant"

    @classmethod
    def round(cls):
        return cls((), "constant")

    @classmethod
    def constant(cls, c=0.0):
        return cls(((0, 0, float(c)),) if c else (), "constant")

    @classmethod
    def axial(cls, coefficients):
        """``psi(t) = sum_l c_l P_l(t)`` with ``P_l`` the Legendre polynomials."""
        terms = tuple(
            (l, 0, float(c) / np.sqrt(2 * l + 1)) for l, c in enumerate(coefficients) if c
        )
        return cls(terms, "axial")

    @classmethod
    def harmonics(cls, terms):
        terms = tuple((int(l), int(m), float(c)) for l, m, c in terms if c)
        for l, m, _ in terms:
            if l < 0 or abs(m) > l:
                raise DomainError(f"invalid harmonic index ({l}, {m})")
        return cls(terms, "harmonics")

    @classmethod
    def from_samples(cls, source, lmax=8):
        """Fit ``psi`` to samples ``t theta psi`` (array or text file path)."""
        if isinstance(source, (str, bytes)) or hasattr(source, "read") or hasattr(source, "__fspath__"):
            delim = "," if _is_csv(str(getattr(source, "name", source))) else None
            data = np.loadtxt(source, comments="#", delimiter=delim)
        else:
            data = np.asarray(source, dtype=float)
        data = np.atleast_2d(data)
        if data.shape[1] != 3:
            raise DomainError("sample data must have columns t, theta, psi")
        if np.any(np.abs(data[:, 0]) > 1):
            raise DomainError("sample heights must lie in [-1, 1]")
        fit = fit_real_harmonics(data[:, 0], data[:, 1], data[:, 2], lmax)
        return cls(tuple((l, m, c) for l, m, c in fit if abs(c) > 1e-15), "samples")

    @property
    def is_constant(self):
        return all(l == 0 for l, _, _ in self.terms)

    @property
    def bandwidth(self):
        return max((l for l, _, _ in self.terms), default=0)

    def psi(self, t, theta):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for l, m, c in self.terms:
            out = out + c * real_harmonic(l, m, t, theta)
        return out

    def laplacian_psi(self, t, theta):
        """Round Laplacian of ``psi`` (positive spectrum, volume-1 sphere)."""
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for l, m, c in self.terms:
            out = out + c * round_eigenvalue(l) * real_harmonic(l, m, t, theta)
        return out

    def fiber_values(self, basis, t, theta):
        weight = np.exp(-self.psi(np.ravel(t), np.ravel(theta)))
        return weight[:, None, None] * np.eye(basis.r)[None, :, :]

    def c2_norm(self, grid=None):
        """Size of ``psi`` in C^2: ``sup|psi| + sup|grad psi| + sup|Laplacian psi|``.

        Sup norms are taken over a quadrature grid resolving ``psi^2``.
        """
        if not self.terms:
            return 0.0
        if grid is None:
            grid = build_quadrature(2 * self.bandwidth + 2)
        sht = SphericalTransform(grid)
        psi = self.psi(grid.t, grid.theta)
        lap = self.laplacian_psi(grid.t, grid.theta)
        grad_sq = psi * lap - 0.5 * sht.laplacian(psi * psi)
        grad = np.sqrt(np.clip(grad_sq, 0.0, None))
        return float(np.max(np.abs(psi)) + np.max(grad) + np.max(np.abs(lap)))


def _is_csv(source):
    return isinstance(source, str) and source.lower().endswith(".csv")


class InnerProductMatrix:
    """Positive-definite Hermitian N x N matrix on ``H^0(E(k))``.

    Entries are expressed in the monomial basis of a ``SectionBasis``.
    """

    def __init__(self, matrix):
        H = np.asarray(matrix, dtype=complex)
        if H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise DomainError("inner product must be a square matrix")
        scale = max(np.max(np.abs(H)), 1e-300)
        if np.max(np.abs(H - H.conj().T)) > HERMITIAN_TOL * scale:
            raise DomainError("inner product matrix is not Hermitian")
        H = 0.5 * (H + H.conj().T)
        try:
            L = np.linalg.cholesky(H)
        except np.linalg.LinAlgError as exc:
            raise DomainError("inner product matrix is not positive definite") from exc
        self.matrix = H
        self._R = L.conj().T
        self._Rinv = None

    @property
    def N(self):
        return self.matrix.shape[0]

    @property
    def cholesky(self):
        """Upper-triangular ``R`` with ``H = R^* R``."""
        return self._R

    @property
    def cholesky_inverse(self):
        if self._Rinv is None:
            self._Rinv = np.linalg.solve(self._R, np.eye(self.N))
        return self._Rinv

    def inverse(self):
        Ri = self.cholesky_inverse
        return Ri @ Ri.conj().T

    def __repr__(self):
        return f"InnerProductMatrix(N={self.N})"


@dataclass(frozen=True)
class FSMetric:
    """Fubini-Study metric ``(S H^{-1} S^*)^{-1}`` on ``E(k)`` induced by ``H``."""

    H: InnerProductMatrix
    basis: SectionBasis

    def fiber_values(self, basis, t, theta):
        S = basis.evaluate(t, theta)
        z = S @ self.H.cholesky_inverse
        M = z @ np.conj(np.swapaxes(z, -1, -2))
        if basis.r == 1:
            return 1.0 / M.real
        return np.linalg.inv(M)


def fs_map(H, basis):
    """Fubini-Study metric of an inner product on ``H^0(E(k))``."""
    if not isinstance(H, InnerProductMatrix):
        H = InnerProductMatrix(H)
    if H.N != basis.N:
        raise DomainError(f"inner product has size {H.N}, basis has {basis.N}")
    return FSMetric(H, basis)


def _as_weight(h):
    if h is None:
        return MetricWeight.round()
    return h


def _volume(volume):
    return ROUND_VOLUME if volume is None else volume


def _total_volume(volume, grid):
    if volume.is_round:
        return 1.0
    return volume.total(grid)


def plain_gram(h, basis, grid, volume=None):
    """``G_ab = int <v_a, v_b>_h Omega`` on a fixed grid."""
    h = _as_weight(h)
    volume = _volume(volume)
    S = basis.evaluate(grid.t, grid.theta)
    with np.errstate(over="ignore"):
        hv = h.fiber_values(basis, grid.t, grid.theta)
    if not np.all(np.isfinite(hv)):
        raise PrecisionError("fibre metric overflows on the quadrature grid")
    w = volume.weights(grid)
    n, r, N = S.shape
    hS = hv @ S
    left = (np.conj(S) * w[:, None, None]).reshape(n * r, N)
    G = left.T @ hS.reshape(n * r, N)
    return 0.5 * (G + G.conj().T)


def _exact_on_base(h, volume):
    return isinstance(h, MetricWeight) and h.is_constant and volume.is_round


def _base_grid(h, basis):
    extra = h.bandwidth if isinstance(h, MetricWeight) else basis.max_degree
    return build_quadrature(basis.max_degree + extra)


def hilb(h, basis, grid=None, volume=None, tol=HILB_TOL, max_refine=MAX_REFINE):
    """``Hilb_k(h) = (N / (r V)) int <s_a, s_b>_h Omega``.

    With ``grid=None`` the quadrature is refined by doubling until two
    successive Gram matrices agree to ``tol`` (relative, operator norm); the
    computation is exact on the first grid for constant weights and the round
    volume form.  A supplied grid is used as is.

    Raises
    ------
    PrecisionError
        If the adaptive refinement does not settle.
    """
    h = _as_weight(h)
    volume = _volume(volume)
    if grid is not None:
        G = plain_gram(h, basis, grid, volume)
        V = _total_volume(volume, grid)
        return InnerProductMatrix(basis.N / (basis.r * V) * G)
    grid = _base_grid(h, basis)
    G = plain_gram(h, basis, grid, volume)
    if not _exact_on_base(h, volume):
        for _ in range(max_refine):
            finer = grid.refine(2)
            G2 = plain_gram(h, basis, finer, volume)
            diff = np.linalg.norm(G2 - G, 2)
            grid, G = finer, G2
            if diff <= tol * np.linalg.norm(G, 2):
                break
        else:
            raise PrecisionError("Hilb quadrature did not converge")
    V = _total_volume(volume, grid)
    return InnerProductMatrix(basis.N / (basis.r * V) * G)


def field_values(f, t, theta, r):
    """Evaluate an endomorphism field as an ``(n, r, r)`` array.

    ``f`` is a callable of ``(t, theta)`` returning either ``(n,)`` scalars
    (multiples of the identity) or ``(n, r, r)`` matrices.
    """
    values = np.asarray(f(np.ravel(t), np.ravel(theta)))
    n = np.size(t)
    if values.shape == (n,) or values.ndim == 0:
        values = np.broadcast_to(values, (n,))
        return values[:, None, None] * np.eye(r)[None, :, :]
    if values.shape != (n, r, r):
        raise DomainError(f"field has shape {values.shape}, expected ({n},) or ({n}, {r}, {r})")
    return values


def _check_self_adjoint(f_vals, h_vals):
    # h f must be Hermitian for f to be self-adjoint w.r.t. h
    hf = h_vals @ f_vals
    err = np.max(np.abs(hf - np.conj(np.swapaxes(hf, -1, -2))))
    if err > HERMITIAN_TOL * max(1.0, np.max(np.abs(hf))):
        raise DomainError("field is not Hermitian with respect to the metric")


def _resolve_grid(h, basis, grid):
    # default: room for the weight plus a field of degree up to 2k
    if grid is not None:
        return grid
    return _base_grid(h, basis).refine(2)


def toeplitz_matrix(f, basis, h=None, grid=None, volume=None):
    """Matrix of the Toeplitz operator ``T_f`` in an L^2(h)-orthonormal basis.

    The orthonormal basis is ``S R^{-1}`` with ``R`` the Cholesky factor of the
    L^2 Gram matrix, so ``f = Id`` gives the identity matrix.
    """
    h = _as_weight(h)
    volume = _volume(volume)
    grid = _resolve_grid(h, basis, grid)
    S = basis.evaluate(grid.t, grid.theta)
    hv = h.fiber_values(basis, grid.t, grid.theta)
    fv = field_values(f, grid.t, grid.theta, basis.r)
    _check_self_adjoint(fv, hv)
    w = volume.weights(grid)
    n, r, N = S.shape
    left = (np.conj(S) * w[:, None, None]).reshape(n * r, N)
    G = left.T @ (hv @ S).reshape(n * r, N)
    F = left.T @ (hv @ fv @ S).reshape(n * r, N)
    Ri = InnerProductMatrix(G).cholesky_inverse
    Q = Ri.conj().T @ F @ Ri
    return 0.5 * (Q + Q.conj().T)


def _kernel_parts(basis, h, grid, volume, at):
    h = _as_weight(h)
    volume = _volume(volume)
    grid = _resolve_grid(h, basis, grid)
    if at is None:
        at = (grid.t, grid.theta)
    return h, volume, grid, at


def _diag_from(basis, h, at, middle):
    # s(x) middle s(x)^* h(x) with s in monomial coordinates
    S = basis.evaluate(*at)
    hv = h.fiber_values(basis, *at)
    K = S @ middle @ np.conj(np.swapaxes(S, -1, -2)) @ hv
    if basis.r == 1:
        return K[:, 0, 0].real
    return K


def bergman_kernel_diag(h, basis, grid=None, volume=None, at=None):
    """Bergman density ``B_k(x) = sum_i |s_i(x)|_h^2`` (orthonormal ``s_i``).

    Returns ``(n,)`` reals for line bundles and ``(n, r, r)`` endomorphisms
    otherwise.  ``at`` is an optional pair ``(t, theta)`` of evaluation points;
    by default the grid nodes are used.
    """
    h, volume, grid, at = _kernel_parts(basis, h, grid, volume, at)
    G = plain_gram(h, basis, grid, volume)
    return _diag_from(basis, h, at, np.linalg.inv(G))


def toeplitz_kernel_diag(f, basis, h=None, grid=None, volume=None, at=None):
    """Diagonal of the Schwartz kernel of ``T_f``: ``s Q_f s^* h``."""
    h, volume, grid, at = _kernel_parts(basis, h, grid, volume, at)
    G = plain_gram(h, basis, grid, volume)
    Ri = InnerProductMatrix(G).cholesky_inverse
    Q = toeplitz_matrix(f, basis, h, grid, volume)
    return _diag_from(basis, h, at, Ri @ Q @ Ri.conj().T)


def toeplitz_product_kernel_diag(f, g, basis, h=None, grid=None, volume=None, at=None):
    """Diagonal of the kernel of ``T_f T_g``: ``s Q_f Q_g s^* h``."""
    h, volume, grid, at = _kernel_parts(basis, h, grid, volume, at)
    G = plain_gram(h, basis, grid, volume)
    Ri = InnerProductMatrix(G).cholesky_inverse
    Qf = toeplitz_matrix(f, basis, h, grid, volume)
    Qg = toeplitz_matrix(g, basis, h, grid, volume)
    return _diag_from(basis, h, at, Ri @ Qf @ Qg @ Ri.conj().T)
