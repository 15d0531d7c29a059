"""The integrated moment map and the quadratic form of ``P^* P``.

For an embedding given by an inner product ``H`` on ``H^0(E(k))`` the
H-orthonormal frame at a point is ``z = S R^{-1}`` (``H = R^* R``) and its
row-orthonormalisation is ``U``.  Then

    mu = U^* U,        H_A = U A U^*,
    <A, P^*P B> = tr(A B mu_bar) - int tr(H_A H_B) Omega,

with ``mu_bar = int mu Omega``.  The form is assembled in the real
trace-orthonormal basis of Hermitian N x N matrices.
"""

from dataclasses import dataclass

import numpy as np

from .bundles import InnerProductMatrix, field_values
from .errors import DomainError, PrecisionError, UnsupportedError
from .sphere import SphericalTransform
from .geometry import ROUND_VOLUME, FrameMatrix, TangentRep, build_quadrature, fs_tangent_inner

__all__ = [
    "HermitianBasis",
    "MuBar",
    "PStarPForm",
    "QuantizationContext",
    "mu_bar",
    "q_of",
    "h_of",
    "assemble_pstarp",
    "grad_l2_norm",
    "dmu_bar",
    "xi_pairing_integral",
    "HamiltonianField",
]

PSD_FLOOR = 1e-9
DEFAULT_CHUNK = 256


class HermitianBasis:
    """Real basis of Hermitian N x N matrices, orthonormal for ``tr(AB)``.

    Order: ``E_ii``; then ``(E_ij + E_ji)/sqrt 2`` for ``i < j``; then
    ``i (E_ij - E_ji)/sqrt 2`` for ``i < j`` (row-major pair order).
    """

    def __init__(self, N):
        self.N = int(N)
        iu, ju = np.triu_indices(self.N, k=1)
        self._iu, self._ju = iu, ju
        self.dim = self.N * self.N

    def coords(self, M):
        """Coordinates of Hermitian matrices; works on stacks ``(..., N, N)``."""
        M = np.asarray(M)
        d = np.real(np.diagonal(M, axis1=-2, axis2=-1))
        off = M[..., self._iu, self._ju]
        sym = np.sqrt(2.0) * np.real(off)
        anti = np.sqrt(2.0) * np.imag(off)
        return np.concatenate([d, sym, anti], axis=-1)

    def from_coords(self, c):
        c = np.asarray(c, dtype=float)
        N = self.N
        p = len(self._iu)
        M = np.zeros(c.shape[:-1] + (N, N), dtype=complex)
        idx = np.arange(N)
        M[..., idx, idx] = c[..., :N]
        off = (c[..., N : N + p] + 1j * c[..., N + p :]) / np.sqrt(2.0)
        M[..., self._iu, self._ju] = off
        M[..., self._ju, self._iu] = np.conj(off)
        return M

    def elements(self):
        return self.from_coords(np.eye(self.dim))

    def identity_coords(self):
        return self.coords(np.eye(self.N))


def _herm(M):
    return 0.5 * (M + np.conj(np.swapaxes(M, -1, -2)))


@dataclass(frozen=True)
class MuBar:
    """Integrated moment map ``int mu Omega`` (N x N, Hermitian, trace ``rV``)."""

    matrix: np.ndarray

    @property
    def trace(self):
        return float(np.trace(self.matrix).real)

    def trace_free(self):
        N = self.matrix.shape[0]
        return self.matrix - self.trace / N * np.eye(N)

    def residual(self):
        """Operator norm of the trace-free part."""
        return float(np.linalg.norm(self.trace_free(), 2))


class QuantizationContext:
    """Per-degree embedding data on a fixed quadrature grid.

    Parameters
    ----------
    basis : SectionBasis
    H : InnerProductMatrix or array_like
        Inner product defining the embedding.
    grid : QuadratureGrid, optional
        Defaults to the grid integrating fourth moments exactly.
    volume : VolumeForm, optional
        Defaults to the round form of volume 1.
    """

    def __init__(self, basis, H, grid=None, volume=None, chunk=DEFAULT_CHUNK):
        if not isinstance(H, InnerProductMatrix):
            H = InnerProductMatrix(H)
        if H.N != basis.N:
            raise DomainError(f"inner product has size {H.N}, basis has {basis.N}")
        self.basis = basis
        self.H = H
        self.grid = build_quadrature(basis.max_degree) if grid is None else grid
        self.volume = ROUND_VOLUME if volume is None else volume
        self.weights = self.volume.weights(self.grid)
        self.V = 1.0 if self.volume.is_round else float(np.sum(self.weights))
        self.chunk = int(chunk)
        self.hbasis = HermitianBasis(basis.N)
        self._U = None
        self._mubar = None

    @property
    def N(self):
        return self.basis.N

    @property
    def r(self):
        return self.basis.r

    def frames(self, t=None, theta=None):
        """Row-orthonormal frames ``U`` (shape ``(n, r, N)``) at the given points."""
        if t is None:
            if self._U is None:
                self._U = self._frames(self.grid.t, self.grid.theta)
            return self._U
        return self._frames(t, theta)

    def _frames(self, t, theta):
        z = self.basis.evaluate(t, theta) @ self.H.cholesky_inverse
        if self.r == 1:
            norm = np.linalg.norm(z, axis=-1, keepdims=True)
            return z / norm
        gram = z @ np.conj(np.swapaxes(z, -1, -2))
        evals, evecs = np.linalg.eigh(gram)
        if np.any(evals[:, 0] <= 1e-24 * evals[:, -1]):
            raise DomainError("embedding is degenerate at a quadrature node")
        inv_sqrt = (evecs / np.sqrt(evals)[:, None, :]) @ np.conj(np.swapaxes(evecs, -1, -2))
        return inv_sqrt @ z

    def fs_transform(self, t, theta):
        """``P = (z z^*)^{-1/2}`` mapping the trivialisation to the orthonormal frame."""
        z = self.basis.evaluate(t, theta) @ self.H.cholesky_inverse
        gram = z @ np.conj(np.swapaxes(z, -1, -2))
        evals, evecs = np.linalg.eigh(gram)
        return (evecs / np.sqrt(evals)[:, None, :]) @ np.conj(np.swapaxes(evecs, -1, -2))

    def mu_bar(self):
        if self._mubar is None:
            U = self.frames()
            n, r, N = U.shape
            left = (np.conj(U) * self.weights[:, None, None]).reshape(n * r, N)
            M = left.T @ U.reshape(n * r, N)
            self._mubar = MuBar(_herm(M))
        return self._mubar

    def hamiltonian(self, A, t=None, theta=None):
        """``H_A`` at nodes: ``(n,)`` reals for r = 1, ``(n, r, r)`` otherwise."""
        A = self._check(A)
        U = self.frames(t, theta)
        HA = _herm(U @ A @ np.conj(np.swapaxes(U, -1, -2)))
        if self.r == 1:
            return HA[:, 0, 0].real
        return HA

    def _check(self, A):
        A = np.asarray(A, dtype=complex)
        if A.shape != (self.N, self.N):
            raise DomainError(f"expected {self.N} x {self.N} matrix, got {A.shape}")
        if np.max(np.abs(A - A.conj().T)) > 1e-10 * max(1.0, np.max(np.abs(A))):
            raise DomainError("matrix is not Hermitian")
        return A

    def l2_inner(self, A, B):
        """``int tr(H_A H_B) Omega``."""
        HA = self.hamiltonian(A)
        HB = self.hamiltonian(B)
        if self.r == 1:
            return float(np.sum(self.weights * HA * HB))
        return float(np.einsum("x,xij,xji->", self.weights, HA, HB).real)

    def pair(self, A, B):
        """``<A, P^*P B> = Re tr(A B mu_bar) - int tr(H_A H_B) Omega``."""
        A = self._check(A)
        B = self._check(B)
        return float(np.trace(A @ B @ self.mu_bar().matrix).real) - self.l2_inner(A, B)

    def q_of(self, phi):
        """``Q_ij = int <s_i, phi s_j> Omega`` in the frame ``sqrt(N/(rV)) z``.

        ``phi`` is given in the fibrewise orthonormal frame; for a balanced
        ``H`` this is the L^2-orthonormal basis of ``FS(H)`` and ``Q(Id) = Id``.
        """
        U = self.frames()
        n, r, N = U.shape
        fv = field_values(phi, self.grid.t, self.grid.theta, r)
        _check_hermitian_field(fv)
        left = (np.conj(U) * self.weights[:, None, None]).reshape(n * r, N)
        Q = left.T @ (fv @ U).reshape(n * r, N)
        return _herm(Q) * (N / (r * self.V))

    def _node_coords(self, U):
        # coordinates of U^* f_c U for the r^2 orthonormal Hermitian f_c
        r = U.shape[1]
        if r == 1:
            u = U[:, 0, :]
            M = np.conj(u)[:, :, None] * u[:, None, :]
            return self.hbasis.coords(M)[:, None, :]
        fb = HermitianBasis(r).elements()
        out = []
        for f in fb:
            M = np.einsum("xpi,pq,xqj->xij", np.conj(U), f, U, optimize=True)
            out.append(self.hbasis.coords(M))
        return np.stack(out, axis=1)

    def gram2(self):
        """``gram2[a, b] = int tr(H_{e_a} H_{e_b}) Omega`` accumulated over node chunks."""
        U = self.frames()
        n = U.shape[0]
        d = self.hbasis.dim
        G = np.zeros((d, d))
        for start in range(0, n, self.chunk):
            stop = min(start + self.chunk, n)
            c = self._node_coords(U[start:stop])
            w = self.weights[start:stop]
            flat = (c * np.sqrt(w)[:, None, None]).reshape(-1, d)
            G += flat.T @ flat
        return 0.5 * (G + G.T)

    def jordan_part(self):
        """Matrix of ``A, B -> Re tr(A B mu_bar)`` in the Hermitian basis."""
        E = self.hbasis.elements()
        mb = self.mu_bar().matrix
        J = 0.5 * (E @ mb + mb @ E)
        T = self.hbasis.coords(J)
        return 0.5 * (T + T.T)


def _check_hermitian_field(fv):
    err = np.max(np.abs(fv - np.conj(np.swapaxes(fv, -1, -2))))
    if err > 1e-10 * max(1.0, np.max(np.abs(fv))):
        raise DomainError("field is not Hermitian")


class PStarPForm:
    """The real symmetric N^2 x N^2 matrix of ``<A, P^*P B>``.

    Attributes
    ----------
    mubar : MuBar
    gram2 : ndarray
        ``int tr(H_{e_a} H_{e_b}) Omega``; ``None`` for forms loaded from disk.
    form : ndarray
    hbasis : HermitianBasis
    context : QuantizationContext or None
    """

    def __init__(self, form, mubar=None, gram2=None, context=None):
        self.form = np.asarray(form, dtype=float)
        self.mubar = mubar
        self.gram2 = gram2
        self.context = context
        d = self.form.shape[0]
        N = int(round(np.sqrt(d)))
        if N * N != d or self.form.shape != (d, d):
            raise DomainError("form must be square of size N^2")
        self.hbasis = HermitianBasis(N)

    @property
    def N(self):
        return self.hbasis.N

    def value(self, A, B):
        a = self.hbasis.coords(np.asarray(A))
        b = self.hbasis.coords(np.asarray(B))
        return float(a @ self.form @ b)

    def apply(self, A):
        """``P^*P(A)`` as a Hermitian matrix."""
        return self.hbasis.from_coords(self.form @ self.hbasis.coords(np.asarray(A)))

    def min_eigenvalue(self):
        return float(np.linalg.eigvalsh(self.form)[0])

    def dump(self, path, binary=False):
        """Write ``N`` then the row-major lower triangle of the form."""
        low = self.form[np.tril_indices(self.form.shape[0])]
        if binary:
            with open(path, "wb") as fh:
                np.asarray([self.N], dtype="<i8").tofile(fh)
                low.astype("<f8").tofile(fh)
        else:
            with open(path, "w") as fh:
                fh.write(f"{self.N}\n")
                np.savetxt(fh, low, fmt="%.17g")

    @classmethod
    def load(cls, path, binary=False):
        if binary:
            with open(path, "rb") as fh:
                N = int(np.fromfile(fh, dtype="<i8", count=1)[0])
                low = np.fromfile(fh, dtype="<f8")
        else:
            with open(path) as fh:
                N = int(fh.readline())
                low = np.loadtxt(fh, ndmin=1)
        d = N * N
        if low.size != d * (d + 1) // 2:
            raise DomainError("dump size does not match N")
        F = np.zeros((d, d))
        F[np.tril_indices(d)] = low
        F = F + np.tril(F, -1).T
        return cls(F)


def _context(basis, H, grid, volume):
    return QuantizationContext(basis, H, grid, volume)


def mu_bar(basis, H, grid=None, volume=None):
    """``int mu Omega`` for the embedding defined by ``H``."""
    return _context(basis, H, grid, volume).mu_bar()


def q_of(phi, basis, H, grid=None, volume=None):
    """Quantization ``Q_phi`` of an endomorphism field; see ``QuantizationContext.q_of``."""
    return _context(basis, H, grid, volume).q_of(phi)


class HamiltonianField:
    """The field ``H_A`` of a Hermitian matrix, evaluable anywhere on CP^1."""

    def __init__(self, A, context):
        self.A = context._check(A)
        self.context = context

    def __call__(self, t, theta):
        return self.context.hamiltonian(self.A, np.ravel(t), np.ravel(theta))


def h_of(A, basis, H, grid=None, volume=None):
    """Return ``H_A`` as a callable field of ``(t, theta)``."""
    return HamiltonianField(A, _context(basis, H, grid, volume))


def assemble_pstarp(basis, H, grid=None, volume=None, chunk=DEFAULT_CHUNK, check=True):
    """Assemble the ``P^*P`` form; raises ``PrecisionError`` if clearly indefinite."""
    ctx = QuantizationContext(basis, H, grid, volume, chunk=chunk)
    g2 = ctx.gram2()
    form = ctx.jordan_part() - g2
    form = 0.5 * (form + form.T)
    out = PStarPForm(form, ctx.mu_bar(), g2, ctx)
    if check:
        lo = np.linalg.eigvalsh(form)[0]
        if lo < -PSD_FLOOR:
            raise PrecisionError(f"assembled form is indefinite (min eigenvalue {lo:.3e})")
    return out


def dmu_bar(A, form):
    """``P^*P(A)``, the derivative of ``mu_bar`` along ``A``, from an assembled form."""
    return form.apply(A)


def xi_pairing_integral(A, B, context):
    """``int <xi_A, xi_B>_FS Omega`` evaluated node by node from the FS metric.

    Slow reference used to cross-check the assembled form.
    """
    A = context._check(A)
    B = context._check(B)
    U = context.frames()
    total = 0.0
    for w, u in zip(context.weights, U):
        z = FrameMatrix(u)
        total += w * fs_tangent_inner(TangentRep(z, u @ A), TangentRep(z, u @ B)).real
    return float(total)


def grad_l2_norm(A, context, method="analytic"):
    """``int |grad H_A|^2 Omega`` for line bundles.

    ``method="analytic"`` differentiates the rational function ``H_A`` in the
    affine charts; ``method="spectral"`` uses ``int H_A (Laplacian H_A)``.
    """
    if context.r != 1:
        raise UnsupportedError("gradient norm is implemented for line bundles only")
    if method == "spectral":
        grid = context.grid
        HA = context.hamiltonian(A)
        lap = SphericalTransform(grid).laplacian(HA)
        return float(np.sum(context.weights * HA * lap))
    if method != "analytic":
        raise DomainError(f"unknown method {method!r}")
    A = context._check(A)
    grid = context.grid
    Ri = context.H.cholesky_inverse
    At = Ri @ A @ Ri.conj().T
    Hinv = Ri @ Ri.conj().T
    d = context.basis.degrees[0]
    coef = context.basis.coefficients(0)
    j = np.arange(d + 1)
    t = grid.t
    north = t >= 0
    out = np.zeros_like(t)
    z = grid.z
    # chart w = z near t = 1 and w = 1/z (reversed monomials) near t = -1
    for mask, flip in ((north, False), (~north, True)):
        if not np.any(mask):
            continue
        w = 1.0 / z[mask] if flip else z[mask]
        powers = d - j if flip else j
        p = coef[None, :] * w[:, None] ** powers[None, :]
        dp = coef[None, :] * powers[None, :] * w[:, None] ** np.maximum(powers - 1, 0)[None, :]
        num = np.einsum("xi,ij,xj->x", p, At, np.conj(p)).real
        den = np.einsum("xi,ij,xj->x", p, Hinv, np.conj(p)).real
        # d/dzbar of p M p^*  =  p M (p')^*
        dnum = np.einsum("xi,ij,xj->x", p, At, np.conj(dp))
        dden = np.einsum("xi,ij,xj->x", p, Hinv, np.conj(dp))
        dH = (dnum * den - num * dden) / den**2
        out[mask] = 4.0 * np.pi * (1.0 + np.abs(w) ** 2) ** 2 * np.abs(dH) ** 2
    return float(np.sum(context.weights * out))

