"""Fubini-Study geometry of Gr(r, N) and quadrature over the embedded CP^1.

A point of the Grassmannian is an r x N full-rank complex matrix ``z`` whose
rows span the fibre image; ``z`` and ``P z`` (P invertible) are the same point.
Tangent vectors are pairs ``[z, X]`` modulo ``X -> P X + Q z``.

CP^1 is parametrised by the height ``t = (1 - |z|^2) / (1 + |z|^2)`` and the
azimuth ``theta = arg z`` of the affine coordinate ``z = W / Z``.  In these
coordinates the round Kahler form of total volume 1 is ``dt dtheta / (4 pi)``,
so a Gauss-Legendre rule in ``t`` times a uniform rule in ``theta`` integrates
the moment integrands of the monomial sections exactly.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateFrameError, DomainError

__all__ = [
    "FrameMatrix",
    "TangentRep",
    "MomentValue",
    "QuadratureGrid",
    "VolumeForm",
    "ROUND_VOLUME",
    "moment_map",
    "fs_tangent_inner",
    "xi_field",
    "hamiltonian",
    "build_quadrature",
    "orthonormalize_rows",
    "chart_coordinate",
]

RANK_TOL = 1e-12
CONDITION_LIMIT = 1e8


@dataclass(frozen=True)
class FrameMatrix:
    """Full-rank r x N complex matrix representing a point of Gr(r, N)."""

    entries: np.ndarray

    def __post_init__(self):
        z = np.atleast_2d(np.asarray(self.entries, dtype=complex))
        if z.ndim != 2 or z.shape[0] > z.shape[1]:
            raise DomainError(f"frame must be r x N with r <= N, got {z.shape}")
        sv = np.linalg.svd(z, compute_uv=False)
        if sv[-1] <= RANK_TOL * sv[0]:
            raise DegenerateFrameError("frame is rank deficient")
        z.setflags(write=False)
        object.__setattr__(self, "entries", z)

    @property
    def r(self):
        return self.entries.shape[0]

    @property
    def N(self):
        return self.entries.shape[1]

    def normalized(self):
        """Gauge-equivalent frame with orthonormal rows."""
        return FrameMatrix(orthonormalize_rows(self.entries))


@dataclass(frozen=True)
class TangentRep:
    """Representative ``[z, X]`` of a tangent vector at ``base``."""

    base: FrameMatrix
    direction: np.ndarray

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.direction, dtype=complex))
        if X.shape != self.base.entries.shape:
            raise DomainError(
                f"direction shape {X.shape} does not match frame {self.base.entries.shape}"
            )
        X.setflags(write=False)
        object.__setattr__(self, "direction", X)


@dataclass(frozen=True)
class MomentValue:
    """Orthogonal projector ``z^* (z z^*)^{-1} z`` onto the row space of a frame."""

    matrix: np.ndarray

    @property
    def rank(self):
        return int(round(np.trace(self.matrix).real))


def orthonormalize_rows(z):
    """Return ``(z z^*)^{-1/2} z`` for a frame or a stack of frames.

    Works on arrays of shape ``(..., r, N)``.  The result has orthonormal rows
    and represents the same Grassmannian point.
    """
    z = np.asarray(z, dtype=complex)
    if z.shape[-2] == 1:
        norm = np.linalg.norm(z, axis=-1, keepdims=True)
        if np.any(norm == 0):
            raise DegenerateFrameError("zero frame")
        return z / norm
    gram = z @ np.conj(np.swapaxes(z, -1, -2))
    evals, evecs = np.linalg.eigh(gram)
    if np.any(evals[..., 0] <= RANK_TOL**2 * evals[..., -1]):
        raise DegenerateFrameError("frame is rank deficient")
    inv_sqrt = (evecs / np.sqrt(evals)[..., None, :]) @ np.conj(np.swapaxes(evecs, -1, -2))
    return inv_sqrt @ z


def _gauge_fixed(z):
    # row-orthonormalize ill-conditioned frames; returns (frame, transform P)
    sv = np.linalg.svd(z, compute_uv=False)
    if sv[0] / sv[-1] <= CONDITION_LIMIT:
        return z, None
    gram = z @ z.conj().T
    evals, evecs = np.linalg.eigh(gram)
    P = (evecs / np.sqrt(evals)) @ evecs.conj().T
    return P @ z, P


def moment_map(z):
    """Moment map ``mu([z]) = z^* (z z^*)^{-1} z`` of the U(N) action.

    Parameters
    ----------
    z : FrameMatrix or array_like
        r x N full-rank frame.

    Returns
    -------
    MomentValue
        Hermitian idempotent N x N matrix of trace r.
    """
    if not isinstance(z, FrameMatrix):
        z = FrameMatrix(z)
    w, _ = _gauge_fixed(z.entries)
    mu = w.conj().T @ np.linalg.solve(w @ w.conj().T, w)
    mu = 0.5 * (mu + mu.conj().T)
    return MomentValue(mu)


def _same_point(a, b, atol=1e-10):
    if a is b:
        return True
    if a.entries.shape != b.entries.shape:
        return False
    return np.allclose(moment_map(a).matrix, moment_map(b).matrix, atol=atol)


def fs_tangent_inner(a, b):
    """Fubini-Study Hermitian pairing of two tangent representatives.

    Implements ``tr(Y^*(zz^*)^{-1}X) - tr((zz^*)^{-1} z Y^* (zz^*)^{-1} X z^*)``
    with ``a = [z, X]`` and ``b = [z, Y]``.  The real part is the Riemannian
    metric, the imaginary part the symplectic pairing.
    """
    if not _same_point(a.base, b.base):
        raise DomainError("tangent vectors live at different points")
    z = a.base.entries
    X = a.direction
    # b may use a different but equivalent frame: express Y in z's gauge
    if b.base is a.base or np.array_equal(b.base.entries, z):
        Y = b.direction
    else:
        # z = P w  =>  Y_z = P Y_w
        w = b.base.entries
        P = np.linalg.lstsq(w.T, z.T, rcond=None)[0].T
        Y = P @ b.direction
    w, P = _gauge_fixed(z)
    if P is not None:
        z, X, Y = w, P @ X, P @ Y
    G = np.linalg.inv(z @ z.conj().T)
    first = np.trace(Y.conj().T @ G @ X)
    second = np.trace(G @ z @ Y.conj().T @ G @ X @ z.conj().T)
    return complex(first - second)


def _check_square(A, N):
    A = np.asarray(A, dtype=complex)
    if A.shape != (N, N):
        raise DomainError(f"expected {N} x {N} matrix, got {A.shape}")
    return A


def xi_field(z, A):
    """Holomorphic vector field ``xi_A(z) = [z, z A]`` induced by a Hermitian A."""
    if not isinstance(z, FrameMatrix):
        z = FrameMatrix(z)
    A = _check_square(A, z.N)
    return TangentRep(z, z.entries @ A)


def hamiltonian(z, A):
    """Fibrewise Hermitian endomorphism ``H_A`` at the point ``[z]``.

    The value is expressed in the Fubini-Study orthonormal frame of the fibre,
    i.e. ``U A U^*`` with ``U`` the row-orthonormalised frame, so that
    ``tr H_A = tr(A mu)`` and ``H_Id = Id``.  For r = 1 this is the scalar
    ``tr(A mu([z]))`` returned as a 1 x 1 array.
    """
    if not isinstance(z, FrameMatrix):
        z = FrameMatrix(z)
    A = _check_square(A, z.N)
    U = orthonormalize_rows(z.entries)
    H = U @ A @ U.conj().T
    return 0.5 * (H + H.conj().T)


def chart_coordinate(t, theta):
    """Affine coordinate ``z = W / Z`` from height and azimuth."""
    t = np.asarray(t, dtype=float)
    return np.sqrt((1.0 - t) / (1.0 + t)) * np.exp(1j * np.asarray(theta))


@dataclass(frozen=True)
class QuadratureGrid:
    """Tensor Gauss-Legendre x uniform-azimuth rule on CP^1.

    Weights are normalised against the round volume form of total volume 1.
    ``exactness_degree`` is the largest d such that every integrand
    ``z^a zbar^b / (1+|z|^2)^((a+b)/2 + 1 + m)`` with ``a + b + 2m <= d`` is
    integrated exactly.
    """

    t_nodes: np.ndarray
    t_weights: np.ndarray
    theta_nodes: np.ndarray
    exactness_degree: int
    t: np.ndarray = field(init=False, repr=False)
    theta: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        M = len(self.theta_nodes)
        T, TH = np.meshgrid(self.t_nodes, self.theta_nodes, indexing="ij")
        W = np.outer(self.t_weights, np.full(M, 1.0 / (2.0 * M)))
        for name, arr in (("t", T.ravel()), ("theta", TH.ravel()), ("weights", W.ravel())):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def shape(self):
        return (len(self.t_nodes), len(self.theta_nodes))

    @property
    def n_nodes(self):
        return self.weights.size

    @property
    def z(self):
        return chart_coordinate(self.t, self.theta)

    def integrate(self, values, volume=None):
        """Integrate node values (leading axis = nodes) against a volume form."""
        w = self.weights if volume is None else volume.weights(self)
        return np.tensordot(w, values, axes=(0, 0))

    def refine(self, factor=2):
        """Grid with ``factor`` times more nodes along each axis."""
        n_t, M = self.shape
        return _tensor_grid(factor * n_t, factor * M)


def _tensor_grid(n_t, n_theta):
    x, w = np.polynomial.legendre.leggauss(n_t)
    theta = 2.0 * np.pi * np.arange(n_theta) / n_theta
    degree = min(2 * n_t - 1, n_theta - 1)
    return QuadratureGrid(x, w, theta, degree)


def build_quadrature(k, oversample=1):
    """Quadrature grid adequate for degree-k section bases.

    Uses ``oversample * (2k + 2)`` Gauss-Legendre nodes in ``t`` and
    ``oversample * (4k + 3)`` azimuth angles, which integrates every fourth
    moment of degree-k sections exactly (exactness degree >= 4k + 2).
    """
    if k < 0:
        raise DomainError("k must be non-negative")
    if oversample < 1:
        raise DomainError("oversample must be >= 1")
    oversample = int(oversample)
    return _tensor_grid(oversample * (2 * k + 2), oversample * (4 * k + 3))


@dataclass(frozen=True)
class VolumeForm:
    """Volume form ``density * (round form)`` on CP^1.

    ``density`` maps ``(t, theta)`` arrays to positive values.  ``name`` is a
    human-readable tag used in reports.
    """

    density: object
    name: str = "custom"

    def __call__(self, t, theta):
        return np.asarray(self.density(np.asarray(t), np.asarray(theta)), dtype=float)

    def weights(self, grid):
        return grid.weights * self(grid.t, grid.theta)

    def total(self, grid):
        return float(np.sum(self.weights(grid)))

    @classmethod
    def round(cls):
        return cls(lambda t, theta: np.ones_like(t, dtype=float), "round")

    @classmethod
    def exp_height(cls, a):
        """``Omega`` proportional to ``exp(a t)`` times the round form, total volume 1."""
        a = float(a)
        if a == 0.0:
            return cls.round()
        scale = a / np.sinh(a)
        return cls(lambda t, theta: scale * np.exp(a * t), f"exp_height:{a:g}")

    @property
    def is_round(self):
        return self.name == "round"


ROUND_VOLUME = VolumeForm.round()
