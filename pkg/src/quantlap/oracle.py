"""Reference values: exact spectra, harmonic matrices and independent operators.

Everything here is computed without the quantization machinery so that it
can serve as ground truth for it.

Conventions (round CP^1 of volume 1):

* ``Delta`` is the positive Laplace-Beltrami operator; on degree-i
  harmonics it equals ``lambda_i = 4 pi i (i + 1)``.
* The Riemannian scalar curvature is ``ROUND_SCALAR_CURVATURE = 8 pi``
  (Gauss curvature ``4 pi``).  In the Bergman density expansion the same
  quantity enters as ``S / (8 pi) = 1``, which is what makes
  ``B_k(round) = k + 1``.
"""

from dataclasses import dataclass
from fractions import Fraction
from math import comb, factorial

import numpy as np
from numpy.polynomial import Polynomial
from numpy.polynomial import legendre as npleg
from scipy.linalg import eigh_tridiagonal

from .errors import DomainError, UnsupportedError
from .geometry import ROUND_VOLUME, VolumeForm, build_quadrature, chart_coordinate
from .sphere import SphericalTransform

__all__ = [
    "ROUND_SCALAR_CURVATURE",
    "ExactSpectrum",
    "cpn_spectrum",
    "balanced_alpha",
    "balanced_trace_sq",
    "balanced_trace_sq_series",
    "isometry_constant",
    "exact_balanced_eigenvalue",
    "closed_form_eigenvalue",
    "verify_closed_form",
    "HarmonicBuilder",
    "lichnerowicz_round",
    "ricci_pairing_fd",
    "bergman_a1",
    "toeplitz_b1",
    "toeplitz_b2_round",
    "hessian_coefficients_round",
    "SturmLiouvilleLaplacian",
    "sturm_liouville_spectrum",
]

ROUND_SCALAR_CURVATURE = 8.0 * np.pi


@dataclass(frozen=True)
class ExactSpectrum:
    """Eigenvalues ``lambda_i = 4 pi i (i + n)`` of CP^n with multiplicities."""

    n: int
    entries: tuple

    def values(self):
        """Eigenvalues repeated by multiplicity, ascending."""
        return np.concatenate([np.full(m, lam) for _, lam, m in self.entries])

    def indices(self):
        """Degree ``i`` of each entry of ``values()``."""
        return np.concatenate([np.full(m, i) for i, _, m in self.entries])


def cpn_spectrum(n, i_max):
    if n < 1:
        raise DomainError("n must be >= 1")
    if i_max < 0:
        raise DomainError("i_max must be >= 0")
    entries = []
    for i in range(i_max + 1):
        mult = comb(n + i, i) ** 2 - (comb(n + i - 1, i - 1) ** 2 if i > 0 else 0)
        entries.append((i, 4.0 * np.pi * i * (i + n), mult))
    return ExactSpectrum(n, tuple(entries))


def _check_ik(i, k):
    if i < 0 or k < 0:
        raise DomainError("i and k must be non-negative")
    if i > k:
        raise DomainError(f"no degree-{i} matrices at k = {k}")


def balanced_alpha(i):
    """``int H_A^2`` for the model harmonic ``2 Re z^i / (1+|z|^2)^i``."""
    return Fraction(2, (2 * i + 1) * comb(2 * i, i))


def balanced_trace_sq(i, k):
    """``tr(A^2)`` of the model matrix, factorial form (valid for i >= 1)."""
    _check_ik(i, k)
    return Fraction(
        4 * factorial(k + i + 1) * factorial(i + 1) * factorial(k - i) * factorial(i),
        factorial(k) ** 2 * factorial(2 * i + 2),
    )


def balanced_trace_sq_series(i, k):
    """``tr(A^2) = 2 sum_j C(k-i,j)^2 / (C(k,i+j) C(k,j))`` (valid for i >= 1)."""
    _check_ik(i, k)
    return 2 * sum(
        Fraction(comb(k - i, j) ** 2, comb(k, i + j) * comb(k, j)) for j in range(k - i + 1)
    )


def isometry_constant(i, k):
    """``C_{i,k}`` with ``int H_A H_B = C_{i,k} tr(AB)`` on degree-i matrices."""
    _check_ik(i, k)
    if i == 0:
        return Fraction(1, k + 1)
    return balanced_alpha(i) / balanced_trace_sq(i, k)


def exact_balanced_eigenvalue(i, k, exact=False):
    """Eigenvalue of ``P^*P`` on degree-i matrices, round balanced CP^1.

    ``nu = 1/(k+1) - C_{i,k}``; zero for ``i = 0``.
    """
    _check_ik(i, k)
    nu = Fraction(0) if i == 0 else Fraction(1, k + 1) - isometry_constant(i, k)
    return nu if exact else float(nu)


def closed_form_eigenvalue(i, k):
    """The simplified rational ``i(i+1) / ((k+i)(k+i+1))``."""
    _check_ik(i, k)
    return Fraction(i * (i + 1), (k + i) * (k + i + 1))


def verify_closed_form(k_max=32, tol=1e-12):
    """Compare the simplified rational with the factorial formula.

    Returns a list of ``(i, k, exact, simplified)`` for every mismatch.
    """
    bad = []
    for k in range(1, k_max + 1):
        for i in range(1, k + 1):
            nu = exact_balanced_eigenvalue(i, k, exact=True)
            cf = closed_form_eigenvalue(i, k)
            if abs(float(nu - cf)) > tol:
                bad.append((i, k, float(nu), float(cf)))
    return bad


class HarmonicBuilder:
    """Matrices ``A`` whose Hamiltonians are degree-i spherical harmonics.

    Matrices refer to the balanced round embedding at degree ``k``, i.e. to
    the monomial basis with ``H = (k + 1) Id``.  The harmonics are

        f_{m, re} = 2 Re(z^m g_m(|z|^2)) / (1 + |z|^2)^i,
        f_{m, im} = 2 Im(z^m g_m(|z|^2)) / (1 + |z|^2)^i,
        f_0       = g_0(|z|^2) / (1 + |z|^2)^i,

    with ``g_m`` from the associated Legendre functions, scaled so that
    ``g_i = 1`` (``f_{i, re} = (z^i + zbar^i) / (1 + |z|^2)^i``).
    """

    def __init__(self, i, k=None):
        if i < 0:
            raise DomainError("degree must be non-negative")
        if k is not None:
            _check_ik(i, k)
        self.i = int(i)
        self.k = None if k is None else int(k)
        legendre = Polynomial(npleg.leg2poly([0] * self.i + [1]))
        scale = factorial(2 * self.i) / factorial(self.i)
        self._g = []
        one_minus, one_plus = Polynomial([1.0, -1.0]), Polynomial([1.0, 1.0])
        for m in range(self.i + 1):
            c = legendre.deriv(m).coef
            g = Polynomial([0.0])
            for a, ca in enumerate(c):
                g = g + ca * one_minus**a * one_plus ** (self.i - m - a)
            self._g.append(g * (2.0**m / scale))

    def labels(self):
        """``(m, part)`` for the ``2i + 1`` real harmonics."""
        out = [(0, "re")]
        for m in range(1, self.i + 1):
            out += [(m, "re"), (m, "im")]
        return out

    def radial(self, m):
        """Coefficients of ``g_m`` in powers of ``|z|^2``."""
        return self._g[m].coef

    def function(self, m, part="re"):
        """The harmonic as a callable of ``(t, theta)``."""
        g = self._g[m]
        i = self.i

        def f(t, theta):
            t = np.asarray(t, dtype=float)
            rho = (1.0 - t) / (1.0 + t)
            z = chart_coordinate(t, theta)
            val = z**m * g(rho) / (1.0 + rho) ** i
            if m == 0:
                return val.real
            return 2.0 * (val.real if part == "re" else val.imag)

        return f

    def matrix(self, m, part="re", k=None):
        """Hermitian ``(k+1) x (k+1)`` matrix with ``H_A`` the harmonic."""
        k = self.k if k is None else int(k)
        if k is None:
            raise DomainError("degree k required")
        _check_ik(self.i, k)
        num = self._g[m] * Polynomial([1.0, 1.0]) ** (k - self.i)
        d = np.zeros(k - m + 1)
        coef = num.coef
        d[: min(len(coef), len(d))] = coef[: len(d)]
        A = np.zeros((k + 1, k + 1), dtype=complex)
        b = np.arange(k - m + 1)
        scale = np.sqrt([comb(k, m + bb) * comb(k, bb) for bb in b])
        vals = d / scale
        if m == 0:
            A[b, b] = vals
            return A
        if part == "im":
            vals = -1j * vals
        A[m + b, b] = vals
        A[b, m + b] = np.conj(vals)
        return A

    def l2_norm(self, m, part="re"):
        grid = build_quadrature(self.i + 1)
        f = self.function(m, part)(grid.t, grid.theta)
        return float(np.sqrt(grid.integrate(f * f)))

    def unit_function(self, m, part="re"):
        """The harmonic scaled to unit L^2 norm."""
        s = 1.0 / self.l2_norm(m, part)
        f0 = self.function(m, part)
        return lambda t, theta: s * f0(t, theta)

    def normalized(self, m, part="re", k=None):
        """``(A, f)`` scaled so that ``int f^2 = 1``."""
        s = 1.0 / self.l2_norm(m, part)
        return s * self.matrix(m, part, k), self.unit_function(m, part)


def lichnerowicz_round(values, grid, volume=None):
    """``D^*D f = (1/2)(Delta^2 f - S Delta f)`` on the round sphere, spectrally.

    ``values`` are samples of ``f`` at the grid nodes.
    """
    if volume is not None and not volume.is_round:
        raise UnsupportedError("the Lichnerowicz oracle needs the round metric")
    sht = SphericalTransform(grid)
    lap = sht.laplacian(values)
    lap2 = sht.laplacian(values, power=2)
    return 0.5 * (lap2 - ROUND_SCALAR_CURVATURE * lap)


def ricci_pairing_fd(f, t, theta, step=1e-3):
    """``2 (Ric, 2 sqrt(-1) dbar d f)`` by finite differences in the affine chart.

    Works with the metric density ``G = 1 / (pi (1 + |z|^2)^2)``: the Ricci form
    is ``-(1/2) Lap log G dx dy``, ``2 sqrt(-1) dbar d f = -Lap f dx dy`` and the
    pairing of 2-forms is ``a_xy b_xy / G^2`` (``Lap`` the flat Laplacian).
    ``f`` is a callable of ``(t, theta)``.  Points should have ``t > -0.9``.
    """
    z0 = chart_coordinate(t, theta)
    x0, y0 = z0.real, z0.imag

    def in_chart(fun, x, y):
        rho = x * x + y * y
        return fun((1.0 - rho) / (1.0 + rho), np.arctan2(y, x))

    def flat_lap(fun):
        h = step
        c = in_chart(fun, x0, y0)
        s = (
            in_chart(fun, x0 + h, y0) + in_chart(fun, x0 - h, y0)
            + in_chart(fun, x0, y0 + h) + in_chart(fun, x0, y0 - h)
        )
        return (s - 4.0 * c) / (h * h)

    def log_G(tt, th):
        rho = (1.0 - tt) / (1.0 + tt)
        return -np.log(np.pi) - 2.0 * np.log1p(rho)

    G = 1.0 / (np.pi * (1.0 + x0**2 + y0**2) ** 2)
    ric = -0.5 * flat_lap(log_G)
    ddf = -flat_lap(f)
    return 2.0 * ric * ddf / G**2


def bergman_a1(h, t, theta):
    """First subleading Bergman coefficient for ``exp(-psi)`` on the round sphere.

    ``A_1 = S / (8 pi) + (sqrt(-1) / 2 pi) Lambda F_h = 1 - Delta psi / (4 pi)``.
    """
    lap = h.laplacian_psi(t, theta) if h is not None else np.zeros_like(np.asarray(t, float))
    return ROUND_SCALAR_CURVATURE / (8.0 * np.pi) - lap / (4.0 * np.pi)


def toeplitz_b1(f_values, lap_f_values, a1_values):
    """``b_{f,1} = A_1 f - Delta f / (4 pi)`` for scalar ``f`` on a line bundle."""
    return a1_values * f_values - lap_f_values / (4.0 * np.pi)


def toeplitz_b2_round(values, grid):
    """``b_{f,2}`` on the round metric: ``Delta^2 f / (32 pi^2)``."""
    return SphericalTransform(grid).laplacian(values, power=2) / (32.0 * np.pi**2)


def hessian_coefficients_round(values, grid):
    """``(a_1, a_2)`` of the quantized Hessian expansion on the round metric.

    ``a_1 = (1/4 pi) int f Delta f`` and
    ``a_2 = (1/16 pi^2) int (f D^*D f - 2 f Delta^2 f)``.
    """
    sht = SphericalTransform(grid)
    lap = sht.laplacian(values)
    lap2 = sht.laplacian(values, power=2)
    lich = lichnerowicz_round(values, grid)
    a1 = grid.integrate(values * lap) / (4.0 * np.pi)
    a2 = grid.integrate(values * lich - 2.0 * values * lap2) / (16.0 * np.pi**2)
    return float(a1), float(a2)


def _axial_density(metric, samples=7):
    if isinstance(metric, VolumeForm):
        t = np.linspace(-0.95, 0.95, 11)
        thetas = 2.0 * np.pi * np.arange(samples) / samples
        vals = np.array([metric(t, np.full_like(t, th)) for th in thetas])
        if np.max(np.ptp(vals, axis=0)) > 1e-12 * np.max(np.abs(vals)):
            raise UnsupportedError("conformal factor is not axially symmetric")
        return lambda tt: metric(tt, np.zeros_like(tt))
    if callable(metric):
        return metric
    raise DomainError("metric must be a VolumeForm or a callable of t")


class SturmLiouvilleLaplacian:
    """Finite-volume discretisation of ``Delta_omega`` for ``omega = rho(t) omega_round``.

    In the polar angle ``s`` (``t = cos s``) and azimuthal mode ``m`` the
    eigenproblem is

        -4 pi [ (sin s g')' - m^2 g / sin s ] = lambda rho(cos s) sin s g,

    discretised on ``resolution`` cell-centred points.  The resulting
    symmetric tridiagonal pencil is second-order accurate.
    """

    def __init__(self, metric=None, resolution=4000):
        self.density = _axial_density(ROUND_VOLUME if metric is None else metric)
        self.resolution = int(resolution)
        n = self.resolution
        self.h = np.pi / n
        self.s = (np.arange(n) + 0.5) * self.h
        faces = np.arange(1, n) * self.h
        self._flux = np.sin(faces)
        self._mass = self.density(np.cos(self.s)) * np.sin(self.s)
        if np.any(self._mass <= 0):
            raise DomainError("conformal factor must be positive")

    def mode(self, m, count):
        """Lowest ``count`` eigenvalues of azimuthal mode ``m``."""
        n = self.resolution
        c = 4.0 * np.pi / self.h**2
        diag = np.zeros(n)
        diag[:-1] += c * self._flux
        diag[1:] += c * self._flux
        diag += 4.0 * np.pi * m * m / np.sin(self.s)
        off = -c * self._flux
        # scale rows/cols by mass^{-1/2} to get a symmetric standard problem
        inv = 1.0 / np.sqrt(self._mass * self.h)
        diag = diag * self.h * inv**2
        off = off * self.h * inv[:-1] * inv[1:]
        count = min(count, n)
        return eigh_tridiagonal(diag, off, eigvals_only=True, select="i", select_range=(0, count - 1))

    def eigenfunction(self, m, j):
        """The ``j``-th eigenpair of mode ``m`` as ``(lambda, f)``.

        ``f(t, theta) = g(s) cos(m theta)`` (``t = cos s``) is normalised to unit
        L^2 norm for ``rho`` times the round form, with sign fixed so that ``g``
        is positive near ``t = 1``.
        """
        n = self.resolution
        c = 4.0 * np.pi / self.h**2
        diag = np.zeros(n)
        diag[:-1] += c * self._flux
        diag[1:] += c * self._flux
        diag += 4.0 * np.pi * m * m / np.sin(self.s)
        off = -c * self._flux
        inv = 1.0 / np.sqrt(self._mass * self.h)
        vals, vecs = eigh_tridiagonal(
            diag * self.h * inv**2, off * self.h * inv[:-1] * inv[1:], select="i", select_range=(j, j)
        )
        g = vecs[:, 0] * inv
        # int g^2 cos^2(m theta) rho dt dtheta / (4 pi) = 1
        norm = np.sum(g * g * self._mass * self.h) * (0.5 if m else 1.0) / 2.0
        g = g / np.sqrt(norm)
        if g[0] < 0:
            g = -g
        s_nodes = self.s

        def f(t, theta):
            s = np.arccos(np.clip(np.asarray(t, dtype=float), -1.0, 1.0))
            return np.interp(s, s_nodes, g) * np.cos(m * np.asarray(theta))

        return float(vals[0]), f

    def spectrum(self, count):
        """Lowest ``count`` eigenvalues counted with multiplicity (modes m > 0 twice)."""
        values = []
        for m in range(count):
            ev = self.mode(m, count)
            values.extend(ev)
            if m > 0:
                values.extend(ev)
            if m > 0 and len(values) >= count and min(ev) > sorted(values)[count - 1]:
                break
        return np.sort(np.asarray(values))[:count]


def sturm_liouville_spectrum(metric=None, count=16, resolution=4000):
    """Lowest eigenvalues of ``Delta_omega`` for an axisymmetric conformal metric.

    ``metric`` is a ``VolumeForm`` (density relative to the round form) or a
    callable ``rho(t)``; ``None`` means the round sphere.
    """
    return SturmLiouvilleLaplacian(metric, resolution).spectrum(count)
