"""Spherical-harmonic analysis on tensor quadrature grids.

Used for spectral differentiation of fields on the round CP^1 (volume 1).
Harmonics are normalised so that ``int |Y|^2 Omega = 1`` for the round form
``Omega`` of total volume 1, and the round Laplacian acts on degree ``l`` by
``4 pi l (l + 1)``.
"""

import numpy as np
from scipy.special import sph_legendre_p_all

__all__ = [
    "round_eigenvalue",
    "SphericalTransform",
    "real_harmonic",
    "fit_real_harmonics",
]


def round_eigenvalue(l):
    """Eigenvalue of the round Laplacian (volume-1 sphere) on degree-l harmonics."""
    l = np.asarray(l)
    return 4.0 * np.pi * l * (l + 1)


def _legendre_table(lmax, mmax, t):
    # rows l, columns m >= 0, values Y_lm(theta, 0) on the unit sphere
    table = sph_legendre_p_all(lmax, mmax, np.arccos(np.clip(t, -1.0, 1.0)))[0]
    return table[:, : mmax + 1]


class SphericalTransform:
    """Forward/backward harmonic transform on a ``QuadratureGrid``.

    Parameters
    ----------
    grid : QuadratureGrid
        Gauss-Legendre in ``t`` times uniform azimuth.
    lmax : int, optional
        Band limit.  Defaults to the largest degree the grid resolves.
    """

    def __init__(self, grid, lmax=None):
        n_t, M = grid.shape
        self.grid = grid
        mmax_grid = (M - 1) // 2
        self.lmax = n_t - 1 if lmax is None else int(lmax)
        self.mmax = min(self.lmax, mmax_grid)
        # unit-sphere normalisation -> volume-1 normalisation
        self._P = np.sqrt(4.0 * np.pi) * _legendre_table(self.lmax, self.mmax, grid.t_nodes)
        self._w = grid.t_weights / 2.0

    def analyze(self, values):
        """Harmonic coefficients of a field sampled on the grid.

        The result has shape ``(lmax + 1, 2 mmax + 1)`` with column ``mmax + m``
        holding order ``m``.
        """
        n_t, M = self.grid.shape
        f = np.asarray(values).reshape(n_t, M)
        F = np.fft.fft(f, axis=1) / M
        coef = np.zeros((self.lmax + 1, 2 * self.mmax + 1), dtype=complex)
        for m in range(-self.mmax, self.mmax + 1):
            am = abs(m)
            P = self._P[:, am, :] * (-1) ** am if m < 0 else self._P[:, am, :]
            coef[:, self.mmax + m] = P @ (self._w * F[:, m % M])
        for m in range(-self.mmax, self.mmax + 1):
            coef[: abs(m), self.mmax + m] = 0.0
        return coef

    def synthesize(self, coef):
        n_t, M = self.grid.shape
        G = np.zeros((n_t, M), dtype=complex)
        for m in range(-self.mmax, self.mmax + 1):
            am = abs(m)
            P = self._P[:, am, :] * (-1) ** am if m < 0 else self._P[:, am, :]
            G[:, m % M] += coef[:, self.mmax + m] @ P
        return (np.fft.ifft(G, axis=1) * M).ravel()

    def apply(self, values, multiplier):
        """Apply a degree-dependent multiplier ``multiplier(l)`` to a field."""
        coef = self.analyze(values)
        mult = np.asarray(multiplier(np.arange(self.lmax + 1)), dtype=float)
        out = self.synthesize(coef * mult[:, None])
        if np.isrealobj(values):
            return out.real
        return out

    def laplacian(self, values, power=1):
        """Round Laplacian (positive spectrum) applied ``power`` times."""
        return self.apply(values, lambda l: round_eigenvalue(l) ** power)

    def degree_energy(self, values):
        """L^2 mass of ``values`` per harmonic degree."""
        coef = self.analyze(values)
        return np.sum(np.abs(coef) ** 2, axis=1)


def real_harmonic(l, m, t, theta):
    """Real spherical harmonic of degree ``l``, order ``m`` with unit L^2 norm.

    ``m > 0`` gives the cosine branch, ``m < 0`` the sine branch.
    """
    t = np.asarray(t, dtype=float)
    theta = np.asarray(theta, dtype=float)
    am = abs(m)
    if am > l:
        raise ValueError("|m| must not exceed l")
    P = np.sqrt(4.0 * np.pi) * _legendre_table(l, am, t.ravel())[l, am].reshape(t.shape)
    if m > 0:
        return np.sqrt(2.0) * P * np.cos(am * theta)
    if m < 0:
        return np.sqrt(2.0) * P * np.sin(am * theta)
    return P


def fit_real_harmonics(t, theta, values, lmax):
    """Least-squares fit of scattered samples by real harmonics up to ``lmax``.

    Returns a list of ``(l, m, coefficient)`` triples.
    """
    t = np.asarray(t, dtype=float)
    theta = np.asarray(theta, dtype=float)
    labels = [(l, m) for l in range(lmax + 1) for m in range(-l, l + 1)]
    design = np.column_stack([real_harmonic(l, m, t, theta) for l, m in labels])
    coef, *_ = np.linalg.lstsq(design, np.asarray(values, dtype=float), rcond=None)
    return [(l, m, float(c)) for (l, m), c in zip(labels, coef)]
