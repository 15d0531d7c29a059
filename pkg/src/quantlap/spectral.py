"""Spectra of ``P^*P``, oracle matching, eigenspace distances and asymptotic fits."""

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, eigh

from .bundles import SectionBasis, bergman_kernel_diag, hilb, toeplitz_kernel_diag
from .errors import DomainError, PrecisionError
from .geometry import build_quadrature
from .quantization import HermitianBasis, QuantizationContext

__all__ = [
    "SpectrumReport",
    "AsymptoticFit",
    "eigendecompose",
    "cluster_eigenvalues",
    "match_oracle",
    "eigenspace_distance",
    "trace_pairing_deviation",
    "fit_asymptotic",
    "log_slope",
    "hessian_asymptotics",
    "bergman_asymptotics",
    "toeplitz_asymptotics",
]

CSV_COLUMNS = ("j", "nu", "rescaled", "cluster_i", "oracle_lambda", "abs_err")
# relative gap separating clusters; exact round gaps at k = 16 are ~1e-9
CLUSTER_GAP = 1e-10


@dataclass
class SpectrumReport:
    """Sorted eigenvalues of ``P^*P`` with their eigenmatrices.

    ``eigenvectors[:, j]`` holds the coordinates of the j-th eigenmatrix in
    the trace-orthonormal Hermitian basis.  ``cluster_i`` and
    ``oracle_lambda`` are filled by :func:`match_oracle`.
    """

    k: int
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    hbasis: HermitianBasis
    n: int = 1
    context: QuantizationContext = None
    clusters: list = field(default_factory=list)
    cluster_i: np.ndarray = None
    oracle_lambda: np.ndarray = None

    @property
    def rescaled(self):
        """``4 pi k^{n+1} nu``."""
        return 4.0 * np.pi * float(self.k) ** (self.n + 1) * self.eigenvalues

    @property
    def abs_err(self):
        if self.oracle_lambda is None:
            return None
        return np.abs(self.rescaled - self.oracle_lambda)

    def eigenmatrix(self, j):
        return self.hbasis.from_coords(self.eigenvectors[:, j])

    def eigenmatrices(self, start, stop):
        """Eigenmatrices ``start..stop`` inclusive, shape ``(m, N, N)``."""
        return self.hbasis.from_coords(self.eigenvectors[:, start : stop + 1].T)

    def rows(self):
        out = []
        for j, nu in enumerate(self.eigenvalues):
            ci = "" if self.cluster_i is None else int(self.cluster_i[j])
            lam = "" if self.oracle_lambda is None else float(self.oracle_lambda[j])
            err = "" if self.oracle_lambda is None else float(self.abs_err[j])
            out.append((j, float(nu), float(self.rescaled[j]), ci, lam, err))
        return out

    def to_csv(self, path=None, header=None, extra=None):
        """Write ``j, nu, rescaled, cluster_i, oracle_lambda, abs_err`` rows.

        ``header`` lines are written first, each prefixed with ``#``.  ``extra``
        maps additional column names to per-eigenvalue sequences.
        """
        buf = io.StringIO()
        for line in header or ():
            buf.write(f"# {line}\n")
        writer = csv.writer(buf, lineterminator="\n")
        extra = extra or {}
        writer.writerow(list(CSV_COLUMNS) + list(extra))
        for j, row in enumerate(self.rows()):
            vals = [_fmt(v) for v in row] + [_fmt(col[j]) for col in extra.values()]
            writer.writerow(vals)
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def to_json(self, path=None, meta=None):
        payload = {
            "k": self.k,
            "n": self.n,
            "meta": meta or {},
            "columns": list(CSV_COLUMNS),
            "rows": [[_json_val(v) for v in row] for row in self.rows()],
            "clusters": [list(map(int, c)) for c in self.clusters],
        }
        text = json.dumps(payload, indent=1, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def _json_val(v):
    return None if v == "" else v


def _fix_signs(vecs, tol=1e-12):
    # first coordinate above tol made positive
    vecs = vecs.copy()
    for j in range(vecs.shape[1]):
        col = vecs[:, j]
        idx = np.flatnonzero(np.abs(col) > tol * np.max(np.abs(col)))
        if idx.size and col[idx[0]] < 0:
            vecs[:, j] = -col
    return vecs


def eigendecompose(form, k=None, n=1, rel_gap=CLUSTER_GAP):
    """Full eigendecomposition of an assembled ``PStarPForm``.

    Raises
    ------
    PrecisionError
        If the dense eigensolver fails.
    """
    if k is None:
        if form.context is None:
            raise DomainError("degree k required for forms without context")
        k = form.context.basis.k
    try:
        vals, vecs = eigh(form.form)
    except LinAlgError as exc:
        raise PrecisionError("eigensolver did not converge") from exc
    report = SpectrumReport(
        k=int(k), eigenvalues=vals, eigenvectors=_fix_signs(vecs), hbasis=form.hbasis,
        n=n, context=form.context,
    )
    report.clusters = cluster_eigenvalues(vals, rel_gap)
    return report


def cluster_eigenvalues(values, rel_gap=CLUSTER_GAP):
    """Group sorted eigenvalues separated by less than ``rel_gap * max|value|``.

    Returns ``(start, stop)`` index pairs, inclusive.
    """
    values = np.asarray(values)
    if values.size == 0:
        return []
    thresh = rel_gap * max(np.max(np.abs(values)), 1e-300)
    clusters, start = [], 0
    for j in range(1, values.size):
        if values[j] - values[j - 1] > thresh:
            clusters.append((start, j - 1))
            start = j
    clusters.append((start, values.size - 1))
    return clusters


def match_oracle(report, oracle_values, oracle_indices=None):
    """Attach oracle eigenvalues by multiplicity counting.

    The j-th computed eigenvalue is paired with the j-th oracle value
    (both ascending).  ``oracle_indices`` labels the oracle values (e.g. the
    harmonic degree); defaults to distinct-value ranks.
    """
    lam = np.asarray(oracle_values, dtype=float)
    m = min(lam.size, report.eigenvalues.size)
    out_lam = np.full(report.eigenvalues.size, np.nan)
    out_lam[:m] = lam[:m]
    if oracle_indices is None:
        _, ranks = np.unique(np.round(lam, 9), return_inverse=True)
        oracle_indices = ranks
    idx = np.full(report.eigenvalues.size, -1)
    idx[:m] = np.asarray(oracle_indices)[:m]
    report.oracle_lambda = out_lam
    report.cluster_i = idx
    return report


def _flatten_fields(values, weights):
    # real design columns for the weighted L^2 pairing of (matrix) fields
    sw = np.sqrt(weights)
    if values.ndim == 1:
        return values * sw
    n = values.shape[0]
    flat = values.reshape(n, -1) * sw[:, None]
    return np.concatenate([flat.real.ravel(), flat.imag.ravel()])


def eigenspace_distance(phi, report, p, q, return_matrix=False):
    """``min ||H_A - phi||^2_{L^2}`` over ``A`` in the span of eigenmatrices ``p..q``.

    ``phi`` is a callable of ``(t, theta)``.
    """
    if q < p or p < 0 or q >= report.eigenvalues.size:
        raise DomainError("empty or invalid eigenvalue range")
    if report.oracle_lambda is not None:
        lam = report.oracle_lambda
        inside = lam[p : q + 1]
        if np.ptp(inside) > 1e-9 * max(1.0, abs(inside[0])):
            raise DomainError("range spans several oracle eigenvalues")
        if (p > 0 and lam[p - 1] >= lam[p]) or (q + 1 < lam.size and lam[q + 1] <= lam[q]):
            raise DomainError("range does not cover a whole eigenvalue cluster")
    ctx = report.context
    if ctx is None:
        raise DomainError("report carries no embedding context")
    grid = ctx.grid
    target = np.asarray(phi(grid.t, grid.theta))
    if ctx.r > 1 and target.ndim == 1:
        target = target[:, None, None] * np.eye(ctx.r)
    mats = report.eigenmatrices(p, q)
    cols = np.column_stack(
        [_flatten_fields(ctx.hamiltonian(A), ctx.weights) for A in mats]
    )
    rhs = _flatten_fields(target, ctx.weights)
    coef, *_ = np.linalg.lstsq(cols, rhs, rcond=None)
    resid = cols @ coef - rhs
    dist = float(resid @ resid)
    if return_matrix:
        return dist, np.tensordot(coef, mats, axes=(0, 0))
    return dist


def trace_pairing_deviation(report, start, stop):
    """Operator norm of ``tr(A_a A_b) - k^n <H_{A_a}, H_{A_b}>`` over eigenmatrices.

    Returns ``(norm, matrix)``.
    """
    ctx = report.context
    mats = report.eigenmatrices(start, stop)
    m = len(mats)
    D = np.zeros((m, m))
    kn = float(report.k) ** report.n
    for a in range(m):
        for b in range(a, m):
            val = np.trace(mats[a] @ mats[b]).real - kn * ctx.l2_inner(mats[a], mats[b])
            D[a, b] = D[b, a] = val
    return float(np.linalg.norm(D, 2)), D


@dataclass
class AsymptoticFit:
    """Least-squares fit ``values(k) ~ sum_p c_p k^{-p}``.

    ``coefficients`` maps each power (including nuisance powers) to its
    fitted coefficient.  ``residual`` is the RMS misfit.
    """

    degrees: tuple
    values: np.ndarray
    powers: tuple
    coefficients: dict
    residual: float
    condition: float

    def coefficient(self, p):
        return self.coefficients[p]

    @property
    def a1(self):
        return self.coefficients.get(1)

    @property
    def a2(self):
        return self.coefficients.get(2)

    def to_dict(self):
        def conv(v):
            v = np.asarray(v)
            return v.tolist()

        return {
            "degrees": list(self.degrees),
            "values": conv(self.values),
            "powers": list(self.powers),
            "coefficients": {str(p): conv(c) for p, c in self.coefficients.items()},
            "residual": float(self.residual),
            "condition": float(self.condition),
        }


def fit_asymptotic(degrees, values, powers=(1, 2), nuisance=()):
    """Fit ``values`` against ``k^{-p}`` for ``p`` in ``powers + nuisance``.

    ``values`` may be an array with the degree along the first axis; the fit
    is then done column-wise.  Never raises on ill-conditioning; the
    condition number and residual are reported instead.
    """
    degrees = tuple(int(k) for k in degrees)
    if len(degrees) < 3:
        raise DomainError("asymptotic fits need at least 3 degrees")
    allp = tuple(powers) + tuple(nuisance)
    if len(allp) > len(degrees):
        raise DomainError("more fit terms than degrees")
    k = np.asarray(degrees, dtype=float)
    X = np.column_stack([k ** (-float(p)) for p in allp])
    Y = np.asarray(values, dtype=float)
    flat = Y.reshape(len(degrees), -1)
    # column scaling for conditioning
    scale = np.max(np.abs(X), axis=0)
    coef, *_ = np.linalg.lstsq(X / scale, flat, rcond=None)
    coef = coef / scale[:, None]
    resid = flat - X @ coef
    rms = float(np.sqrt(np.mean(resid**2)))
    cond = float(np.linalg.cond(X / scale))
    shape = Y.shape[1:]
    coefficients = {p: (coef[j].reshape(shape) if shape else float(coef[j, 0])) for j, p in enumerate(allp)}
    return AsymptoticFit(degrees, Y, allp, coefficients, rms, cond)


def log_slope(degrees, values):
    """Least-squares slope of ``log|values|`` against ``log k``."""
    x = np.log(np.asarray(degrees, dtype=float))
    y = np.log(np.abs(np.asarray(values, dtype=float)))
    return float(np.polyfit(x, y, 1)[0])


def hessian_asymptotics(phi, degrees, h=None, volume=None, psi=None, nuisance=(3, 4),
                        oversample=1):
    """Fit ``tr(Q_phi P^*P Q_psi) = a_1/k + a_2/k^2 + ...`` over ``degrees``.

    ``psi`` defaults to ``phi``.  The embedding at each degree is
    ``Hilb_k(h)``; ``phi`` and ``psi`` are callables of ``(t, theta)``.
    """
    degrees = sorted(int(k) for k in degrees)
    values = []
    for k in degrees:
        basis = SectionBasis.line(k)
        H = hilb(h, basis, volume=volume)
        grid = build_quadrature(k, oversample)
        ctx = QuantizationContext(basis, H, grid, volume)
        Qa = ctx.q_of(phi)
        Qb = Qa if psi is None else ctx.q_of(psi)
        values.append(ctx.pair(Qa, Qb))
    return fit_asymptotic(degrees, values, (1, 2), nuisance)


def bergman_asymptotics(h, degrees, t, theta, volume=None, nuisance=(2, 3)):
    """Fit ``B_k(x) - k = A_1(x) + c/k + ...`` at the points ``(t, theta)``.

    The constant term (power 0) is ``A_1``.
    """
    degrees = sorted(int(k) for k in degrees)
    rows = []
    for k in degrees:
        basis = SectionBasis.line(k)
        B = bergman_kernel_diag(h, basis, grid=_fine_grid(h, k), volume=volume, at=(t, theta))
        rows.append(B - k)
    return fit_asymptotic(degrees, np.array(rows), (0, 1), nuisance)


def toeplitz_asymptotics(f, h, degrees, t, theta, volume=None, nuisance=(2, 3)):
    """Fit ``K_{k,f}(x) - k f(x) = b_1(x) + b_2(x)/k + ...`` at ``(t, theta)``."""
    degrees = sorted(int(k) for k in degrees)
    fx = np.asarray(f(np.ravel(t), np.ravel(theta)))
    rows = []
    for k in degrees:
        basis = SectionBasis.line(k)
        K = toeplitz_kernel_diag(f, basis, h, grid=_fine_grid(h, k), volume=volume, at=(t, theta))
        rows.append(K - k * fx)
    return fit_asymptotic(degrees, np.array(rows), (0, 1), nuisance)


def _fine_grid(h, k):
    band = getattr(h, "bandwidth", 0) if h is not None else 0
    return build_quadrature(k + 4 * band + 8, 2 if band else 1)
