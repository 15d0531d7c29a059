import json

import numpy as np
import pytest

from quantlap.bundles import MetricWeight, SectionBasis, hilb
from quantlap.errors import DomainError
from quantlap.oracle import HarmonicBuilder, cpn_spectrum, exact_balanced_eigenvalue
from quantlap.quantization import assemble_pstarp
from quantlap.spectral import (
    cluster_eigenvalues,
    eigendecompose,
    eigenspace_distance,
    fit_asymptotic,
    log_slope,
    match_oracle,
    trace_pairing_deviation,
)


def round_report(k):
    b = SectionBasis.line(k)
    rep = eigendecompose(assemble_pstarp(b, hilb(None, b)))
    spec = cpn_spectrum(1, k)
    return match_oracle(rep, spec.values(), spec.indices())


def test_round_spectrum_structure():
    k = 5
    rep = round_report(k)
    assert [b - a + 1 for a, b in rep.clusters] == [2 * i + 1 for i in range(k + 1)]
    assert abs(rep.eigenvalues[0]) < 1e-13
    for (a, b), i in zip(rep.clusters, range(k + 1)):
        assert np.allclose(rep.eigenvalues[a : b + 1], exact_balanced_eigenvalue(i, k), atol=1e-13)
    assert list(rep.cluster_i[:4]) == [0, 1, 1, 1]
    assert np.allclose(rep.rescaled, 4 * np.pi * k * k * rep.eigenvalues)


def test_kernel_eigenmatrix_is_identity():
    rep = round_report(3)
    E = rep.eigenmatrix(0)
    assert np.allclose(E, np.eye(4) / 2)


def test_cluster_eigenvalues():
    assert cluster_eigenvalues([0, 0, 1, 1 + 1e-9, 3], rel_gap=1e-6) == [(0, 1), (2, 3), (4, 4)]
    assert cluster_eigenvalues([0, 1, 1 + 1e-9]) == [(0, 0), (1, 1), (2, 2)]
    assert cluster_eigenvalues([]) == []


def test_eigenspace_distance_round():
    k = 6
    rep = round_report(k)
    for i in (1, 2):
        a, b = rep.clusters[i]
        _, f = HarmonicBuilder(i).normalized(0, "re", k)
        d, A = eigenspace_distance(f, rep, a, b, return_matrix=True)
        assert d < 1e-20
        assert A.shape == (k + 1, k + 1)
    with pytest.raises(DomainError):
        eigenspace_distance(f, rep, 1, 4)
    with pytest.raises(DomainError):
        eigenspace_distance(f, rep, 1, 2)
    with pytest.raises(DomainError):
        eigenspace_distance(f, rep, 3, 2)


def test_trace_pairing_deviation_matches_isometry_constant():
    k = 8
    rep = round_report(k)
    a, b = rep.clusters[1]
    op, D = trace_pairing_deviation(rep, a, b)
    # tr(A^2) = 1 for eigenmatrices, int H_A^2 = C_{1,k}
    from quantlap.oracle import isometry_constant

    assert np.isclose(op, abs(1 - k * float(isometry_constant(1, k))))
    assert D.shape == (3, 3)


def test_report_csv_json(tmp_path):
    rep = round_report(2)
    text = rep.to_csv(tmp_path / "s.csv", header=["run"], extra={"x": np.arange(9)})
    lines = text.splitlines()
    assert lines[0] == "# run"
    assert lines[1] == "j,nu,rescaled,cluster_i,oracle_lambda,abs_err,x"
    assert len(lines) == 2 + 9
    data = json.loads(rep.to_json(tmp_path / "s.json", meta={"a": 1}))
    assert data["k"] == 2 and len(data["rows"]) == 9
    assert data["clusters"] == [[0, 0], [1, 3], [4, 8]]


def test_unmatched_report_rows():
    b = SectionBasis.line(2)
    rep = eigendecompose(assemble_pstarp(b, hilb(MetricWeight.round(), b)))
    assert rep.abs_err is None
    assert rep.rows()[0][3] == ""


def test_fit_asymptotic_recovers_coefficients():
    ks = [8, 12, 16, 24, 32]
    vals = [2.0 / k - 3.0 / k**2 + 5.0 / k**3 for k in ks]
    fit = fit_asymptotic(ks, vals, (1, 2), (3,))
    assert np.isclose(fit.a1, 2.0) and np.isclose(fit.a2, -3.0)
    assert fit.residual < 1e-14
    d = fit.to_dict()
    assert d["powers"] == [1, 2, 3]
    vec = fit_asymptotic(ks, np.column_stack([vals, vals]), (1, 2), (3,))
    assert np.allclose(vec.a1, 2.0)
    with pytest.raises(DomainError):
        fit_asymptotic([1, 2], [1, 2])
    with pytest.raises(DomainError):
        fit_asymptotic([1, 2, 3], [1, 2, 3], (1, 2), (3, 4))


def test_log_slope():
    ks = np.array([8, 16, 32])
    assert np.isclose(log_slope(ks, 3.0 / ks**2), -2.0)
