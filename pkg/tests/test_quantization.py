import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_hermitian
from quantlap.bundles import InnerProductMatrix, MetricWeight, SectionBasis, hilb
from quantlap.errors import DomainError, UnsupportedError
from quantlap.geometry import build_quadrature
from quantlap.oracle import HarmonicBuilder
from quantlap.quantization import (
    HermitianBasis,
    PStarPForm,
    QuantizationContext,
    assemble_pstarp,
    dmu_bar,
    grad_l2_norm,
    h_of,
    mu_bar,
    q_of,
    xi_pairing_integral,
)


def round_context(k, oversample=1):
    b = SectionBasis.line(k)
    return QuantizationContext(b, hilb(MetricWeight.round(), b), build_quadrature(k, oversample))


@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_hermitian_basis_round_trip(N, seed):
    rng = np.random.default_rng(seed)
    hb = HermitianBasis(N)
    A = random_hermitian(rng, N)
    c = hb.coords(A)
    assert c.shape == (N * N,)
    assert np.allclose(hb.from_coords(c), A)
    B = random_hermitian(rng, N)
    assert np.isclose(c @ hb.coords(B), np.trace(A @ B).real)


def test_hermitian_basis_order():
    E = HermitianBasis(2).elements()
    assert np.allclose(E[0], np.diag([1, 0]))
    assert np.allclose(E[2], np.array([[0, 1], [1, 0]]) / np.sqrt(2))
    assert np.allclose(E[3], np.array([[0, 1j], [-1j, 0]]) / np.sqrt(2))
    assert np.allclose(HermitianBasis(3).identity_coords()[:3], 1.0)


def test_mu_bar_round_balanced():
    for k in (1, 3, 8):
        b = SectionBasis.line(k)
        mb = mu_bar(b, hilb(MetricWeight.round(), b))
        assert np.allclose(mb.matrix, np.eye(k + 1) / (k + 1), atol=1e-14)
        assert np.isclose(mb.trace, 1.0)
        assert mb.residual() < 1e-14


def test_mu_bar_trace_rank_two():
    b = SectionBasis.split(3, 1, 0)
    mb = mu_bar(b, hilb(MetricWeight.round(), b))
    assert np.isclose(mb.trace, 2.0)


def test_q_of_identity_and_harmonics():
    k = 6
    ctx = round_context(k)
    assert np.allclose(ctx.q_of(lambda t, th: np.ones_like(t)), np.eye(k + 1), atol=1e-13)
    Q = q_of(lambda t, th: t, SectionBasis.line(k), 7 * np.eye(7))
    assert np.allclose(Q, Q.conj().T)


def test_context_rejects_bad_input():
    ctx = round_context(3)
    with pytest.raises(DomainError):
        ctx.hamiltonian(np.eye(3))
    with pytest.raises(DomainError):
        ctx.hamiltonian(np.triu(np.ones((4, 4))))
    with pytest.raises(DomainError):
        QuantizationContext(SectionBasis.line(3), np.eye(5))


def test_h_of_harmonic_matrix():
    i, k = 2, 5
    hb = HarmonicBuilder(i, k)
    ctx = round_context(k)
    for m, part in hb.labels():
        A = hb.matrix(m, part)
        f = hb.function(m, part)
        HA = h_of(A, ctx.basis, ctx.H)
        t = np.array([0.3, -0.7])
        th = np.array([0.2, 2.0])
        assert np.allclose(HA(t, th), f(t, th), atol=1e-12)


def test_form_matches_definition(rng):
    k = 4
    b = SectionBasis.line(k)
    H = hilb(MetricWeight.axial([0, 0.2]), b)
    form = assemble_pstarp(b, H, build_quadrature(k, 2))
    ctx = form.context
    A, B = random_hermitian(rng, k + 1), random_hermitian(rng, k + 1)
    assert np.isclose(form.value(A, B), ctx.pair(A, B))
    # integral of the FS pairing of the vector fields
    assert np.isclose(form.value(A, A), xi_pairing_integral(A, A, ctx), rtol=1e-6)
    assert np.allclose(form.form, form.form.T)


def test_form_identity_kernel_and_psd():
    for b in (SectionBasis.line(5), SectionBasis.split(2, 1, 0)):
        form = assemble_pstarp(b, hilb(MetricWeight.round(), b))
        Id = np.eye(b.N)
        assert np.allclose(form.apply(Id), 0, atol=1e-13)
        assert abs(form.value(Id, Id)) < 1e-13
        assert form.min_eigenvalue() > -1e-12


def test_global_identity_on_random_pairs(rng):
    b = SectionBasis.line(5)
    form = assemble_pstarp(b, hilb(MetricWeight.axial([0, 0.3, 0.1]), b), build_quadrature(5, 2))
    ctx = form.context
    mb = form.mubar.matrix
    for _ in range(10):
        A, B = random_hermitian(rng, 6), random_hermitian(rng, 6)
        lhs = form.value(A, B) + ctx.l2_inner(A, B)
        assert abs(lhs - np.trace(A @ B @ mb).real) < 1e-12


def test_dmu_bar_bound(rng):
    b = SectionBasis.line(6)
    form = assemble_pstarp(b, hilb(MetricWeight.axial([0, 0.3]), b), build_quadrature(6, 2))
    op = np.linalg.norm(form.mubar.matrix, 2)
    for _ in range(20):
        A = random_hermitian(rng, 7)
        assert np.linalg.norm(dmu_bar(A, form)) <= 2 * np.linalg.norm(A) * op


@pytest.mark.parametrize("binary", [False, True])
def test_dump_load_round_trip(tmp_path, binary):
    form = assemble_pstarp(SectionBasis.line(3), 4 * np.eye(4))
    path = tmp_path / ("form.bin" if binary else "form.txt")
    form.dump(path, binary=binary)
    back = PStarPForm.load(path, binary=binary)
    assert back.N == 4
    assert np.array_equal(back.form, form.form)


def test_dump_text_layout(tmp_path):
    form = assemble_pstarp(SectionBasis.line(1), 2 * np.eye(2))
    path = tmp_path / "f.txt"
    form.dump(path)
    lines = path.read_text().split()
    assert lines[0] == "2" and len(lines) == 1 + 10


def test_load_rejects_size_mismatch(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("2\n1\n2\n")
    with pytest.raises(DomainError):
        PStarPForm.load(path)


def test_grad_norm_methods_agree():
    k = 5
    ctx = round_context(k, oversample=2)
    A, _ = HarmonicBuilder(2, k).normalized(1, "im")
    analytic = grad_l2_norm(A, ctx)
    spectral = grad_l2_norm(A, ctx, method="spectral")
    assert np.isclose(analytic, spectral, rtol=1e-9)
    with pytest.raises(DomainError):
        grad_l2_norm(A, ctx, method="other")
    b2 = SectionBasis.split(2, 1, 0)
    with pytest.raises(UnsupportedError):
        grad_l2_norm(np.eye(b2.N), QuantizationContext(b2, hilb(None, b2)))


def test_chunked_gram_independent_of_chunk():
    b = SectionBasis.line(4)
    H = InnerProductMatrix(5 * np.eye(5))
    g1 = QuantizationContext(b, H, chunk=7).gram2()
    g2 = QuantizationContext(b, H, chunk=10_000).gram2()
    assert np.allclose(g1, g2, atol=1e-15)
