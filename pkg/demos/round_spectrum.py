"""Spectrum of P*P for the balanced round embedding of CP^1.

Assembles the quadratic form at a few degrees, groups the eigenvalues and
compares them with the exact factorial formula and with the simplified
rational i(i+1)/((k+i)(k+i+1)), which is only correct for i <= 2.
"""

import numpy as np

from quantlap import SectionBasis, assemble_pstarp, eigendecompose, hilb
from quantlap.oracle import closed_form_eigenvalue, exact_balanced_eigenvalue


def main():
    for k in (2, 4, 8):
        basis = SectionBasis.line(k)
        report = eigendecompose(assemble_pstarp(basis, hilb(None, basis)))
        print(f"k = {k}: N^2 = {basis.N ** 2} eigenvalues, {len(report.clusters)} clusters")
        for i, (a, b) in enumerate(report.clusters):
            nu = report.eigenvalues[a]
            exact = exact_balanced_eigenvalue(i, k)
            simple = float(closed_form_eigenvalue(i, k)) if i else 0.0
            print(
                f"  i={i}  mult={b - a + 1:2d}  nu={nu:.12f}  "
                f"|nu-exact|={abs(nu - exact):.1e}  |nu-simplified|={abs(nu - simple):.1e}  "
                f"4 pi k^2 nu / lambda_i = {report.rescaled[a] / (4 * np.pi * i * (i + 1)) if i else 0:.4f}"
            )


if __name__ == "__main__":
    main()
