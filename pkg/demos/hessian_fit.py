"""Asymptotics of tr(Q_phi P*P Q_phi) for spherical harmonics.

The expansion a1/k + a2/k^2 + ... has a1 = i(i+1) and a2 given by the
Lichnerowicz operator.  Short degree ranges need the higher powers of 1/k as
extra fit terms; the output shows how the fit settles as the range grows.
"""

from quantlap import HarmonicBuilder, build_quadrature, hessian_asymptotics
from quantlap.oracle import hessian_coefficients_round


def main():
    grid = build_quadrature(8)
    for i in (1, 2):
        phi = HarmonicBuilder(i).unit_function(0)
        a1, a2 = hessian_coefficients_round(phi(grid.t, grid.theta), grid)
        print(f"degree {i}: oracle a1 = {a1:.4f}, a2 = {a2:.4f}")
        for degrees, extra in (((8, 12, 16, 24, 32), ()), ((8, 12, 16, 24, 32), (3, 4)),
                               ((16, 24, 32, 48, 64, 96, 128), (3, 4))):
            fit = hessian_asymptotics(phi, degrees, nuisance=extra)
            print(f"  k={degrees[0]}..{degrees[-1]}, extra powers {extra}: a1 = {fit.a1:.4f}, a2 = {fit.a2:.4f}")


if __name__ == "__main__":
    main()
