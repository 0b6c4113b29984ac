"""Tour of the hypercomplex arithmetic layer.

Builds elements at several doubling levels, prints a small multiplication
table, and demonstrates the identities the rest of the package leans on:
anticommuting generators, power associativity, coefficient recovery by
projection, and the central imaginary unit of the complexified algebra.

Run from the repository root:

    python3 demos/algebra_tour.py
"""

import numpy as np

from cdburgers.algebra import (
    CdElement,
    ComplexCdElement,
    cd_conj,
    cd_mul,
    pi_project,
)

LEVEL_NAMES = {0: "reals", 1: "complex numbers", 2: "quaternions",
               3: "octonions", 4: "sedenions"}


def show_table(level, upto):
    print(f"generator products at level {level} "
          f"({LEVEL_NAMES.get(level, 'doubled algebra')}):")
    for j in range(1, upto):
        row = []
        for k in range(1, upto):
            prod = cd_mul(CdElement.basis(level, j),
                          CdElement.basis(level, k))
            idx = int(np.argmax(np.abs(prod.coeffs)))
            sign = "-" if prod.coeffs[idx] < 0 else "+"
            row.append(f"{sign}i{idx}" if idx else f"{sign}1 ")
        print(f"  i{j} * [i1..i{upto - 1}] -> " + " ".join(row))


def main():
    show_table(2, 4)
    print()

    # generators anticommute and square to -1 at every level
    for level in (2, 3, 4):
        i1 = CdElement.basis(level, 1)
        i2 = CdElement.basis(level, 2)
        assert cd_mul(i1, i2) == -cd_mul(i2, i1)
        assert cd_mul(i1, i1) == -CdElement.basis(level, 0)
    print("generators anticommute and square to -1 at levels 2, 3, 4")

    # octonions are not associative, but powers of one element are safe
    rng = np.random.default_rng(7)
    z = CdElement(3, rng.standard_normal(8))
    z2 = cd_mul(z, z)
    z3 = cd_mul(z2, z)
    gap = (cd_mul(z2, z3) - cd_mul(z3, z2)).norm()
    print(f"octonion z^2 z^3 - z^3 z^2 norm: {gap:.2e} (power associative)")
    a = CdElement(3, rng.standard_normal(8))
    b = CdElement(3, rng.standard_normal(8))
    c = CdElement(3, rng.standard_normal(8))
    assoc = (cd_mul(cd_mul(a, b), c) - cd_mul(a, cd_mul(b, c))).norm()
    print(f"octonion (ab)c - a(bc) norm:    {assoc:.2e} (not associative)")

    # conjugation reverses products and computes the squared norm
    ab = cd_mul(a, b)
    rev = cd_mul(cd_conj(b), cd_conj(a))
    print(f"conj(ab) - conj(b)conj(a) norm: "
          f"{(cd_conj(ab) - rev).norm():.2e}")

    # projections read coefficients back out through the product formula
    w = CdElement(3, rng.standard_normal(8))
    recovered = [pi_project(j, w) for j in range(8)]
    print("projection recovers coefficients:",
          np.allclose(recovered, w.coeffs, atol=1e-13))

    # the complexified algebra adds one more imaginary unit that commutes
    # with every generator (unlike the generators themselves)
    u = ComplexCdElement(a, b)
    v = ComplexCdElement(c, CdElement.zero(3))
    left = u * v
    unit = ComplexCdElement.central_unit(3)
    print("complexified product computed; central unit commutes:",
          (u * unit - unit * u).norm_sq() == 0.0)
    print("sample component pi_1(uv):", f"{pi_project(1, left.re_part):.4f}")


if __name__ == "__main__":
    main()
