#!/usr/bin/env python3
"""Round trip: load -> spectral density -> recovered load.

Starts from a Foster description, forms the rational spectral density
its coupling would present, then runs the synthesis chain backwards:
factor the density, take the scattering quotient, invert to an
impedance, and realize it. Prints each intermediate object so the
chain can be eyeballed.
"""

import numpy as np

from wavebath.coupling import run_synthesis
from wavebath.ratfun import Polynomial, RationalFunction
from wavebath.realization import FosterSpec, foster_to_rational

SPEC = FosterSpec(k0=1.0, tanks=((0.5, 1.0),))


def density_of(spec, gain=2.0):
    Z = foster_to_rational(spec)
    DN = Z.den + Z.num
    den = DN * DN.reflected()
    sign = np.sign(den.coeffs[0])
    return RationalFunction(Polynomial([gain * gain * sign]), den,
                            reduce=False)


def show(label, R):
    print(f"  {label:<10} {R.to_text()}")


def main():
    print("original load:", SPEC.to_text())
    Phi = density_of(SPEC)
    show("Phi", Phi)

    chain = run_synthesis(Phi)
    show("W", chain.W)
    show("K", chain.K)
    show("Z0", chain.impedance)
    print("recovered load:", chain.foster.to_text())

    target = foster_to_rational(SPEC)
    gap = max(
        float(np.max(np.abs(chain.impedance.num.coeffs - target.num.coeffs))),
        float(np.max(np.abs(chain.impedance.den.coeffs - target.den.coeffs))),
    )
    print(f"impedance coefficient gap: {gap:.3e}")
    print("forward spectrum eigenvalues:",
          np.sort(np.linalg.eigvals(chain.pair.gamma)))


if __name__ == "__main__":
    main()
