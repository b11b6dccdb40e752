"""Closing the wave boundary around a lossless load.

Coupling a load with impedance Z(s) = N(s)/D(s) to a matched
transmission medium splits the port variables into an incoming wave w
and an outgoing wave; eliminating either one yields two state
representations of the same trajectory,

    forward   xi' = Gamma xi     + 2 b0 w,      Gamma    = A - b0 c0,
    backward  xi' = Gamma_bar xi + 2 b0 wbar,   Gamma_bar = A + b0 c0,

with det(sI - Gamma) ~ D + N Hurwitz and det(sI - Gamma_bar) ~ D - N
anti-Hurwitz. The reflection map from the incoming wave to the
outgoing wave (outgoing measured positive) is the scattering function

    K(s) = (Z(s) - 1)/(Z(s) + 1),    K(infinity) = -1,

an inner function. All transfer identities in this module are stated
with that outgoing-positive sign; the raw resolvent quotient between
the two representations is the negative of K because the backward
drive enters with the opposite orientation, and the functions below
normalize it so that both computation routes return the same K.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ratfun import RationalFunction, is_inner, is_lossless_pr
from .realization import (
    FosterExtractionError,
    ImproperImpedanceError,
    LosslessRealization,
    StateSpace,
    foster_from_rational,
    foster_realize,
    transfer_function,
    verify_lossless_certificate,
)
from .ratfun import spectral_factor


class InvalidLoadError(ValueError):
    """Load failed its energy certificate when closing the loops."""


class TrivialObservableError(ValueError):
    """Observable reads neither the state nor the port."""


class SynthesisStageError(ValueError):
    """A stage of the spectrum-to-load chain failed; .stage names it."""

    def __init__(self, stage, cause):
        self.stage = stage
        super().__init__(f"synthesis stage {stage!r}: {cause}")


@dataclass(frozen=True, eq=False)
class CoupledModelPair:
    """Forward/backward feedback matrices plus the scattering function.

    Invariants established on construction: the forward spectrum lies
    strictly in the open left half-plane, the backward spectrum is its
    mirror image (greedy matching within 1e-6 of the spectral radius),
    and K is inner.
    """

    gamma: np.ndarray
    gamma_bar: np.ndarray
    input_gain: np.ndarray
    K: RationalFunction

    def __post_init__(self):
        g = np.array(self.gamma, dtype=float)
        gb = np.array(self.gamma_bar, dtype=float)
        gain = np.array(self.input_gain, dtype=float).reshape(-1)
        n = g.shape[0]
        if g.shape != (n, n) or gb.shape != (n, n) or gain.size != n:
            raise ValueError("inconsistent dimensions in coupled pair")
        for arr in (g, gb, gain):
            arr.setflags(write=False)
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "gamma_bar", gb)
        object.__setattr__(self, "input_gain", gain)
        ef = np.linalg.eigvals(g)
        if np.any(ef.real >= 0):
            raise ValueError(
                f"forward matrix must be strictly stable, eigs {ef}"
            )
        res = mirror_residual(self)
        rho = float(np.max(np.abs(ef)))
        if res > 1e-6 * max(rho, 1.0):
            raise ValueError(f"spectra are not mirror images (residual {res:.3e})")
        if not is_inner(self.K):
            raise ValueError("scattering function is not inner")

    @property
    def dim(self):
        return self.gamma.shape[0]


@dataclass(frozen=True, eq=False)
class Observable:
    """Scalar output y = c xi + d i0 read at the coupling port.

    h and h_bar are the effective state-read rows of the forward and
    backward representations (the port current i0 trades between the
    state and the wave differently in the two)."""

    c: np.ndarray
    d: float
    h: np.ndarray
    h_bar: np.ndarray

    def __post_init__(self):
        c = np.array(self.c, dtype=float).reshape(-1)
        h = np.array(self.h, dtype=float).reshape(-1)
        hb = np.array(self.h_bar, dtype=float).reshape(-1)
        if not (c.size == h.size == hb.size):
            raise ValueError("observable rows disagree in length")
        if np.max(np.abs(h + hb - 2.0 * c)) > 1e-12 * max(1.0, np.max(np.abs(c))):
            raise ValueError("rows must satisfy h + h_bar = 2c")
        for arr in (c, h, hb):
            arr.setflags(write=False)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "h_bar", hb)
        object.__setattr__(self, "d", float(self.d))

    @classmethod
    def build(cls, load: LosslessRealization, c, d):
        """Make the observable rows for a given load's port row c0."""
        c = np.asarray(c, dtype=float).reshape(-1)
        d = float(d)
        if np.all(c == 0.0) and d == 0.0:
            raise TrivialObservableError(
                "observable must read the state or the port current"
            )
        c0 = load.ss.c
        return cls(c, d, c - d * c0, c + d * c0)


def close_loops(load: LosslessRealization) -> CoupledModelPair:
    """Build the forward/backward pair for a certified lossless load.

    The scattering function is computed from the impedance (canonical
    route) and cross-checked against the state-space resolvent
    quotient; disagreement indicates a conditioning problem and is
    reported rather than ignored.
    """
    rep = verify_lossless_certificate(load)
    if not rep.ok:
        raise InvalidLoadError(
            f"certificate residuals too large: lyapunov "
            f"{rep.lyapunov_residual:.2e}, gain {rep.gain_residual:.2e}"
        )
    A, b0, c0 = load.ss.A, load.ss.b, load.ss.c
    outer = np.outer(b0, c0)
    Z0 = transfer_function(load.ss)
    pair = CoupledModelPair(A - outer, A + outer, 2.0 * b0, scattering_K(Z0))
    K_ss = scattering_K_statespace(pair, load)
    if not K_ss.close_to(pair.K, tol=1e-8):
        raise InvalidLoadError(
            "scattering routes disagree beyond 1e-8; load is ill-conditioned"
        )
    return pair


def scattering_K(Z0: RationalFunction, validate=True) -> RationalFunction:
    """Reflection coefficient K = (Z0 - 1)/(Z0 + 1) of a lossless load.

    With validate=True (the default) Z0 must be a strictly proper
    lossless impedance, which guarantees K inner with K(inf) = -1.
    validate=False applies the Moebius map to arbitrary rational input
    (useful for formula-level checks; no inner guarantee).
    """
    if validate:
        dn = Z0.num.degree
        dd = Z0.den.degree
        if dn is None or dn >= dd:
            raise ValueError("impedance must be strictly proper")
        if not is_lossless_pr(Z0):
            raise ValueError("impedance is not lossless positive-real")
    one = RationalFunction.constant(1.0)
    return (Z0 - one) / (Z0 + one)


def scattering_K_statespace(pair: CoupledModelPair,
                            load: LosslessRealization) -> RationalFunction:
    """Scattering function via the two closed-loop resolvents.

    The quotient of the forward and backward port transfers
    c0 (sI - Gamma)^{-1} b0 over c0 (sI - Gamma_bar)^{-1} b0 reduces to
    the reflection coefficient up to overall sign; the sign is fixed
    here to the outgoing-positive convention so the result coincides
    with scattering_K(Z0).
    """
    b0, c0 = load.ss.b, load.ss.c
    fwd = transfer_function(StateSpace(pair.gamma, b0, c0))
    bwd = transfer_function(StateSpace(pair.gamma_bar, b0, c0))
    return -(fwd / bwd)


def observable_transfers(pair: CoupledModelPair, obs: Observable):
    """Forward and backward wave-to-output transfer functions.

    Forward: y responds to the incoming wave w through
    W(s) = 2 [h (sI - Gamma)^{-1} b0 + d]. Backward: y responds to the
    outgoing wave (outgoing-positive) through
    Wbar(s) = -2 [h_bar (sI - Gamma_bar)^{-1} b0 + d]. The quotient
    Wbar^{-1} W is the scattering function for every nontrivial
    observable — the reflection map does not depend on what you watch.
    """
    if np.all(obs.h == 0.0) and obs.d == 0.0:
        raise TrivialObservableError("transfer pair undefined for y = 0")
    b0 = pair.input_gain / 2.0
    W = transfer_function(StateSpace(pair.gamma, 2.0 * b0, obs.h, 2.0 * obs.d))
    Wb = transfer_function(
        StateSpace(pair.gamma_bar, 2.0 * b0, obs.h_bar, 2.0 * obs.d)
    )
    return W, -Wb


def invert_K_to_Z(K: RationalFunction) -> RationalFunction:
    """Solve K = (Z-1)/(Z+1) for the impedance Z = (1+K)/(1-K).

    Requires K inner with K(inf) = -1 (the no-feedthrough class); an
    inner K with K(inf) = +1 would need an impedance growing at
    infinity and is rejected. The constant K = -1 returns the
    degenerate short circuit Z = 0.
    """
    if not is_inner(K):
        raise ValueError("scattering function must be inner")
    kinf = K.at_infinity()
    if kinf is None or abs(kinf + 1.0) > 1e-8:
        raise ImproperImpedanceError(
            f"K(infinity) = {kinf!r}, need -1; impedance would be improper"
        )
    one = RationalFunction.constant(1.0)
    numr = one + K
    if numr.is_zero:
        return RationalFunction.constant(0.0)  # short circuit
    Z = numr / (one - K)
    if not is_lossless_pr(Z):
        raise ValueError("inverted impedance failed the lossless test")
    return Z


def spectrum_to_bath(Phi: RationalFunction):
    """Synthesize a bath-coupled load whose output spectrum is Phi.

    Chain: spectral factorization, scattering quotient of the factor
    pair, impedance inversion, partial-fraction extraction,
    realization, loop closure. Each stage failure is re-raised as a
    SynthesisStageError naming the stage.

    Returns (load, pair).
    """
    chain = run_synthesis(Phi)
    return chain.load, chain.pair


@dataclass(frozen=True, eq=False)
class SynthesisChain:
    """Intermediate products of spectrum_to_bath, for reporting."""

    spectrum: RationalFunction
    W: RationalFunction
    Wbar: RationalFunction
    K: RationalFunction
    impedance: RationalFunction
    foster: object
    load: LosslessRealization
    pair: CoupledModelPair


def run_synthesis(Phi: RationalFunction) -> SynthesisChain:
    def stage(name, fn, *args):
        try:
            return fn(*args)
        except (ValueError, ZeroDivisionError) as exc:
            raise SynthesisStageError(name, exc) from exc

    W, Wbar = stage("factor", spectral_factor, Phi)
    K = stage("scatter", lambda: W / Wbar)
    Z = stage("invert", invert_K_to_Z, K)
    if Z.is_zero:
        raise SynthesisStageError("invert", "spectrum inverts to a short circuit")
    spec = stage("foster", foster_from_rational, Z)
    load = stage("realize", foster_realize, spec)
    pair = stage("couple", close_loops, load)
    return SynthesisChain(Phi, W, Wbar, K, Z, spec, load, pair)


def match_observable_to_factor(load: LosslessRealization,
                               pair: CoupledModelPair,
                               W_target: RationalFunction) -> Observable:
    """Observable whose forward wave transfer equals a given stable factor.

    The map from the output row c to the numerator of
    2 c (sI - Gamma)^{-1} b0 is linear and, for a minimal load,
    invertible onto polynomials of degree < n; solving it recovers the
    unique state observable (d = 0) whose driven output has spectrum
    W_target(s) W_target(-s). W_target must be strictly proper with
    the forward characteristic polynomial as denominator.
    """
    n = load.dim
    b0 = load.ss.b
    dn = W_target.num.degree
    dd = W_target.den.degree
    if dn is None or dd is None or dn >= dd or dd != n:
        raise ValueError(
            "target factor must be strictly proper with denominator "
            "degree equal to the load dimension"
        )
    char = transfer_function(
        StateSpace(pair.gamma, b0, np.zeros(n), 1.0), reduce=False
    ).den
    if not _dens_match(char, W_target.den):
        raise ValueError(
            "target denominator is not the forward characteristic polynomial"
        )
    cols = np.zeros((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        tf = transfer_function(StateSpace(pair.gamma, 2.0 * b0, e, 0.0),
                               reduce=False)
        cols[: tf.num.coeffs.size, i] = tf.num.coeffs
    target = np.zeros(n)
    target[: W_target.num.coeffs.size] = W_target.num.coeffs
    c, res, rank, _ = np.linalg.lstsq(cols, target, rcond=None)
    if rank < n:
        raise ValueError("load is not minimal; factor matching is singular")
    obs = Observable.build(load, c, 0.0)
    got, _ = observable_transfers(pair, obs)
    if not got.close_to(W_target, tol=1e-7):
        raise ValueError("factor matching failed to reproduce the target")
    return obs


def _dens_match(p, q, tol=1e-9):
    a, b = p.coeffs, q.coeffs
    if a.size != b.size:
        return False
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)))
    return bool(np.max(np.abs(a - b)) <= tol * scale)


# ---------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------


def mirror_residual(pair: CoupledModelPair) -> float:
    """Greedy multiset match of eig(gamma_bar) against -eig(gamma)."""
    ef = np.linalg.eigvals(pair.gamma)
    eb = list(np.linalg.eigvals(pair.gamma_bar))
    worst = 0.0
    for lam in ef:
        dists = [abs(mu + lam) for mu in eb]
        j = int(np.argmin(dists))
        worst = max(worst, dists[j])
        eb.pop(j)
    return float(worst)


def allpass_residual(K: RationalFunction, n_points=200) -> float:
    """Max deviation of |K(jw)| from 1 on a log grid w in [1e-3, 1e3]."""
    ws = np.logspace(-3.0, 3.0, n_points)
    vals = np.abs(K.evaluate(1j * ws))
    return float(np.max(np.abs(vals - 1.0)))


def coupling_report(pair: CoupledModelPair) -> dict:
    """JSON-ready summary: spectra, K coefficients, residuals."""
    ef = np.sort_complex(np.linalg.eigvals(pair.gamma))
    eb = np.sort_complex(np.linalg.eigvals(pair.gamma_bar))
    return {
        "gamma_eigs": [[z.real, z.imag] for z in ef],
        "gamma_bar_eigs": [[z.real, z.imag] for z in eb],
        "K_num": pair.K.num.coeffs.tolist(),
        "K_den": pair.K.den.coeffs.tolist(),
        "allpass_residual": allpass_residual(pair.K),
        "mirror_residual": mirror_residual(pair),
    }
