"""Feedback pair, scattering routes, observable invariance, synthesis.

Hand oracles: for the capacitor load (A=0, b=c=1) the loops close to
Gamma = [-1], Gamma_bar = [+1] and K = (1-s)/(1+s); for the unit tank
the closed-loop characteristic polynomials are s^2+s+1 and s^2-s+1 and
K = -(s^2-s+1)/(s^2+s+1). All were derived by scalar algebra before
the implementation.
"""

import numpy as np
import pytest

from wavebath.coupling import (
    CoupledModelPair,
    InvalidLoadError,
    Observable,
    SynthesisStageError,
    TrivialObservableError,
    allpass_residual,
    close_loops,
    coupling_report,
    invert_K_to_Z,
    match_observable_to_factor,
    mirror_residual,
    observable_transfers,
    run_synthesis,
    scattering_K,
    scattering_K_statespace,
    spectrum_to_bath,
)
from wavebath.ratfun import (
    Polynomial,
    RationalFunction,
    is_inner,
    is_lossless_pr,
)
from wavebath.realization import (
    FosterSpec,
    ImproperImpedanceError,
    LosslessRealization,
    StateSpace,
    foster_realize,
    foster_to_rational,
    random_foster,
    transfer_function,
)

CAP = foster_realize(FosterSpec(k0=1.0))
TANK = foster_realize(FosterSpec(tanks=((0.5, 1.0),)))
CAP_TANK = foster_realize(FosterSpec(k0=1.0, tanks=((0.5, 1.0),)))

K_CAP = RationalFunction([1.0, -1.0], [1.0, 1.0])
K_TANK = RationalFunction([-1.0, 1.0, -1.0], [1.0, 1.0, 1.0])


class TestCloseLoops:
    def test_capacitor_matrices(self):
        pair = close_loops(CAP)
        assert pair.gamma.tolist() == [[-1.0]]
        assert pair.gamma_bar.tolist() == [[1.0]]
        assert pair.input_gain.tolist() == [2.0]
        assert pair.K.close_to(K_CAP, tol=1e-12)

    def test_tank_spectra(self):
        pair = close_loops(TANK)
        got_f = sorted(np.linalg.eigvals(pair.gamma), key=lambda z: z.imag)
        want_f = [complex(-0.5, -np.sqrt(3) / 2), complex(-0.5, np.sqrt(3) / 2)]
        np.testing.assert_allclose(got_f, want_f, atol=1e-12)
        got_b = sorted(np.linalg.eigvals(pair.gamma_bar), key=lambda z: z.imag)
        want_b = [complex(0.5, -np.sqrt(3) / 2), complex(0.5, np.sqrt(3) / 2)]
        np.testing.assert_allclose(got_b, want_b, atol=1e-12)

    def test_sum_recovers_twice_a(self):
        for load in (CAP, TANK, CAP_TANK):
            pair = close_loops(load)
            np.testing.assert_allclose(
                pair.gamma + pair.gamma_bar, 2.0 * load.ss.A, atol=1e-12
            )

    def test_mirror_property_random_loads(self):
        rng = np.random.default_rng(31)
        for _ in range(100):
            load = foster_realize(random_foster(rng, max_tanks=3))
            pair = close_loops(load)
            eigs = np.linalg.eigvals(pair.gamma)
            assert np.all(eigs.real < 0)
            assert mirror_residual(pair) < 1e-8 * max(
                1.0, np.max(np.abs(eigs))
            )

    def test_invalid_load_rejected(self):
        bad = LosslessRealization(
            StateSpace([[0.05]], [1.0], [1.0]), np.eye(1), validate=False
        )
        with pytest.raises(InvalidLoadError):
            close_loops(bad)

    def test_pair_invariants_enforced(self):
        with pytest.raises(ValueError):
            CoupledModelPair(
                np.array([[1.0]]), np.array([[-1.0]]), np.array([2.0]), K_CAP
            )
        with pytest.raises(ValueError):
            CoupledModelPair(
                np.array([[-1.0]]), np.array([[2.0]]), np.array([2.0]), K_CAP
            )


class TestScatteringK:
    def test_capacitor(self):
        Z = RationalFunction([1.0], [0.0, 1.0])
        assert scattering_K(Z).close_to(K_CAP, tol=1e-12)

    def test_tank(self):
        Z = RationalFunction([0.0, 1.0], [1.0, 0.0, 1.0])
        assert scattering_K(Z).close_to(K_TANK, tol=1e-12)

    def test_limit_at_infinity(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            Z = foster_to_rational(random_foster(rng))
            K = scattering_K(Z)
            assert K.at_infinity() == pytest.approx(-1.0, abs=1e-9)
            assert is_inner(K)

    def test_formula_only_at_unit_impedance(self):
        K = scattering_K(RationalFunction.constant(1.0), validate=False)
        assert K.is_zero

    def test_non_lossless_rejected(self):
        with pytest.raises(ValueError):
            scattering_K(RationalFunction.constant(1.0))
        with pytest.raises(ValueError):
            scattering_K(RationalFunction([1.0], [1.0, 1.0]))

    def test_all_pass_on_log_grid(self):
        rng = np.random.default_rng(12)
        for _ in range(10):
            Z = foster_to_rational(random_foster(rng))
            assert allpass_residual(scattering_K(Z)) < 1e-8


class TestScatteringStateSpace:
    def test_capacitor_pole_zero_placement(self):
        pair = close_loops(CAP)
        K = scattering_K_statespace(pair, CAP)
        assert K.close_to(K_CAP, tol=1e-10)
        np.testing.assert_allclose(K.poles(), [-1.0], atol=1e-12)
        np.testing.assert_allclose(K.zeros(), [1.0], atol=1e-12)

    def test_tank(self):
        pair = close_loops(TANK)
        assert scattering_K_statespace(pair, TANK).close_to(K_TANK, tol=1e-10)

    def test_routes_agree_random_loads(self):
        rng = np.random.default_rng(99)
        for _ in range(60):
            load = foster_realize(random_foster(rng, max_tanks=3))
            pair = close_loops(load)
            K1 = pair.K
            K2 = scattering_K_statespace(pair, load)
            assert K2.close_to(K1, tol=1e-8)

    def test_feedback_does_not_move_zeros(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            load = foster_realize(random_foster(rng, max_tanks=2))
            pair = close_loops(load)
            fwd = transfer_function(
                StateSpace(pair.gamma, load.ss.b, load.ss.c)
            )
            bwd = transfer_function(
                StateSpace(pair.gamma_bar, load.ss.b, load.ss.c)
            )
            # zeros sit on the axis; order by frequency so 1e-14 real
            # noise cannot scramble the pairing
            zf = sorted(fwd.zeros(), key=lambda z: (z.imag, z.real))
            zb = sorted(bwd.zeros(), key=lambda z: (z.imag, z.real))
            np.testing.assert_allclose(zf, zb, atol=1e-7)


class TestObservableTransfers:
    def test_port_voltage_capacitor(self):
        pair = close_loops(CAP)
        obs = Observable.build(CAP, CAP.ss.c, 0.0)
        W, Wbar = observable_transfers(pair, obs)
        assert W.close_to(RationalFunction([2.0], [1.0, 1.0]), tol=1e-12)
        assert Wbar.close_to(RationalFunction([2.0], [1.0, -1.0]), tol=1e-12)
        assert (W / Wbar).close_to(K_CAP, tol=1e-10)

    def test_wave_passthrough_observable(self):
        # y = v0 + i0 equals twice the incoming wave: flat forward gain
        for load in (CAP, TANK, CAP_TANK):
            pair = close_loops(load)
            obs = Observable.build(load, load.ss.c, 1.0)
            W, Wbar = observable_transfers(pair, obs)
            assert W.close_to(RationalFunction.constant(2.0), tol=1e-9)
            assert (W / Wbar).close_to(pair.K, tol=1e-8)

    def test_invariance_over_random_observables(self):
        rng = np.random.default_rng(2024)
        for load in (CAP, TANK, CAP_TANK):
            pair = close_loops(load)
            for _ in range(20):
                c = rng.normal(size=load.dim)
                d = float(rng.normal())
                obs = Observable.build(load, c, d)
                W, Wbar = observable_transfers(pair, obs)
                assert (W / Wbar).close_to(pair.K, tol=1e-8)

    def test_rows_satisfy_sum_rule(self):
        obs = Observable.build(TANK, [0.3, -1.2], 0.7)
        np.testing.assert_allclose(obs.h + obs.h_bar, 2 * obs.c, atol=1e-14)

    def test_trivial_observable_rejected(self):
        with pytest.raises(TrivialObservableError):
            Observable.build(TANK, [0.0, 0.0], 0.0)


class TestInvertK:
    def test_capacitor_round(self):
        Z = invert_K_to_Z(K_CAP)
        assert Z.close_to(RationalFunction([1.0], [0.0, 1.0]), tol=1e-12)

    def test_tank_round(self):
        Z = invert_K_to_Z(K_TANK)
        assert Z.close_to(RationalFunction([0.0, 1.0], [1.0, 0.0, 1.0]),
                          tol=1e-12)

    def test_short_circuit_flagged(self):
        Z = invert_K_to_Z(RationalFunction.constant(-1.0))
        assert Z.is_zero

    def test_wrong_sign_at_infinity_rejected(self):
        with pytest.raises(ImproperImpedanceError):
            invert_K_to_Z(RationalFunction([-1.0, 1.0], [1.0, 1.0]))
        with pytest.raises(ImproperImpedanceError):
            invert_K_to_Z(RationalFunction.constant(1.0))

    def test_non_inner_rejected(self):
        with pytest.raises(ValueError):
            invert_K_to_Z(RationalFunction([1.0], [1.0, 1.0]))

    def test_round_trip_property(self):
        rng = np.random.default_rng(55)
        for _ in range(50):
            Z = foster_to_rational(random_foster(rng, max_tanks=3))
            back = invert_K_to_Z(scattering_K(Z))
            assert back.close_to(Z, tol=1e-8)
            assert is_lossless_pr(back)


def constant_numerator_spectrum(spec, gain=2.0):
    """Spectrum g^2 / ((D+N)(s) (D+N)(-s)) of a load given as FosterSpec."""
    Z = foster_to_rational(spec)
    DN = Z.den + Z.num
    den = DN * DN.reflected()
    sign = den.coeffs[0]
    # normalize to keep the zero-frequency value positive
    return RationalFunction(
        Polynomial([gain * gain * np.sign(sign)]), den, reduce=False
    )


class TestSynthesis:
    def test_capacitor_chain_by_hand(self):
        Phi = RationalFunction([1.0], [1.0, 0.0, -1.0])
        load, pair = spectrum_to_bath(Phi)
        assert load.dim == 1
        assert transfer_function(load.ss).close_to(
            RationalFunction([1.0], [0.0, 1.0]), tol=1e-9
        )
        assert pair.K.close_to(K_CAP, tol=1e-9)

    def test_flat_spectrum_fails_at_inversion(self):
        with pytest.raises(SynthesisStageError) as err:
            spectrum_to_bath(RationalFunction.constant(1.0))
        assert err.value.stage == "invert"

    def test_odd_spectrum_fails_at_factor(self):
        with pytest.raises(SynthesisStageError) as err:
            spectrum_to_bath(RationalFunction([0.0, 1.0], [1.0, 0.0, -1.0]))
        assert err.value.stage == "factor"

    def test_cap_tank_spectrum_recovers_load(self):
        spec = FosterSpec(k0=1.0, tanks=((0.5, 1.0),))
        Phi = constant_numerator_spectrum(spec)
        chain = run_synthesis(Phi)
        want = foster_to_rational(spec)
        assert chain.impedance.close_to(want, tol=1e-7)
        assert chain.foster.k0 == pytest.approx(1.0, abs=1e-7)
        assert chain.foster.tanks[0][1] == pytest.approx(1.0, abs=1e-7)

    def test_random_family_round_trip(self):
        rng = np.random.default_rng(404)
        for _ in range(20):
            spec = random_foster(rng, max_tanks=3, require_k0=True)
            Phi = constant_numerator_spectrum(spec, gain=rng.uniform(0.5, 3.0))
            chain = run_synthesis(Phi)
            assert chain.impedance.close_to(foster_to_rational(spec), tol=1e-7)

    def test_even_degree_spectrum_not_recoverable(self):
        # pure tank loads close the loop with K(inf) = +1 after
        # factorization, which no proper load can produce
        spec = FosterSpec(tanks=((0.5, 1.0),))
        Phi = constant_numerator_spectrum(spec)
        with pytest.raises(SynthesisStageError) as err:
            spectrum_to_bath(Phi)
        assert err.value.stage == "invert"

    def test_matched_observable_reproduces_spectrum(self):
        spec = FosterSpec(k0=1.0, tanks=((0.5, 1.0),))
        Phi = constant_numerator_spectrum(spec)
        chain = run_synthesis(Phi)
        obs = match_observable_to_factor(chain.load, chain.pair, chain.W)
        W, _ = observable_transfers(chain.pair, obs)
        for w in np.logspace(-2, 2, 50):
            got = abs(W.evaluate(1j * w)) ** 2
            want = Phi.evaluate(1j * w).real
            assert got == pytest.approx(want, rel=1e-6)


class TestReport:
    def test_fields_and_sanity(self):
        pair = close_loops(CAP_TANK)
        rep = coupling_report(pair)
        assert set(rep) == {
            "gamma_eigs", "gamma_bar_eigs", "K_num", "K_den",
            "allpass_residual", "mirror_residual",
        }
        assert rep["allpass_residual"] < 1e-8
        assert rep["mirror_residual"] < 1e-8
        assert len(rep["gamma_eigs"]) == 3
