import numpy as np
import pytest

from qlstab import states
from qlstab._linalg import random_density, trace_distance
from qlstab.channels import reset_channel, unitary_channel
from qlstab.hilbert import uniform_space
from qlstab.mixing import (
    CommutingResetFamily,
    amplitude_damping_liouvillian,
    contraction_eta,
    liouvillian_from_channel,
    liouvillian_gksl,
    no_go_probe,
    rapid_mixing_check,
    spectral_gap,
    stationary_state,
)


def family_for(n):
    inst = states.line_graph_state(n)
    return CommutingResetFamily(list(inst.witness_channels), inst.space, inst.psi)


class TestLiouvillian:
    def test_identity_channel_gives_zero(self):
        sp = uniform_space(1)
        l = liouvillian_from_channel(unitary_channel(np.eye(2), [0]), sp)
        assert np.max(np.abs(l.matrix)) < 1e-12

    def test_reset_channel_spectrum(self, rng):
        sp = uniform_space(1)
        psi = np.array([1.0, 0.0], dtype=complex)
        l = liouvillian_from_channel(reset_channel(psi, [0]), sp)
        rep = spectral_gap(l)
        assert abs(rep.gap - 1.0) < 1e-9
        ev = np.sort_complex(rep.eigenvalues)
        assert np.allclose(sorted(np.round(ev.real, 9)), [-1, -1, -1, 0])

    def test_idempotent_spectrum_in_zero_minus_one(self, rng):
        sp = uniform_space(1)
        l = liouvillian_from_channel(reset_channel(np.array([0.6, 0.8]), [0]), sp)
        ev = spectral_gap(l).eigenvalues
        for lam in ev:
            assert min(abs(lam), abs(lam + 1.0)) < 1e-9

    def test_trace_annihilation_and_cptp(self, rng):
        l = amplitude_damping_liouvillian(0.7)
        assert l.trace_annihilation_defect() < 1e-9
        assert l.choi_psd_defect() < 1e-9

    def test_gksl_stationary(self):
        l = amplitude_damping_liouvillian(1.0)
        rho = stationary_state(l)
        assert np.allclose(rho, np.diag([1.0, 0.0]))

    def test_scaling_property(self):
        l = amplitude_damping_liouvillian(1.0)
        from qlstab.mixing import Liouvillian

        l2 = Liouvillian(matrix=2.5 * l.matrix, dim=2)
        assert abs(spectral_gap(l2).gap - 2.5 * spectral_gap(l).gap) < 1e-9

    def test_semigroup_property(self):
        l = amplitude_damping_liouvillian(0.9)
        s1 = l.propagator(0.4)
        s2 = l.propagator(0.6)
        s12 = l.propagator(1.0)
        assert np.max(np.abs(s1 @ s2 - s12)) < 1e-8


class TestEta:
    def test_reset_channel_eta_zero_after_one_application(self):
        sp = uniform_space(1)
        psi = np.array([1.0, 0.0], dtype=complex)
        ch = reset_channel(psi, [0])
        fam = CommutingResetFamily([ch], sp, psi)
        # large t: propagator approaches the reset channel itself, eta -> 0
        es = fam.eta_sample(30.0)
        assert es.lower < 1e-9

    def test_eta_at_zero_is_large(self):
        sp = uniform_space(1)
        psi = np.array([1.0, 0.0], dtype=complex)
        fam = CommutingResetFamily([reset_channel(psi, [0])], sp, psi)
        es = fam.eta_sample(0.0)
        # an orthogonal pure input keeps distance ~1 from the fixed point
        assert es.lower > 0.9
        assert es.lower <= es.upper + 1e-9

    def test_exact_decay_rate_single_qubit(self):
        # for L = E - I with idempotent E: eta(e^{Lt}) = e^{-t} eta(Id - E)
        sp = uniform_space(1)
        psi = np.array([1.0, 0.0], dtype=complex)
        fam = CommutingResetFamily([reset_channel(psi, [0])], sp, psi)
        e0 = fam.eta_sample(0.0).lower
        e1 = fam.eta_sample(1.0).lower
        assert abs(e1 - e0 * np.exp(-1.0)) < 1e-6

    def test_contraction_eta_dense_route(self):
        l = amplitude_damping_liouvillian(1.0)
        es = contraction_eta(l, 1.0, n_samples=64)
        # start |1>: distance decays like e^{-t} up to coherence factors
        assert es.lower > 0.3
        assert es.lower <= es.upper + 1e-9

    def test_eta_bounds_sandwich_gap(self):
        # L exp(-gap t) <= eta(t) <= R exp(-nu t): fit constants empirically
        l = amplitude_damping_liouvillian(1.0)
        gap = spectral_gap(l).gap
        ts = [0.5, 1.0, 2.0, 3.0]
        vals = [contraction_eta(l, t, n_samples=32).lower for t in ts]
        rates = [-np.log(vals[i + 1] / vals[i]) / (ts[i + 1] - ts[i]) for i in range(3)]
        for r in rates:
            assert r > 0.4 * gap  # decaying at a rate comparable to the gap


class TestCommutingFamily:
    def test_structure_verified(self):
        fam = family_for(3)
        chk = fam.verify_structure()
        assert chk["commutation"] < 1e-9
        assert chk["idempotency"] < 1e-9

    def test_per_channel_gap_is_one(self):
        fam = family_for(3)
        assert abs(fam.per_channel_gap() - 1.0) < 1e-9

    def test_propagate_matches_dense_exponential(self, rng):
        fam = family_for(3)
        # dense composite superoperator route at D = 8
        from qlstab.channels import superoperator
        from scipy.linalg import expm

        s = sum(
            superoperator(c, fam.space) for c in fam.channels
        ) - len(fam.channels) * np.eye(64)
        rho = random_density(8, rng)
        t = 0.7
        lhs = (expm(t * s) @ rho.reshape(-1)).reshape(8, 8)
        rhs = fam.propagate(rho, t)
        assert trace_distance(lhs, rhs) < 1e-10

    def test_additivity_bound(self):
        # eta(e^{sum L_j t}) <= sum_j eta(e^{L_j t})
        fam = family_for(3)
        for t in (0.5, 1.5):
            whole = fam.eta_sample(t).lower
            parts = sum(fam.eta_single_channel(k, t) for k in range(len(fam.channels)))
            assert whole <= parts + 1e-6


@pytest.mark.slow
class TestRapidMixing:
    def test_graph_chain_family(self):
        fams = [family_for(n) for n in (3, 4, 5)]
        rep = rapid_mixing_check(fams, ts=[1.5, 2.5, 4.0, 6.0])
        assert rep.nu == pytest.approx(1.0, abs=1e-9)
        assert rep.gamma >= 0.95
        assert rep.delta <= 1.1
        assert rep.passed, (rep.gamma, rep.delta)


class TestNoGo:
    def test_amplitude_damping_positive_distance(self):
        l = amplitude_damping_liouvillian(1.0)
        psi0 = np.array([1.0, 0.0], dtype=complex)
        ts = np.linspace(0.0, 10.0, 21)
        rep = no_go_probe(l, psi0, ts)
        assert rep.min_distance > 1e-6
        assert rep.monotone
        # exact solution: distance e^{-t}
        for t, d in rep.distances[1:]:
            assert abs(d - np.exp(-t)) < 1e-8

    def test_target_start_stays_at_zero(self):
        l = amplitude_damping_liouvillian(1.0)
        psi0 = np.array([1.0, 0.0], dtype=complex)
        rep = no_go_probe(
            l, psi0, [0.0, 1.0, 2.0], start=np.outer(psi0, psi0.conj())
        )
        assert rep.min_distance < 1e-10

    def test_fixed_point_mismatch_rejected(self):
        l = amplitude_damping_liouvillian(1.0)
        psi1 = np.array([0.0, 1.0], dtype=complex)
        with pytest.raises(ValueError):
            no_go_probe(l, psi1, [1.0])
