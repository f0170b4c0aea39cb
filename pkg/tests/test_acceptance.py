"""Acceptance suite: every criterion runs at its stated tolerance and prints
one pass/fail line. Run with `pytest tests/test_acceptance.py -v -s`."""

import numpy as np
import pytest

from qlstab import channels as ch
from qlstab import fts as fts_mod
from qlstab import lie as lie_mod
from qlstab import mixing as mixing_mod
from qlstab import rfts as rfts_mod
from qlstab import scheduler as sched_mod
from qlstab import states
from qlstab import subspaces as sub_mod
from qlstab._linalg import random_density, random_pure, trace_distance
from qlstab.hilbert import NeighborhoodStructure, neighborhood_expansion, uniform_space


def _line(number, ok, detail=""):
    tag = "PASS" if ok else "FAIL"
    print(f"[{tag}] acceptance-{number:02d} {detail}")
    assert ok, f"acceptance criterion {number} failed: {detail}"


class TestAcceptance:
    def test_01_dicke_pipeline(self):
        inst = states.dicke(4, 2)
        rep = sub_mod.check_small_schmidt_span(inst.psi, inst.neighborhoods, inst.space)
        row = rep.per_neighborhood[0]
        ugen = lie_mod.check_unitary_generation(inst.psi, inst.neighborhoods, inst.space)
        plan = fts_mod.plan_fts(inst.psi, inst.neighborhoods, inst.space, force=True)
        circ, _ = fts_mod.synthesize_fts(inst.psi, inst.neighborhoods, inst.space, plan=plan)
        rho = np.eye(16, dtype=complex) / 16
        final, _ = ch.run(circ, rho, record=False)
        dist = trace_distance(final, inst.density())
        prop4 = sub_mod.check_commuting_projectors(inst.psi, inst.neighborhoods, inst.space)
        ok = (
            row["schmidt_dim"] == 2
            and row["neighborhood_dim"] == 8
            and ugen.ok
            and ugen.target_dim == 226
            and dist < 1e-10
            and prop4.max_norm > 1e-3
        )
        _line(1, ok, f"dicke: span 2/8, ugen {ugen.generated_dim}/{ugen.target_dim}, "
                     f"distance {dist:.2e}, prop4 commutator {prop4.max_norm:.2e}")

    @pytest.mark.slow
    def test_02_aklt_not_fts(self):
        inst = states.aklt32_cubic()
        dims = [
            sub_mod.schmidt_span(inst.psi, nk, inst.space).dim
            for nk in inst.neighborhoods
        ]
        qls = sub_mod.check_qls(inst.psi, inst.neighborhoods, inst.space)
        ok = qls.qls and all(d == 9 for d in dims) and all(2 * d > 16 for d in dims)
        _line(2, ok, f"aklt-3/2 cubic: qls {qls.qls}, span dims {sorted(set(dims))}, "
                     f"2*9 > 16 so not FTS")

    @pytest.mark.slow
    def test_03_vbs_n3_n4(self):
        results = {}
        for n in (3, 4):
            inst = states.vbs_1d(n)
            spans = [
                sub_mod.schmidt_span(inst.psi, nk, inst.space).dim
                for nk in inst.neighborhoods
            ]
            ugen = lie_mod.check_unitary_generation(
                inst.psi, inst.neighborhoods, inst.space
            )
            plan = fts_mod.plan_fts(inst.psi, inst.neighborhoods, inst.space, force=True)
            circ, _ = fts_mod.synthesize_fts(
                inst.psi, inst.neighborhoods, inst.space, plan=plan
            )
            d = inst.space.total_dim
            final, _ = ch.run(circ, np.eye(d, dtype=complex) / d, record=False)
            results[n] = {
                "spans": spans,
                "ugen": ugen.ok,
                "dist": trace_distance(final, inst.density()),
            }
        ok = (
            results[3]["spans"] == [2, 2]
            and results[4]["spans"] == [2, 4, 2]
            and results[3]["ugen"] and results[4]["ugen"]
            and results[3]["dist"] < 1e-10 and results[4]["dist"] < 1e-10
        )
        _line(3, ok, f"vbs: spans {results[3]['spans']}/{results[4]['spans']}, "
                     f"distances {results[3]['dist']:.1e}/{results[4]['dist']:.1e}")

    def test_04_graph_states(self):
        worst_comm = 0.0
        all_ok = True
        detail = []
        for inst in (
            states.line_graph_state(3),
            states.line_graph_state(4),
            states.grid_graph_state(2, 3),
        ):
            for c in inst.witness_channels:
                tight = set(ch.kraus_support(c, inst.space))
                all_ok &= any(tight <= set(nk) for nk in inst.neighborhoods)
            rep = rfts_mod.verify_robustness(
                list(inst.witness_channels), inst.psi, inst.space, tol=1e-9
            )
            all_ok &= rep.passed and rep.exhaustive
            pset = sub_mod.canonical_hamiltonian(inst.psi, inst.neighborhoods, inst.space)
            comm = float(np.max(sub_mod.pairwise_projector_commutators(pset)))
            worst_comm = max(worst_comm, comm)
            all_ok &= comm < 1e-9
            detail.append(f"{inst.name}: orders {rep.orders_run}, d {rep.max_final_distance:.1e}")
        _line(4, all_ok, "; ".join(detail) + f"; max commutator {worst_comm:.1e}")

    @pytest.mark.slow
    def test_05_ccz_triangle_and_kagome(self):
        tri = states.ccz_triangle()
        rep_tri = rfts_mod.verify_robustness(
            list(tri.witness_channels), tri.psi, tri.space
        )
        res_tri = rfts_mod.check_algebraic_rfts(tri.psi, tri.neighborhoods, tri.space)
        # the triangle coarse-grains to a single particle restricted to the
        # span of the target: one trivial factor
        tri_ok = (
            rep_tri.passed
            and res_tri.ok
            and int(np.prod(res_tri.factor_dims))
            == res_tri.factorization.support.h_tilde_dim
        )

        kag = states.ccz_kagome(2, 2)
        commute = rfts_mod.channels_commute_pairwise(
            list(kag.witness_channels), kag.space
        )
        rep_kag = rfts_mod.verify_robustness(
            list(kag.witness_channels), kag.psi, kag.space,
            trials=3, n_random_inputs=0, distance_exact_limit=256,
        )
        res_kag = rfts_mod.check_algebraic_rfts(kag.psi, kag.neighborhoods, kag.space)
        kag_ok = (
            commute < 1e-9
            and rep_kag.passed
            and res_kag.ok
            and res_kag.factor_dims == tuple(kag.space.dims)
        )
        _line(5, tri_ok and kag_ok,
              f"triangle factors {res_tri.factor_dims}; kagome factors "
              f"{sorted(set(res_kag.factor_dims))} x12, commute {commute:.1e}, "
              f"robust d {rep_kag.max_final_distance:.1e} over {rep_kag.orders_run} orders")

    @pytest.mark.slow
    def test_06_w_product(self):
        inst = states.w_product_9()
        pset = sub_mod.canonical_hamiltonian(inst.psi, inst.neighborhoods, inst.space)
        comm = float(np.max(sub_mod.pairwise_projector_commutators(pset)))
        # run the stated 200 random-order budget (not the exhaustive-6 shortcut)
        rep = rfts_mod.verify_robustness(
            list(inst.witness_channels), inst.psi, inst.space,
            trials=200, tol=1e-9, distance_exact_limit=256, exhaustive_limit=1,
        )
        h = states.w_product_commuting_hamiltonian(inst)
        ev, vec = np.linalg.eigh(h)
        kernel_ok = (
            ev[0] < 1e-10 and ev[1] > 0.5
            and abs(abs(vec[:, 0].conj() @ inst.psi) - 1.0) < 1e-9
        )
        ok = comm > 1e-3 and rep.passed and kernel_ok
        _line(6, ok, f"w-product: commutator {comm:.2e}, {rep.orders_run} orders "
                     f"d {rep.max_final_distance:.1e}, alt Hamiltonian kernel 1-dim")

    def test_07_nonfactorizable(self):
        inst = states.nonfactorizable_252()
        e1, e2 = inst.witness_channels
        s12 = ch.superoperator(ch.compose(e1, e2, inst.space), inst.space)
        s21 = ch.superoperator(ch.compose(e2, e1, inst.space), inst.space)
        reset = np.outer(
            np.outer(inst.psi, inst.psi.conj()).reshape(-1),
            np.eye(20).reshape(-1).conj(),
        )
        d12 = float(np.max(np.abs(s12 - reset)))
        d21 = float(np.max(np.abs(s21 - reset)))
        ok = d12 < 1e-9 and d21 < 1e-9
        _line(7, ok, f"2x5x2: superoperator defects {d12:.1e}, {d21:.1e}")

    def test_08_scheduler(self):
        chain, lay_chain = sched_mod.layer_generic(sched_mod.chain_next_nn(9))
        kag, lay_kag = sched_mod.layer_generic(sched_mod.kagome_lattice(2, 2))
        g2d, lay_g2d = sched_mod.layer_graph2d(sched_mod.square_cross(5))
        reps = [
            sched_mod.depth_report(chain, lay_chain),
            sched_mod.depth_report(kag, lay_kag),
            sched_mod.depth_report(g2d, lay_g2d),
        ]
        ok = (
            lay_chain.depth == 3 and lay_kag.depth == 12 and lay_g2d.depth == 5
            and all(r.disjoint_ok and r.coverage_ok for r in reps)
        )
        _line(8, ok, f"depths: chain {lay_chain.depth}, kagome {lay_kag.depth}, "
                     f"2D graph {lay_g2d.depth}; certificates exact")

    @pytest.mark.slow
    def test_09_rapid_mixing(self):
        fams = []
        for n in (3, 4, 5, 6):
            inst = states.line_graph_state(n)
            fams.append(
                mixing_mod.CommutingResetFamily(
                    list(inst.witness_channels), inst.space, inst.psi
                )
            )
        ts = [1.5, 2.5, 4.0, 6.0]
        rep = mixing_mod.rapid_mixing_check(fams, ts=ts)
        additivity_ok = True
        for fam in fams[:2]:
            for t in ts:
                whole = fam.eta_sample(t).lower
                parts = sum(
                    fam.eta_single_channel(k, t) for k in range(len(fam.channels))
                )
                additivity_ok &= whole <= parts + 1e-6
        ok = rep.gamma >= 0.95 and rep.delta <= 1.1 and additivity_ok
        _line(9, ok, f"rapid mixing: gamma {rep.gamma:.3f} >= 0.95, "
                     f"delta {rep.delta:.3f} <= 1.1, additivity holds")

    def test_10_no_go(self):
        l = mixing_mod.amplitude_damping_liouvillian(1.0)
        psi0 = np.array([1.0, 0.0], dtype=complex)
        rep = mixing_mod.no_go_probe(l, psi0, np.linspace(0.0, 10.0, 41))
        ok = rep.min_distance > 1e-6 and rep.monotone
        _line(10, ok, f"no-go: min distance {rep.min_distance:.2e} > 1e-6, monotone")

    @pytest.mark.slow
    def test_11_necessary_condition_probes(self):
        inst = states.line_graph_state(6)
        probe = rfts_mod.correlation_probe(
            inst.psi, [0], [5], inst.space, nstruct=inst.neighborhoods
        )
        exp_a = set(neighborhood_expansion(inst.neighborhoods, [0]))
        c_region = sorted(exp_a - {0})
        b_region = [i for i in range(6) if i not in exp_a][-2:]
        val = rfts_mod.cmi(inst.psi, [0], b_region, c_region, inst.space)
        dep = ch.make_channel(
            [np.eye(2, dtype=complex) / 2,
             np.array([[0, 1], [1, 0]]) / 2,
             np.array([[0, -1j], [1j, 0]]) / 2,
             np.diag([1.0, -1.0]) / 2],
            [0], label="depolarize",
        )
        rec = rfts_mod.recoverability_probe(
            list(inst.witness_channels), inst.psi, [0], dep, inst.space
        )
        ising = states.ising_gibbs(8, 1.0, 1.0)
        cov = states.ising_zz_covariance(ising, 0, 5)
        ok = (
            probe.expansions_disjoint
            and probe.max_abs_covariance < 1e-8
            and val < 1e-8
            and rec.recovered
            and abs(cov) > 1e-3
        )
        _line(11, ok, f"probes: cov {probe.max_abs_covariance:.1e}, cmi {val:.1e}, "
                      f"recovered {rec.recovered}, ising cov {abs(cov):.2e}")

    @pytest.mark.slow
    def test_12_property_suites(self):
        rng = np.random.default_rng(20260808)
        ok = True
        details = []

        # invariance output lemma on graph witnesses
        inst = states.line_graph_state(3)
        worst = 0.0
        for k, c in enumerate(inst.witness_channels):
            pk = sub_mod.extended_schmidt_span(
                inst.psi, inst.neighborhoods[k], inst.space
            ).projector()
            for _ in range(3):
                rho = random_density(8, rng)
                diff = pk @ ch.apply(c, rho, inst.space) @ pk - pk @ rho @ pk
                worst = min(float(np.min(np.linalg.eigvalsh(diff))), worst)
        ok &= worst > -1e-8
        details.append(f"invariance-output min eig {worst:.1e}")

        # projector trace inequality
        viol = 0.0
        for _ in range(25):
            d = 7
            r1, r2 = rng.integers(1, 6, size=2)
            from qlstab._linalg import orthonormal_columns

            p1b = orthonormal_columns(rng.normal(size=(d, r1)) + 1j * rng.normal(size=(d, r1)))
            p2b = orthonormal_columns(rng.normal(size=(d, r2)) + 1j * rng.normal(size=(d, r2)))
            p1, p2 = p1b @ p1b.conj().T, p2b @ p2b.conj().T
            inter = sub_mod.intersect(
                [sub_mod.Subspace(p1b), sub_mod.Subspace(p2b)]
            )
            c = p1 @ p2 - p2 @ p1
            lhs = float(np.trace(p1 @ p2).real)
            rhs = inter.dim + 0.5 * float(np.trace(c.conj().T @ c).real)
            viol = max(viol, rhs - lhs)
        ok &= viol < 1e-8
        details.append(f"trace-ineq viol {viol:.1e}")

        # subsystem kernel lemma on a random rank-deficient state
        from qlstab.hilbert import MultipartiteSpace, partial_trace

        sp = MultipartiteSpace([2, 3, 2])
        v = rng.normal(size=(2, 3, 2)) + 1j * rng.normal(size=(2, 3, 2))
        v[:, 2, :] = 0
        v = v.reshape(-1)
        v /= np.linalg.norm(v)
        pk = sub_mod.extended_schmidt_span(v, [0, 1], sp).projector()

        def kernel_projector(m):
            ev, vec = np.linalg.eigh(m)
            keep = ev < 1e-10 * max(1.0, ev.max())
            return vec[:, keep] @ vec[:, keep].conj().T

        k_state = kernel_projector(partial_trace(np.outer(v, v.conj()), [1], sp))
        k_proj = kernel_projector(partial_trace(pk, [1], sp))
        kernel_gap = float(np.max(np.abs(k_state - k_proj)))
        ok &= kernel_gap < 1e-8
        details.append(f"subsystem-kernel gap {kernel_gap:.1e}")

        # generation implies asymptotic stabilizability over the corpus
        corpus = [states.dicke(4, 2), states.vbs_1d(3), states.line_graph_state(3)]
        for item in corpus:
            ugen = lie_mod.check_unitary_generation(
                item.psi, item.neighborhoods, item.space
            )
            if ugen.ok:
                qv = sub_mod.check_qls(item.psi, item.neighborhoods, item.space)
                ok &= qv.qls
        details.append("ugen=>qls over corpus")

        # stabilizer algebra dimension
        for d in (3, 5, 8):
            psi = random_pure(d, rng)
            ok &= lie_mod.stabilizer_algebra(psi).dim == (d - 1) ** 2 + 1
        details.append("stabilizer dims (D-1)^2+1")

        _line(12, ok, "; ".join(details))
