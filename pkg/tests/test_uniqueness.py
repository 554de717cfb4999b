"""Degeneracy tests, contact links, offsets, certificates, witnesses."""

import numpy as np
import pytest

from otuniq.core import CostSpec, DiscreteMeasure, verify_duality
from otuniq.decompose import ComponentDecomposition, decompose_potential
from otuniq.errors import (
    NotSelfCoupled,
    NotSymmetric,
    TooManyComponents,
    WrongComponentCount,
)
from otuniq.solver import solve
from otuniq.uniqueness import (
    ComponentFlowGraph,
    ambiguity_witness,
    build_contact_links,
    certify,
    continuum_links,
    marginal_degeneracy_check,
    plan_degeneracy_check,
    propagate_offsets,
)

from helpers import direct_degeneracy, generic_instance, two_interval_instance


def _measure(coords, weights, labels=None):
    return DiscreteMeasure(np.asarray(coords, dtype=float)[:, None],
                           np.asarray(weights, dtype=float), labels)


def _semi_discrete(b: float):
    mu = _measure([0.0, 1.0, 2.0, 3.0], [0.25] * 4, labels=[0, 1, 2, 3])
    nu = _measure([-0.5, 3.5], [b, 1.0 - b], labels=[0, 1])
    dec = ComponentDecomposition.build(mu, nu, "explicit_labels")
    return mu, nu, dec


class TestMarginalDegeneracy:
    def test_half_half_collides(self):
        out = marginal_degeneracy_check([0.5, 0.5], [0.5, 0.5])
        assert out["status"] == "colliding"
        assert out["I"] == (0,) and out["J"] in ((0,), (1,))

    def test_point_four_point_six_nondegenerate(self):
        out = marginal_degeneracy_check([0.4, 0.6], [0.5, 0.5])
        assert out["status"] == "nondegenerate"
        assert out["min_gap"] == pytest.approx(0.1)

    def test_single_components_vacuous(self):
        out = marginal_degeneracy_check([1.0], [1.0])
        assert out["status"] == "nondegenerate"

    def test_component_cap(self):
        with pytest.raises(TooManyComponents):
            marginal_degeneracy_check([1 / 14] * 14, [1 / 13] * 13)


class TestPlanDegeneracy:
    def _graph(self, edges, ns, nt):
        sm = [0.0] * ns
        tm = [0.0] * nt
        for (i, j), v in edges.items():
            sm[i] += v
            tm[j] += v
        return ComponentFlowGraph(ns, nt,
                                  tuple((i, j, v)
                                        for (i, j), v in sorted(edges.items())),
                                  tuple(sm), tuple(tm))

    def test_isolated_cluster_pairs_degenerate(self):
        g = self._graph({(0, 0): 0.5, (1, 1): 0.5}, 2, 2)
        out = plan_degeneracy_check(g)
        assert out["status"] == "degenerate"
        assert out["I"] == (0,) and out["J"] == (0,)

    def test_chain_nondegenerate(self):
        g = self._graph({(0, 0): 0.3, (1, 0): 0.2, (1, 1): 0.5}, 2, 2)
        assert plan_degeneracy_check(g)["status"] == "nondegenerate"

    def test_single_source_component(self):
        g = self._graph({(0, 0): 0.4, (0, 1): 0.6}, 1, 2)
        assert plan_degeneracy_check(g)["status"] == "nondegenerate"

    @pytest.mark.parametrize("seed", range(40))
    def test_matches_direct_subset_enumeration(self, seed):
        # random sparse flow graphs with |I| + |J| <= 8
        rng = np.random.default_rng(400 + seed)
        ns = int(rng.integers(1, 5))
        nt = int(rng.integers(1, 9 - ns))
        edges = {}
        # random forest-ish graph, sometimes disconnected
        for i in range(ns):
            for j in range(nt):
                if rng.random() < 0.45:
                    edges[(i, j)] = float(rng.uniform(0.1, 1.0))
        if not edges:
            edges[(0, 0)] = 1.0
        # drop nodes with no incident edges from the comparison by
        # giving them a self-ish edge to keep masses positive
        for i in range(ns):
            if not any(ii == i for (ii, _) in edges):
                edges[(i, int(rng.integers(0, nt)))] = float(
                    rng.uniform(0.1, 1.0))
        for j in range(nt):
            if not any(jj == j for (_, jj) in edges):
                edges[(int(rng.integers(0, ns)), j)] = float(
                    rng.uniform(0.1, 1.0))
        total = sum(edges.values())
        edges = {k: v / total for k, v in edges.items()}
        g = self._graph(edges, ns, nt)
        graph_deg = plan_degeneracy_check(g)["status"] == "degenerate"
        direct_deg, _ = direct_degeneracy(edges, ns, nt)
        assert graph_deg == direct_deg


class TestContactLinks:
    def test_shared_target_recorded(self):
        mu = _measure([0.0, 1.0], [0.5, 0.5], labels=[0, 1])
        nu = _measure([0.5], [1.0], labels=[0])
        cost = CostSpec.sq_euclidean()
        res = solve(mu, nu, cost)
        dec = ComponentDecomposition.build(mu, nu, "explicit_labels")
        links = build_contact_links(res.plan, dec)
        assert len(links) == 1
        assert (links[0].i1, links[0].i2) == (0, 1)
        assert links[0].kind == "point"

    def test_matched_diagonal_no_cross_links(self):
        mu = _measure([0.0, 10.0], [0.5, 0.5], labels=[0, 1])
        nu = _measure([0.1, 10.1], [0.5, 0.5], labels=[0, 1])
        cost = CostSpec.sq_euclidean()
        res = solve(mu, nu, cost)
        dec = ComponentDecomposition.build(mu, nu, "explicit_labels")
        assert build_contact_links(res.plan, dec) == []

    def test_semi_discrete_links_iff_off_quarter(self):
        for b, expect_connected in ((0.3, True), (0.5, False)):
            mu, nu, dec = _semi_discrete(b)
            res = solve(mu, nu, CostSpec.sq_euclidean())
            links = build_contact_links(res.plan, dec)
            # union-find over 4 source components
            parent = list(range(4))

            def find(v):
                while parent[v] != v:
                    v = parent[v]
                return v

            for lk in links:
                parent[find(lk.i1)] = find(lk.i2)
            n_comp = len({find(v) for v in range(4)})
            assert (n_comp == 1) == expect_connected


class TestPropagateOffsets:
    def test_single_component_anchor_only(self):
        rng = np.random.default_rng(30)
        mu = _measure(rng.uniform(0, 1, 4), rng.dirichlet(np.ones(4)))
        nu = _measure(rng.uniform(0, 1, 4), rng.dirichlet(np.ones(4)))
        cost = CostSpec.sq_euclidean()
        res = solve(mu, nu, cost)
        dec = ComponentDecomposition.trivial(mu, nu)
        parts = decompose_potential(res.pair, dec, res.plan, cost)
        out = propagate_offsets([], parts, cost, res.plan)
        assert np.array_equal(out.offsets, [0.0])

    def test_two_components_zero_potentials_formula(self):
        mu = _measure([0.0, 1.0], [0.5, 0.5], labels=[0, 1])
        nu = _measure([0.4], [1.0], labels=[0])
        cost = CostSpec.sq_euclidean()
        res = solve(mu, nu, cost)
        dec = ComponentDecomposition.build(mu, nu, "explicit_labels")
        parts = decompose_potential(res.pair, dec, res.plan, cost)
        # replace per-component potentials by zeros: the delta must be
        # c(x, y) - c(x', y)
        zero_parts = [cp.__class__(cp.component, cp.indices,
                                   np.zeros(len(cp.indices)), cp.problem)
                      for cp in parts]
        links = build_contact_links(res.plan, dec)
        out = propagate_offsets(links, zero_parts, cost, res.plan)
        mat = cost.matrix(mu, nu)
        expected = float(mat[0, 0] - mat[1, 0])
        assert out.offsets is not None
        assert (out.offsets[0] - out.offsets[1]) == pytest.approx(expected)

    def test_glued_equals_solver_potential_up_to_constant(self):
        rng = np.random.default_rng(31)
        mu, nu, cost, eps, _, res = generic_instance(rng, "unique",
                                                     max_points=20)
        dec = ComponentDecomposition.build(mu, nu, "epsilon_graph", eps)
        parts = decompose_potential(res.pair, dec, res.plan, cost)
        links = build_contact_links(res.plan, dec) \
            + continuum_links(res.plan, dec)
        out = propagate_offsets(links, parts, cost, res.plan,
                                global_pair=res.pair,
                                target_components=dec.target_components)
        assert out.offsets is not None
        # potentials came from the global f, so all offsets agree
        assert np.max(np.abs(out.offsets - out.offsets[0])) <= 1e-7

    def test_disconnected_links_reported_free(self):
        mu = _measure([0.0, 10.0], [0.5, 0.5], labels=[0, 1])
        nu = _measure([0.1, 10.1], [0.5, 0.5], labels=[0, 1])
        cost = CostSpec.sq_euclidean()
        res = solve(mu, nu, cost)
        dec = ComponentDecomposition.build(mu, nu, "explicit_labels")
        parts = decompose_potential(res.pair, dec, res.plan, cost)
        out = propagate_offsets([], parts, cost, res.plan)
        assert out.offsets is None
        assert out.free_blocks == ((0,), (1,))


class TestCertify:
    def test_two_interval_symmetric_non_unique(self):
        mu = two_interval_instance(20)
        nu = two_interval_instance(20)
        dec = ComponentDecomposition.build(mu, nu, "epsilon_graph", 0.2)
        cert = certify(mu, nu, CostSpec.sq_euclidean(), dec)
        assert cert.verdict == "non_unique"
        assert cert.freedom_dim == 1
        assert cert.witness is not None
        a, b = cert.witness
        mat = CostSpec.sq_euclidean().matrix(mu, nu)
        for pair in (a, b):
            rep = verify_duality(cert.solve_result.plan, pair, mat)
            assert rep.optimal
        diff = (a.f - b.f)
        assert np.max(diff) - np.min(diff) > 1e-6  # non-constant

    def test_two_interval_asymmetric_unique(self):
        mu = two_interval_instance(20, mass_left=0.4)
        nu = two_interval_instance(20, mass_left=0.5)
        dec = ComponentDecomposition.build(mu, nu, "epsilon_graph", 0.2)
        cert = certify(mu, nu, CostSpec.sq_euclidean(), dec)
        assert cert.verdict == "unique"
        assert cert.freedom_dim == 0

    @pytest.mark.parametrize("b,expect", [(0.5, "non_unique"),
                                          (0.3, "unique"),
                                          (0.25, "non_unique"),
                                          (0.7, "unique")])
    def test_semi_discrete_example(self, b, expect):
        mu, nu, dec = _semi_discrete(b)
        cert = certify(mu, nu, CostSpec.sq_euclidean(), dec)
        assert cert.verdict == expect

    def test_marginal_nondegeneracy_implies_plan_nondegenerate(self):
        for seed in range(8):
            rng = np.random.default_rng(500 + seed)
            mu, nu, cost, eps, _, _res = generic_instance(rng, "unique",
                                                          max_points=16)
            dec = ComponentDecomposition.build(mu, nu, "epsilon_graph", eps)
            cert = certify(mu, nu, cost, dec)
            if cert.marginal_degeneracy is not None and \
                    cert.marginal_degeneracy["status"] == "nondegenerate":
                assert cert.degeneracy["status"] == "nondegenerate"

    def test_shifted_pairs_agree_iff_constant_shift(self):
        # finite equivalence lemma: two optimal pairs agree on the
        # support projections iff they differ by the same constant on
        # all positive-mass points
        mu = two_interval_instance(6)
        nu = two_interval_instance(6)
        cost = CostSpec.sq_euclidean()
        res = solve(mu, nu, cost)
        mat = cost.matrix(mu, nu)
        shifted = res.pair.shifted(0.7)
        rep = verify_duality(res.plan, shifted, mat)
        assert rep.optimal
        assert np.allclose(shifted.f - res.pair.f, 0.7)

    def test_degeneracy_margin_warning(self):
        mu = _measure([0.0, 10.0], [0.5 + 5e-9, 0.5 - 5e-9],
                      labels=[0, 1])
        nu = _measure([0.2, 10.2], [0.5 + 2e-9, 0.5 - 2e-9],
                      labels=[0, 1])
        cost = CostSpec.sq_euclidean()
        dec = ComponentDecomposition.build(mu, nu, "explicit_labels")
        cert = certify(mu, nu, cost, dec)
        assert any("degeneracy-margin" in fl for fl in cert.flags)


class TestAmbiguityWitness:
    def _clusters(self):
        pts = np.concatenate([np.arange(5) * 1e-4,
                              1 + np.arange(5) * 1e-4])[:, None]
        return DiscreteMeasure(pts, np.full(10, 0.1))

    def test_family_verified_and_spread(self):
        mu = self._clusters()
        cost = CostSpec.sq_euclidean()
        dec = ComponentDecomposition.build(mu, mu, "epsilon_graph", 0.1)
        wit = ambiguity_witness(mu, cost, dec, n_samples=7)
        assert len(wit.pairs) == 7
        mat = cost.matrix(mu, mu)
        tau_face = 1e-6 * (1 + float(np.max(mat)))
        assert wit.oracle_spread == pytest.approx(2 * wit.delta,
                                                  abs=tau_face)
        # boundary samples sit at |a - b| = delta
        bs = [b for _, b in wit.samples]
        assert min(bs) == pytest.approx(-wit.delta)
        assert max(bs) == pytest.approx(wit.delta)

    def test_zero_sample_is_zero_potential(self):
        mu = self._clusters()
        cost = CostSpec.sq_euclidean()
        dec = ComponentDecomposition.build(mu, mu, "epsilon_graph", 0.1)
        wit = ambiguity_witness(mu, cost, dec, n_samples=7, run_oracle=False)
        mid = wit.pairs[3]
        assert np.allclose(mid.f, 0.0) and np.allclose(mid.g, 0.0)

    def test_asymmetric_cost_rejected(self):
        mu = _measure([0.0, 1.0], [0.5, 0.5], labels=[0, 1])
        cost = CostSpec.explicit([[0.0, 1.0], [2.0, 0.0]])
        dec = ComponentDecomposition.build(mu, mu, "explicit_labels")
        with pytest.raises(NotSymmetric):
            ambiguity_witness(mu, cost, dec)

    def test_nonzero_diagonal_rejected(self):
        mu = _measure([0.0, 1.0], [0.5, 0.5], labels=[0, 1])
        cost = CostSpec.explicit([[1.0, 2.0], [2.0, 1.0]])
        dec = ComponentDecomposition.build(mu, mu, "explicit_labels")
        with pytest.raises(NotSelfCoupled):
            ambiguity_witness(mu, cost, dec)

    def test_wrong_component_count(self):
        mu = _measure([0.0, 1.0, 2.0], [1 / 3] * 3, labels=[0, 1, 2])
        cost = CostSpec.sq_euclidean()
        dec = ComponentDecomposition.build(mu, mu, "explicit_labels")
        with pytest.raises(WrongComponentCount):
            ambiguity_witness(mu, cost, dec)
