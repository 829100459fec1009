"""Region enumeration: exactness, pruning soundness, and serialization."""

import json

import numpy as np
import pytest

from relu_unwrap import (
    ActivationPattern,
    BudgetExceededError,
    Decomposition,
    ModelFormatError,
    OrientedHalfspace,
    Region,
    TOL_SLACK,
    activation_pattern,
    decompose,
    dumps_decomposition,
    enumerate_feasible,
    forward,
    forward_many,
    global_lp,
    global_prefix,
    loads_decomposition,
    local_lp,
    pattern_matrix,
    random_init,
)
from relu_unwrap.explain import locate_region, region_contains

from conftest import interior_samples


def region_by_pattern(d, bits):
    for i, reg in enumerate(d.regions):
        if reg.pattern.layers == (tuple(bits),):
            return i
    raise AssertionError(f"pattern {bits} missing")


class TestDemoNetGroundTruth:
    """The two-neuron example has a fully hand-checkable partition."""

    def test_four_regions_and_four_halfspaces(self, demo_net_m2):
        d = decompose(demo_net_m2)
        assert d.num_regions == 4
        assert d.num_halfspaces == 4

    def test_boundary_normals(self, demo_net_m2):
        d = decompose(demo_net_m2)
        diag = np.array([1.0, 1.0]) / np.sqrt(2.0)
        vert = np.array([0.0, 1.0])
        for hs in d.halfspaces:
            n = hs.normal
            ok = any(
                np.abs(n - s * ref).max() < 1e-12
                for ref in (diag, vert)
                for s in (+1.0, -1.0)
            )
            assert ok, f"unexpected normal {n}"
            assert abs(hs.offset) < 1e-12

    def test_region_models(self, demo_net_m2):
        d = decompose(demo_net_m2)
        expect = {
            (0, 0): np.zeros((2, 2)),
            (0, 1): np.array([[0.0, 0.0], [0.0, 1.0]]),
            (1, 0): np.array([[1.0, 1.0], [0.0, 0.0]]),
            (1, 1): np.array([[1.0, 1.0], [0.0, 1.0]]),
        }
        for bits, alpha in expect.items():
            reg = d.regions[region_by_pattern(d, bits)]
            np.testing.assert_allclose(reg.alpha, alpha, atol=1e-12)
            np.testing.assert_allclose(reg.beta, 0.0, atol=1e-12)

    def test_face_ownership_follows_inactive_side(self, demo_net_m2):
        """A region owns exactly the faces of its bit-0 conditions."""
        d = decompose(demo_net_m2)
        owned = {
            (0, 0): 2,
            (0, 1): 1,
            (1, 0): 1,
            (1, 1): 0,
        }
        for bits, count in owned.items():
            reg = d.regions[region_by_pattern(d, bits)]
            assert len(reg.nonstrict_ids) == count
            assert set(reg.nonstrict_ids) <= set(reg.halfspace_ids)

    def test_two_conditions_per_region(self, demo_net_m2):
        d = decompose(demo_net_m2)
        for reg in d.regions:
            assert len(reg.halfspace_ids) == 2


class TestGlobalAffine:
    def test_prefix_reproduces_preactivations(self):
        """The input-space affine form equals the layer's pre-ReLU values."""
        rng = np.random.default_rng(11)
        net = random_init([2, 5, 7, 4], 3, seed=2)
        for _ in range(100):
            x = rng.uniform(-4, 4, size=2)
            pat = activation_pattern(net, x)
            a = x
            for layer_idx in range(len(net.hidden)):
                prefix = global_prefix(pat.layers[: layer_idx + 1], net)
                z = net.hidden[layer_idx].weights @ a + net.hidden[layer_idx].bias
                np.testing.assert_allclose(
                    prefix.matrix @ x + prefix.offset, z, atol=1e-9
                )
                a = np.maximum(z, 0.0)

    def test_sampled_points_satisfy_their_lps(self):
        """Each point's pattern passes its local and global systems."""
        rng = np.random.default_rng(13)
        net = random_init([3, 4, 3], 2, seed=1)
        for _ in range(200):
            x = rng.uniform(-6, 6, size=3)
            pat = activation_pattern(net, x)
            lp = global_lp(pat.layers, net)
            vals = lp.A @ x - lp.b
            assert vals.max() <= TOL_SLACK
            a = x
            for layer_idx, layer in enumerate(net.hidden):
                loc = local_lp(
                    layer.weights,
                    layer.bias,
                    pat.layers[layer_idx],
                    nonneg_inputs=layer_idx > 0,
                )
                lv = loc.A @ a - loc.b
                assert lv.max() <= TOL_SLACK
                a = np.maximum(layer.weights @ a + layer.bias, 0.0)


class TestEnumeration:
    def test_sampled_patterns_are_enumerated(self):
        """No input ever exhibits a pattern missing from the search output."""
        for seed, dims, m in [(0, [2, 3, 3], 1), (1, [3, 4, 3], 2)]:
            net = random_init(dims, m, seed)
            res = enumerate_feasible(net)
            known = {rec.pattern.bits() for rec in res.records}
            rng = np.random.default_rng(seed + 77)
            pts = rng.uniform(-10, 10, size=(10_000, dims[0]))
            mat = pattern_matrix(net, pts)
            observed = {tuple(int(v) for v in row) for row in np.unique(mat, axis=0)}
            assert observed <= known

    def test_affine_net_single_empty_pattern(self, affine_net):
        res = enumerate_feasible(affine_net)
        assert len(res.records) == 1
        assert res.records[0].pattern.layers == ()

    def test_layer_feasible_counts_monotone_in_candidates(self):
        net = random_init([2, 3, 3], 1, seed=0)
        res = enumerate_feasible(net)
        assert len(res.layer_feasible) == 2
        assert all(v >= 1 for v in res.layer_feasible)
        assert res.candidates_checked >= sum(res.layer_feasible)

    def test_budget_exhaustion_carries_partial_result(self):
        net = random_init([2, 5, 7, 4], 3, seed=2)
        with pytest.raises(BudgetExceededError) as info:
            enumerate_feasible(net, budget=6)
        partial = info.value.partial
        assert partial.candidates_checked <= 6

    def test_budget_large_enough_never_raises(self):
        net = random_init([2, 3, 3], 1, seed=0)
        full = enumerate_feasible(net)
        again = enumerate_feasible(net, budget=full.candidates_checked)
        assert len(again.records) == len(full.records)


class TestDecomposition:
    def test_model_agreement_on_interior_samples(self):
        """alpha x + beta equals the network inside every region."""
        rng = np.random.default_rng(19)
        for seed, dims, m in [(0, [2, 3, 3], 1), (1, [3, 4, 3], 2)]:
            net = random_init(dims, m, seed)
            d = decompose(net)
            for r, reg in enumerate(d.regions):
                pts = interior_samples(d, r, rng, 100)
                for x in pts:
                    want = forward(net, x).output
                    got = reg.alpha @ x + reg.beta
                    err = np.abs(got - want).max()
                    assert err <= 1e-9 * (1.0 + np.abs(want).max())

    def test_partition_away_from_boundaries(self):
        """Points clear of every hyperplane sit strictly inside one region."""
        rng = np.random.default_rng(23)
        net = random_init([2, 3, 3], 1, seed=0)
        d = decompose(net)
        H = np.array([hs.normal for hs in d.halfspaces])
        c = np.array([hs.offset for hs in d.halfspaces])
        count = 0
        for _ in range(2000):
            x = rng.uniform(-8, 8, size=2)
            if np.abs(H @ x - c).min() <= 1e-6:
                continue
            count += 1
            strict_hosts = 0
            for reg in d.regions:
                ids = list(reg.halfspace_ids)
                if ids and (H[ids] @ x - c[ids]).min() > 0:
                    strict_hosts += 1
                elif not ids:
                    strict_hosts += 1
            assert strict_hosts == 1
        assert count > 1500

    def test_witness_locates_to_own_region(self):
        for seed, dims, m in [(0, [2, 3, 3], 1), (1, [3, 4, 3], 2), (2, [2, 5, 7, 4], 3)]:
            net = random_init(dims, m, seed)
            d = decompose(net)
            for r, reg in enumerate(d.regions):
                assert locate_region(d, reg.witness) == r
                assert region_contains(d, r, reg.witness)

    def test_determinism_and_thread_independence(self):
        net = random_init([3, 4, 3], 2, seed=1)
        a = decompose(net)
        b = decompose(net)
        c = decompose(net, threads=2)
        for other in (b, c):
            assert a.num_regions == other.num_regions
            assert a.num_halfspaces == other.num_halfspaces
            for ra, rb in zip(a.regions, other.regions):
                assert ra.pattern == rb.pattern
                assert ra.halfspace_ids == rb.halfspace_ids
                np.testing.assert_array_equal(ra.alpha, rb.alpha)
                np.testing.assert_array_equal(ra.witness, rb.witness)
            for ha, hb in zip(a.halfspaces, other.halfspaces):
                np.testing.assert_array_equal(ha.normal, hb.normal)
                assert ha.offset == hb.offset

    def test_affine_net_single_region(self, affine_net):
        d = decompose(affine_net)
        assert d.num_regions == 1
        assert d.num_halfspaces == 0
        reg = d.regions[0]
        np.testing.assert_allclose(reg.alpha, affine_net.output.weights)
        np.testing.assert_allclose(reg.beta, affine_net.output.bias)

    def test_halfspace_normals_are_unit(self):
        net = random_init([2, 5, 7, 4], 3, seed=2)
        d = decompose(net)
        for hs in d.halfspaces:
            assert abs(np.linalg.norm(hs.normal) - 1.0) < 1e-9

    def test_region_output_shapes(self):
        net = random_init([3, 4, 3], 2, seed=1)
        d = decompose(net)
        for reg in d.regions:
            assert reg.alpha.shape == (2, 3)
            assert reg.beta.shape == (2,)


class TestHalfspaceTable:
    def test_no_duplicate_entries(self):
        net = random_init([2, 5, 7, 4], 3, seed=2)
        d = decompose(net)
        keys = {
            (tuple(np.round(hs.normal, 9)), round(hs.offset, 9))
            for hs in d.halfspaces
        }
        assert len(keys) == d.num_halfspaces

    def test_every_halfspace_is_referenced(self):
        net = random_init([3, 4, 3], 2, seed=1)
        d = decompose(net)
        used = set()
        for reg in d.regions:
            used |= set(reg.halfspace_ids)
        assert used == set(range(d.num_halfspaces))

    def test_table_is_sorted(self):
        net = random_init([2, 3, 3], 1, seed=0)
        d = decompose(net)
        keys = [
            (tuple(np.round(hs.normal, 9)), round(hs.offset, 9))
            for hs in d.halfspaces
        ]
        assert keys == sorted(keys)


class TestSerialization:
    def test_round_trip_exact(self):
        net = random_init([3, 4, 3], 2, seed=1)
        d = decompose(net)
        back = loads_decomposition(dumps_decomposition(d))
        assert back.num_regions == d.num_regions
        assert back.num_halfspaces == d.num_halfspaces
        for ra, rb in zip(d.regions, back.regions):
            assert ra.pattern == rb.pattern
            assert ra.halfspace_ids == rb.halfspace_ids
            assert ra.nonstrict_ids == rb.nonstrict_ids
            np.testing.assert_array_equal(ra.alpha, rb.alpha)
            np.testing.assert_array_equal(ra.beta, rb.beta)
            np.testing.assert_array_equal(ra.witness, rb.witness)

    def test_partial_flag_round_trips(self, demo_net_m1):
        d = decompose(demo_net_m1)
        flagged = Decomposition(
            d.input_dim, d.output_dim, d.halfspaces, d.regions, partial=True
        )
        back = loads_decomposition(dumps_decomposition(flagged))
        assert back.partial is True

    def test_bad_format_tag_rejected(self, demo_net_m1):
        doc = json.loads(dumps_decomposition(decompose(demo_net_m1)))
        doc["format"] = "nope"
        with pytest.raises(ModelFormatError):
            loads_decomposition(json.dumps(doc))

    def test_out_of_range_id_rejected(self, demo_net_m1):
        doc = json.loads(dumps_decomposition(decompose(demo_net_m1)))
        doc["regions"][0]["halfspace_ids"] = [999]
        with pytest.raises(ModelFormatError):
            loads_decomposition(json.dumps(doc))


class TestRegionValidation:
    def test_nonstrict_must_be_subset(self):
        hs = OrientedHalfspace(np.array([1.0, 0.0]), 0.0)
        with pytest.raises(ValueError):
            Region(
                ActivationPattern(((1,),)),
                np.zeros((1, 2)),
                np.zeros(1),
                (0,),
                np.zeros(2),
                nonstrict_ids=(1,),
            )

    def test_duplicate_patterns_rejected(self):
        hs = OrientedHalfspace(np.array([1.0, 0.0]), 0.0)
        reg = Region(
            ActivationPattern(((1,),)),
            np.zeros((1, 2)),
            np.zeros(1),
            (0,),
            np.array([1.0, 0.0]),
        )
        with pytest.raises(ValueError):
            Decomposition(2, 1, (hs,), (reg, reg))
