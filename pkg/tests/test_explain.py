"""Feature attributions, region geometry summaries, and the 2-D plot."""

import xml.etree.ElementTree as ET

import numpy as np
import pytest

from relu_unwrap import (
    ActivationPattern,
    Decomposition,
    DimensionMismatchError,
    OrientedHalfspace,
    PointNotLocatedError,
    Region,
    brute_force_shap,
    decompose,
    exact_shap,
    forward,
    hypercube,
    locate_region,
    plot_regions_2d,
    random_init,
    region_contains,
)

from conftest import interior_samples

SQ2 = np.sqrt(2.0)


def single_region_decomposition(alpha, beta, halfspaces, ids, witness, owned=()):
    regs = (
        Region(
            ActivationPattern(((1,),)),
            np.asarray(alpha, dtype=np.float64),
            np.asarray(beta, dtype=np.float64),
            tuple(ids),
            np.asarray(witness, dtype=np.float64),
            nonstrict_ids=tuple(owned),
        ),
    )
    return Decomposition(len(witness), len(beta), tuple(halfspaces), regs)


@pytest.fixture
def triangle():
    """One linear model on the open triangle x > 0, y > 0, x + y < 2."""
    hs = (
        OrientedHalfspace(np.array([1.0, 0.0]), 0.0),
        OrientedHalfspace(np.array([0.0, 1.0]), 0.0),
        OrientedHalfspace(np.array([-1.0, -1.0]) / SQ2, -2.0 / SQ2),
    )
    return single_region_decomposition(
        [[1.0, 0.5]], [0.25], hs, (0, 1, 2), (0.5, 0.5)
    )


@pytest.fixture
def quadrant():
    hs = (
        OrientedHalfspace(np.array([1.0, 0.0]), 0.0),
        OrientedHalfspace(np.array([0.0, 1.0]), 0.0),
    )
    return single_region_decomposition([[1.0, 0.0]], [0.0], hs, (0, 1), (1.0, 1.0))


class TestLocateRegion:
    def test_interior_point(self, demo_net_m2):
        d = decompose(demo_net_m2)
        r = locate_region(d, [3.0, 2.0])
        assert d.regions[r].pattern.layers == ((1, 1),)

    def test_face_resolves_to_owner(self, demo_net_m2):
        """Points on shared faces go to the region owning the face."""
        d = decompose(demo_net_m2)
        r = locate_region(d, [-2.0, 0.0])
        assert d.regions[r].pattern.layers == ((0, 0),)
        r = locate_region(d, [0.0, 0.0])
        assert d.regions[r].pattern.layers == ((0, 0),)

    def test_every_sample_locates_to_its_pattern(self):
        rng = np.random.default_rng(5)
        net = random_init([2, 3, 3], 1, seed=0)
        d = decompose(net)
        from relu_unwrap import activation_pattern

        for _ in range(500):
            x = rng.uniform(-8, 8, size=2)
            r = locate_region(d, x)
            assert d.regions[r].pattern == activation_pattern(net, x)

    def test_missing_region_reports_nearest(self, demo_net_m2):
        d = decompose(demo_net_m2)
        keep = [
            r
            for r in range(d.num_regions)
            if d.regions[r].pattern.layers != ((0, 0),)
        ]
        partial = Decomposition(
            d.input_dim,
            d.output_dim,
            d.halfspaces,
            tuple(d.regions[r] for r in keep),
            partial=True,
        )
        with pytest.raises(PointNotLocatedError) as info:
            locate_region(partial, [-4.0, -4.0])
        assert info.value.nearest_region is not None

    def test_dimension_checked(self, demo_net_m2):
        d = decompose(demo_net_m2)
        with pytest.raises(DimensionMismatchError):
            locate_region(d, [1.0, 2.0, 3.0])


class TestRegionContains:
    def test_strict_interior_and_owned_face(self, demo_net_m2):
        d = decompose(demo_net_m2)
        r00 = next(
            r
            for r in range(d.num_regions)
            if d.regions[r].pattern.layers == ((0, 0),)
        )
        assert region_contains(d, r00, [-3.0, -1.0])
        assert region_contains(d, r00, [-2.0, 0.0])  # owned face
        assert not region_contains(d, r00, [1.0, 1.0])

    def test_unowned_face_excluded(self, demo_net_m2):
        d = decompose(demo_net_m2)
        r11 = next(
            r
            for r in range(d.num_regions)
            if d.regions[r].pattern.layers == ((1, 1),)
        )
        # the face x2 = 0 belongs to the inactive side, not to (1,1)
        assert not region_contains(d, r11, [2.0, 0.0])


class TestExactShap:
    def test_linear_model_formula(self, triangle):
        """phi[i, j] = alpha[j, i] * (x[i] - mu[i]) for a single region."""
        x = np.array([0.75, 0.25])
        bg = np.array([[0.5, 0.5], [0.25, 0.75]])
        res = exact_shap(triangle, x, bg)
        mu = bg.mean(axis=0)
        want = np.array(
            [
                [1.0 * (x[0] - mu[0])],
                [0.5 * (x[1] - mu[1])],
            ]
        )
        np.testing.assert_allclose(res.phi, want, atol=1e-12)
        assert not res.approximate
        assert res.region == 0

    def test_background_at_query_point_gives_zero(self, triangle):
        x = np.array([0.6, 0.9])
        res = exact_shap(triangle, x, [x])
        np.testing.assert_allclose(res.phi, 0.0, atol=1e-15)

    def test_efficiency(self):
        """Attributions sum to the output difference against the mean."""
        rng = np.random.default_rng(9)
        for seed, dims, m in [(0, [2, 3, 3], 1), (1, [3, 4, 3], 2)]:
            net = random_init(dims, m, seed)
            d = decompose(net)
            for r in range(d.num_regions):
                pts = interior_samples(d, r, rng, 6, spread=0.2)
                if len(pts) < 3:
                    continue
                x, bg = pts[0], pts[1:]
                res = exact_shap(d, x, bg)
                reg = d.regions[res.region]
                fx = reg.alpha @ x + reg.beta
                fmu = reg.alpha @ res.mu + reg.beta
                np.testing.assert_allclose(res.phi.sum(axis=0), fx - fmu, atol=1e-9)

    def test_out_of_region_background_flagged(self, demo_net_m2):
        d = decompose(demo_net_m2)
        x = np.array([2.0, 1.0])  # both neurons active
        bg = np.array([[-3.0, -2.0], [-1.0, -4.0]])  # both inactive
        res = exact_shap(d, x, bg)
        assert res.approximate
        np.testing.assert_allclose(res.mu, bg.mean(axis=0))

    def test_in_region_background_filtered(self, demo_net_m2):
        d = decompose(demo_net_m2)
        x = np.array([2.0, 1.0])
        inside = np.array([[3.0, 1.0], [1.0, 2.0]])
        outside = np.array([[-5.0, -5.0]])
        res = exact_shap(d, x, np.vstack([inside, outside]))
        assert not res.approximate
        np.testing.assert_allclose(res.mu, inside.mean(axis=0))

    def test_jsonable_payload(self, triangle):
        res = exact_shap(triangle, [0.5, 1.0], [[1.0, 0.5]])
        doc = res.to_jsonable()
        assert set(doc) == {"phi", "region", "mu", "approximate"}
        assert isinstance(doc["phi"], list)
        assert doc["region"] == 0
        assert doc["approximate"] is False


class TestBruteForceShap:
    def test_linear_function_closed_form(self):
        rng = np.random.default_rng(21)
        for _ in range(20):
            n, m = int(rng.integers(1, 5)), int(rng.integers(1, 3))
            W = rng.normal(size=(m, n))
            b = rng.normal(size=m)
            x = rng.normal(size=n)
            base = rng.normal(size=n)
            phi = brute_force_shap(lambda z: W @ z + b, x, base)
            want = W.T * (x - base)[:, None]
            np.testing.assert_allclose(phi, want, atol=1e-9)

    def test_additive_in_the_function(self):
        rng = np.random.default_rng(23)
        f = random_init([3, 4, 3], 2, seed=6)
        g = random_init([3, 3], 2, seed=7)
        x, base = rng.normal(size=3), rng.normal(size=3)
        fg = lambda z: forward(f, z).output + forward(g, z).output
        phi = brute_force_shap(fg, x, base)
        want = brute_force_shap(lambda z: forward(f, z).output, x, base)
        want = want + brute_force_shap(lambda z: forward(g, z).output, x, base)
        np.testing.assert_allclose(phi, want, atol=1e-9)

    def test_coordinate_swap_symmetry(self):
        """Swapping two input coordinates swaps the attribution rows."""
        rng = np.random.default_rng(25)
        net = random_init([3, 4, 3], 2, seed=8)
        f = lambda z: forward(net, z).output
        swap = lambda z: np.array([z[1], z[0], z[2]])
        x, base = rng.normal(size=3), rng.normal(size=3)
        phi = brute_force_shap(f, x, base)
        phi_sw = brute_force_shap(lambda z: f(swap(z)), swap(x), swap(base))
        np.testing.assert_allclose(phi_sw[0], phi[1], atol=1e-9)
        np.testing.assert_allclose(phi_sw[1], phi[0], atol=1e-9)
        np.testing.assert_allclose(phi_sw[2], phi[2], atol=1e-9)

    def test_matches_exact_inside_one_region(self):
        """Exhaustive coalition sums agree with the closed form in-region."""
        rng = np.random.default_rng(27)
        checked = 0
        for seed, dims, m in [(0, [2, 3, 3], 1), (1, [3, 4, 3], 2)]:
            net = random_init(dims, m, seed)
            d = decompose(net)
            for r in range(d.num_regions):
                pts = interior_samples(d, r, rng, 2, spread=0.05)
                if len(pts) < 2:
                    continue
                x, mu = pts[0], pts[1]
                hybrids_ok = all(
                    region_contains(d, r, np.where(mask, x, mu))
                    for mask in _masks(d.input_dim)
                )
                if not hybrids_ok:
                    continue
                res = exact_shap(d, x, [mu])
                phi = brute_force_shap(lambda z: forward(net, z).output, x, mu)
                np.testing.assert_allclose(res.phi, phi, atol=1e-9)
                checked += 1
        assert checked >= 10

    def test_dimension_cap(self):
        with pytest.raises(ValueError):
            brute_force_shap(lambda z: z[:1], np.zeros(21), np.zeros(21))


def _masks(n):
    for bits in range(2**n):
        yield np.array([(bits >> i) & 1 == 1 for i in range(n)])


class TestHypercube:
    def test_triangle_bounding_box(self, triangle):
        """The triangle x, y > 0, x + y < 2 boxes to [0, 2] squared."""
        cube = hypercube(triangle, 0)
        np.testing.assert_allclose(cube.center, [1.0, 1.0], atol=1e-9)
        assert abs(cube.side - 2.0) < 1e-9
        assert cube.unbounded_dims == ()

    def test_quadrant_reports_unbounded(self, quadrant):
        cube = hypercube(quadrant, 0)
        assert set(cube.unbounded_dims) == {0, 1}
        assert not np.isfinite(cube.side)
        np.testing.assert_allclose(cube.center, [1.0, 1.0])  # witness fallback

    def test_slab_partially_unbounded(self):
        hs = (
            OrientedHalfspace(np.array([1.0, 0.0]), 0.0),
            OrientedHalfspace(np.array([-1.0, 0.0]), -1.0),
        )
        d = single_region_decomposition([[1.0, 0.0]], [0.0], hs, (0, 1), (0.5, 3.0))
        cube = hypercube(d, 0)
        assert cube.unbounded_dims == (1,)
        assert abs(cube.side - 1.0) < 1e-9
        assert abs(cube.center[0] - 0.5) < 1e-9
        assert cube.center[1] == 3.0

    def test_interior_samples_inside_cube(self):
        """Sampled region points always fall inside the reported cube."""
        rng = np.random.default_rng(31)
        net = random_init([2, 3, 3], 1, seed=0)
        d = decompose(net)
        for r in range(d.num_regions):
            cube = hypercube(d, r)
            if cube.unbounded_dims:
                continue
            pts = interior_samples(d, r, rng, 1000, spread=2.0)
            if not len(pts):
                continue
            half = cube.side / 2.0 + 1e-9
            gap = np.abs(pts - cube.center).max()
            assert gap <= half

    def test_bad_region_index(self, triangle):
        with pytest.raises(IndexError):
            hypercube(triangle, 5)


class TestPlot:
    def test_svg_structure(self, tmp_path, demo_net_m2):
        d = decompose(demo_net_m2)
        out = tmp_path / "plot.svg"
        pts = np.array([[1.0, 1.0], [-1.5, -1.0]])
        plot_regions_2d(d, pts, (-2.0, -2.0, 2.0, 2.0), out, labels=["a", "b"])
        tree = ET.parse(out)
        root = tree.getroot()
        assert root.tag.endswith("svg")
        lines = [el for el in root.iter() if el.tag.endswith("line")]
        greens = [el for el in lines if el.get("stroke") == "#2e8b57"]
        crosses = [el for el in lines if el.get("stroke") == "#222222"]
        # two distinct hyperplanes, two stroke segments per point marker
        assert len(greens) == 2
        assert len(crosses) == 4
        texts = [el for el in root.iter() if el.tag.endswith("text")]
        assert [t.text for t in texts] == ["a", "b"]

    def test_no_points_plot(self, tmp_path, demo_net_m2):
        d = decompose(demo_net_m2)
        out = tmp_path / "bare.svg"
        plot_regions_2d(d, np.zeros((0, 2)), (-2.0, -2.0, 2.0, 2.0), out)
        root = ET.parse(out).getroot()
        lines = [el for el in root.iter() if el.tag.endswith("line")]
        assert len(lines) == 2

    def test_bounded_host_region_gets_square(self, tmp_path, triangle):
        out = tmp_path / "tri.svg"
        plot_regions_2d(triangle, np.array([[0.5, 0.5]]), (-1.0, -1.0, 3.0, 3.0), out)
        root = ET.parse(out).getroot()
        rects = [
            el
            for el in root.iter()
            if el.tag.endswith("rect") and el.get("stroke") == "#d62728"
        ]
        assert len(rects) == 1

    def test_non_planar_rejected(self, tmp_path):
        net = random_init([3, 3], 1, seed=0)
        d = decompose(net)
        with pytest.raises(DimensionMismatchError):
            plot_regions_2d(d, np.zeros((0, 3)), (-1, -1, 1, 1), tmp_path / "x.svg")

    def test_bad_bounds_rejected(self, tmp_path, triangle):
        with pytest.raises(ValueError):
            plot_regions_2d(
                triangle, np.zeros((0, 2)), (1.0, 0.0, -1.0, 2.0), tmp_path / "x.svg"
            )
