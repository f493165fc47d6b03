import math

import numpy as np
import pytest

from reluflow import (
    KuhnGrid,
    SimplexRef,
    barycentric,
    locate,
    neighborhood,
    omega_zero_contains,
    simplex_contains,
    simplex_vertices,
    vertex_position,
)


def barycentric_oracle(grid, s, x):
    """Solve the full (d+1)x(d+1) interpolation system directly."""
    verts = np.array([vertex_position(grid, v) for v in simplex_vertices(grid, s)])
    system = np.vstack([verts.T, np.ones(len(verts))])
    rhs = np.concatenate([np.asarray(x, dtype=float), [1.0]])
    return np.linalg.solve(system, rhs)


class TestLocate:
    def test_sorted_fracs(self):
        ref, local = locate(KuhnGrid(2), [0.2, 0.7])
        assert ref == SimplexRef((0, 0), (0, 1))
        assert np.allclose(local, [0.2, 0.7])

    def test_negative_cell(self):
        ref, local = locate(KuhnGrid(2), [1.3, -0.2])
        assert ref.cell == (1, -1)
        assert np.allclose(local, [0.3, 0.8])

    def test_tie_break_by_index(self):
        ref, _ = locate(KuhnGrid(2), [0.5, 0.5])
        assert ref.perm == (0, 1)

    def test_scaled_grid(self):
        ref, local = locate(KuhnGrid(1, 0.25), [0.6])
        assert ref.cell == (2,)
        assert np.allclose(local, [0.4])

    def test_point_lies_in_returned_simplex(self):
        rng = np.random.default_rng(0)
        for d in (1, 2, 3, 4):
            grid = KuhnGrid(d, 0.5)
            for x in rng.uniform(-3.0, 3.0, size=(500, d)):
                ref, _ = locate(grid, x)
                weights = barycentric(grid, ref, x)
                assert weights.min() >= -1e-9
                assert abs(weights.sum() - 1.0) <= 1e-12
                verts = np.array([vertex_position(grid, v) for v in simplex_vertices(grid, ref)])
                assert np.abs(weights @ verts - x).max() <= 1e-9 * grid.cell_size


class TestSimplexVertices:
    def test_d2_example(self):
        verts = simplex_vertices(KuhnGrid(2), SimplexRef((0, 0), (0, 1)))
        assert verts == [(0, 0), (0, 1), (1, 1)]

    def test_d1_cell(self):
        assert simplex_vertices(KuhnGrid(1), SimplexRef((3,), (0,))) == [(3,), (4,)]

    def test_vertex_count(self):
        for d in (1, 2, 3, 4):
            ref, _ = locate(KuhnGrid(d), np.full(d, 0.3))
            assert len(simplex_vertices(KuhnGrid(d), ref)) == d + 1


class TestBarycentric:
    def test_vertex_gets_unit_weight(self):
        grid = KuhnGrid(2)
        ref = SimplexRef((0, 0), (0, 1))
        for i, vert in enumerate(simplex_vertices(grid, ref)):
            weights = barycentric(grid, ref, vertex_position(grid, vert))
            expected = np.zeros(3)
            expected[i] = 1.0
            assert np.abs(weights - expected).max() <= 1e-12

    def test_centroid_is_uniform(self):
        grid = KuhnGrid(3, 0.5)
        ref = SimplexRef((1, -2, 0), (2, 0, 1))
        verts = np.array([vertex_position(grid, v) for v in simplex_vertices(grid, ref)])
        weights = barycentric(grid, ref, verts.mean(axis=0))
        assert np.abs(weights - 0.25).max() <= 1e-12

    def test_matches_linear_system_oracle(self):
        rng = np.random.default_rng(1)
        for d in (1, 2, 3, 4):
            grid = KuhnGrid(d, 0.75)
            for _ in range(50):
                x = rng.uniform(-2.0, 2.0, size=d)
                ref, _ = locate(grid, x)
                ours = barycentric(grid, ref, x)
                oracle = barycentric_oracle(grid, ref, x)
                assert np.abs(ours - oracle).max() <= 1e-9

    def test_rejects_outside_point(self):
        grid = KuhnGrid(2)
        with pytest.raises(ValueError, match="outside"):
            barycentric(grid, SimplexRef((0, 0), (0, 1)), [0.9, 0.1])
        assert not simplex_contains(grid, SimplexRef((0, 0), (0, 1)), [0.9, 0.1])


class TestNeighborhood:
    def test_counts_are_factorials(self):
        rng = np.random.default_rng(2)
        for d in (1, 2, 3, 4):
            grid = KuhnGrid(d)
            for _ in range(3):
                vertex = tuple(int(c) for c in rng.integers(-5, 5, size=d))
                refs = neighborhood(grid, vertex)
                assert len(refs) == math.factorial(d + 1)
                assert len(set(refs)) == len(refs)

    def test_every_simplex_contains_the_vertex(self):
        grid = KuhnGrid(3, 0.5)
        vertex = (1, -1, 2)
        for ref in neighborhood(grid, vertex):
            assert vertex in simplex_vertices(grid, ref)

    def test_grid_reports_count(self):
        assert KuhnGrid(2).simplices_per_vertex == 6
        assert KuhnGrid(3).simplices_per_vertex == 24


class TestOmegaZero:
    def test_examples(self):
        assert omega_zero_contains([0.0, 0.0])
        assert not omega_zero_contains([1.0, -1.0])
        assert omega_zero_contains([1.0, 0.0])

    def test_agrees_with_geometric_oracle(self):
        rng = np.random.default_rng(3)
        for d in (2, 3):
            grid = KuhnGrid(d)
            around_origin = neighborhood(grid, (0,) * d)
            z = rng.uniform(-1.5, 1.5, size=(10_000, d))
            for point in z:
                geometric = any(simplex_contains(grid, s, point) for s in around_origin)
                assert omega_zero_contains(point) == geometric


class TestFineness:
    def test_max_vertex_distance_is_h_sqrt_d(self):
        rng = np.random.default_rng(4)
        for d, h in [(1, 1.0), (2, 0.5), (3, 0.25), (4, 2.0)]:
            grid = KuhnGrid(d, h)
            worst = 0.0
            for x in rng.uniform(-2.0, 2.0, size=(50, d)):
                ref, _ = locate(grid, x)
                verts = np.array(
                    [vertex_position(grid, v) for v in simplex_vertices(grid, ref)]
                )
                for i in range(len(verts)):
                    for j in range(i + 1, len(verts)):
                        worst = max(worst, float(np.linalg.norm(verts[i] - verts[j])))
            assert math.isclose(worst, grid.fineness, rel_tol=1e-12)
            assert math.isclose(grid.fineness, h * math.sqrt(d), rel_tol=1e-15)


class TestValidation:
    def test_bad_grid_params(self):
        with pytest.raises(ValueError):
            KuhnGrid(0)
        with pytest.raises(ValueError):
            KuhnGrid(2, 0.0)
        with pytest.raises(ValueError):
            KuhnGrid(2, math.inf)
