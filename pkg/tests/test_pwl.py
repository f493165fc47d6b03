import itertools
import math

import numpy as np
import pytest

from reluflow import (
    KuhnGrid,
    PWLFunction,
    approximate_lipschitz,
    compile_pwl,
    compiled_depth,
    eval_network,
    eval_network_batched,
    eval_pwl,
    interpolate,
    load_pwl,
    nodal_basis_network,
    nodal_pieces,
    pwl_from_dict,
    pwl_to_dict,
    resolve_function,
    save_pwl,
)
from reluflow.networks import complexity, first_layer_free


def hat_1d() -> PWLFunction:
    return PWLFunction(KuhnGrid(1), 1.0, {(0,): [1.0]})


def random_pwl(rng, dim, cells, h, out_dim=1, sparsity=0.2) -> PWLFunction:
    values = {}
    for coords in itertools.product(range(-cells, cells + 1), repeat=dim):
        if rng.uniform() < sparsity:
            continue  # absent vertices read as zero
        values[coords] = rng.normal(size=out_dim)
    if not values:
        values[(0,) * dim] = rng.normal(size=out_dim)
    return PWLFunction(KuhnGrid(dim, h), cells * h, values, output_dim=out_dim)


def compare_on_points(f, net, points) -> float:
    predictions = eval_network_batched(net, points)
    worst = 0.0
    for i in range(points.shape[0]):
        gap = np.linalg.norm(predictions[i] - eval_pwl(f, points[i]))
        worst = max(worst, float(gap))
    return worst


class TestEvalPwl:
    def test_hat_interpolates(self):
        assert eval_pwl(hat_1d(), [0.5]) == np.array([0.5])

    def test_stored_vertex_value(self):
        rng = np.random.default_rng(0)
        f = random_pwl(rng, 2, 2, 0.5)
        vertex = next(iter(sorted(f.values)))
        point = np.asarray(vertex, dtype=float) * f.grid.cell_size
        assert np.abs(eval_pwl(f, point) - f.values[vertex]).max() <= 1e-12

    def test_square_samples(self):
        values = {(i,): [(0.5 * i) ** 2] for i in range(-2, 3)}
        f = PWLFunction(KuhnGrid(1, 0.5), 1.0, values)
        assert abs(eval_pwl(f, [0.25])[0] - 0.125) <= 1e-12

    def test_zero_outside_support(self):
        assert eval_pwl(hat_1d(), [5.0]) == np.array([0.0])


class TestNodalPieces:
    def test_d1_closed_form(self):
        pieces = nodal_pieces(KuhnGrid(1), (0,))
        slopes = sorted(float(amap.dense()[0, 0]) for _, amap in pieces.pieces)
        assert slopes == [-1.0, 1.0]
        for _, amap in pieces.pieces:
            assert amap.bias[0] == 1.0

    def test_interpolation_conditions(self):
        from reluflow import simplex_vertices, vertex_position

        for dim in (1, 2, 3):
            grid = KuhnGrid(dim, 0.5)
            vertex = (1,) * dim
            pieces = nodal_pieces(grid, vertex)
            assert len(pieces.pieces) == grid.simplices_per_vertex
            for ref, amap in pieces.pieces:
                for other in simplex_vertices(grid, ref):
                    value = amap.apply(vertex_position(grid, other))[0]
                    expected = 1.0 if other == vertex else 0.0
                    assert abs(value - expected) <= 1e-12


class TestNodalBasisNetwork:
    def test_values_at_vertices(self):
        for dim in (1, 2, 3):
            grid = KuhnGrid(dim, 0.5)
            vertex = (0,) * dim
            net = nodal_basis_network(grid, vertex)
            assert net.depth == compiled_depth(dim)
            assert abs(eval_network(net, np.zeros(dim))[0] - 1.0) <= 1e-12
            for offset in itertools.product((-1, 0, 1), repeat=dim):
                if all(o == 0 for o in offset):
                    continue
                point = grid.cell_size * np.asarray(offset, dtype=float)
                assert abs(eval_network(net, point)[0]) <= 1e-12

    def test_d1_hat_values(self):
        net = nodal_basis_network(KuhnGrid(1), (0,))
        assert abs(eval_network(net, [0.5])[0] - 0.5) <= 1e-12
        assert abs(eval_network(net, [2.0])[0]) <= 1e-12

    def test_matches_hat_everywhere(self):
        net = nodal_basis_network(KuhnGrid(1), (0,))
        xs = np.linspace(-2.5, 2.5, 1001).reshape(-1, 1)
        hat = np.maximum(0.0, 1.0 - np.abs(xs[:, 0]))
        assert np.abs(eval_network_batched(net, xs)[:, 0] - hat).max() <= 1e-12


class TestCompile:
    def test_hat_matches_oracle(self):
        rng = np.random.default_rng(1)
        f = hat_1d()
        net = compile_pwl(f)
        points = rng.uniform(-2.0, 2.0, size=(1000, 1))
        assert compare_on_points(f, net, points) <= 1e-9

    def test_zero_function(self):
        rng = np.random.default_rng(2)
        f = PWLFunction(KuhnGrid(2), 1.0, {}, output_dim=1)
        net = compile_pwl(f)
        assert net.depth == 1
        points = rng.uniform(-3.0, 3.0, size=(100, 2))
        assert np.abs(eval_network_batched(net, points)).max() == 0.0

    def test_depth_formula(self):
        rng = np.random.default_rng(3)
        for dim, expected in [(1, 3), (2, 5), (3, 7)]:
            f = random_pwl(rng, dim, 1, 1.0)
            assert compile_pwl(f).depth == expected
            assert compiled_depth(dim) == expected

    @pytest.mark.parametrize("dim,cells,h", [(1, 4, 0.25), (2, 2, 0.5), (3, 1, 1.0)])
    def test_random_functions_match_oracle(self, dim, cells, h):
        rng = np.random.default_rng(40 + dim)
        for _ in range(3):
            f = random_pwl(rng, dim, cells, h)
            net = compile_pwl(f)
            r = f.cube_radius
            points = rng.uniform(-r - 1.0, r + 1.0, size=(2000, dim))
            tolerance = 1e-9 * (1.0 + f.max_value_norm)
            assert compare_on_points(f, net, points) <= tolerance

    def test_vector_valued_outputs(self):
        rng = np.random.default_rng(5)
        f = random_pwl(rng, 2, 1, 1.0, out_dim=3)
        net = compile_pwl(f)
        assert net.output_dim == 3
        assert net.depth == compiled_depth(2)
        points = rng.uniform(-2.0, 2.0, size=(500, 2))
        assert compare_on_points(f, net, points) <= 1e-9 * (1.0 + f.max_value_norm)

    def test_output_coordinate_identically_zero(self):
        f = PWLFunction(KuhnGrid(1), 1.0, {(0,): [1.0, 0.0]})
        net = compile_pwl(f)
        assert net.output_dim == 2
        xs = np.linspace(-2.0, 2.0, 101).reshape(-1, 1)
        out = eval_network_batched(net, xs)
        assert np.abs(out[:, 1]).max() == 0.0
        assert np.abs(out[:, 0] - np.maximum(0.0, 1.0 - np.abs(xs[:, 0]))).max() <= 1e-12

    def test_free_weight_budget(self):
        rng = np.random.default_rng(6)
        for dim in (1, 2):
            f = random_pwl(rng, dim, 2, 0.5, out_dim=2, sparsity=0.4)
            net = compile_pwl(f)
            report = complexity(net, first_layer_free(net))
            k_t = f.grid.simplices_per_vertex
            budget = f.output_dim * (dim + 1) * k_t * f.degrees_of_freedom
            assert report.free_weights <= budget

    def test_partition_of_unity(self):
        rng = np.random.default_rng(7)
        grid = KuhnGrid(2)
        nets = [
            nodal_basis_network(grid, coords)
            for coords in itertools.product(range(-1, 2), repeat=2)
        ]
        points = rng.uniform(-1.0, 1.0, size=(1000, 2))
        total = sum(eval_network_batched(net, points)[:, 0] for net in nets)
        assert np.abs(total - 1.0).max() <= 1e-9

    def test_bounded_by_max_vertex_value(self):
        rng = np.random.default_rng(8)
        f = random_pwl(rng, 2, 2, 0.5)
        net = compile_pwl(f)
        points = rng.uniform(-3.0, 3.0, size=(5000, 2))
        peak = np.abs(eval_network_batched(net, points)).max()
        assert peak <= f.max_value_norm + 1e-9


class TestInterpolate:
    def test_linear_function_is_exact(self):
        f = interpolate(lambda x: x, 1.0, 0.3, 1)
        xs = np.linspace(-1.0, 1.0, 2001)
        worst = max(abs(eval_pwl(f, [x])[0] - x) for x in xs)
        assert worst <= 1e-12

    def test_abs_with_origin_vertex_is_exact(self):
        f = interpolate(lambda x: np.abs(x), 1.0, 0.5, 1)
        xs = np.linspace(-1.0, 1.0, 2001)
        worst = max(abs(eval_pwl(f, [x])[0] - abs(x)) for x in xs)
        assert worst <= 1e-12

    def test_square_error_h_half(self):
        f = interpolate(lambda x: x**2, 1.0, 0.5, 1)
        assert f.grid.cell_size == 0.5
        xs = np.linspace(-1.0, 1.0, 10_001)
        worst = max(abs(eval_pwl(f, [x])[0] - x * x) for x in xs)
        assert abs(worst - 0.0625) <= 1e-6

    def test_sin_modulus_bound_and_monotonicity(self):
        xs = np.linspace(-1.0, 1.0, 5001)
        errors = []
        for delta in (0.5, 0.25, 0.125):
            f = interpolate(lambda x: np.sin(x), 1.0, delta, 1)
            worst = max(abs(eval_pwl(f, [x])[0] - math.sin(x)) for x in xs)
            assert worst <= delta
            errors.append(worst)
        assert errors[0] > errors[1] > errors[2]

    def test_vertex_count_formula(self):
        for dim, r, delta in [(1, 1.0, 0.25), (2, 2.0, 0.8), (3, 1.0, 1.0)]:
            f = interpolate(lambda x: np.sin(x), r, delta, dim)
            cells = math.ceil(math.sqrt(dim) * r / delta)
            assert f.grid.cell_size == r / cells
            assert len(f.values) == (2 * cells + 1) ** dim

    def test_fineness_does_not_exceed_delta(self):
        for dim, delta in [(1, 0.3), (2, 0.7), (3, 0.4)]:
            f = interpolate(lambda x: np.cos(x), 1.5, delta, dim)
            assert f.grid.fineness <= delta + 1e-12

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            interpolate(lambda x: x, -1.0, 0.5, 1)
        with pytest.raises(ValueError):
            interpolate(lambda x: x, 1.0, 0.0, 1)


class TestApproximateLipschitz:
    def test_depth_d1(self):
        net, report = approximate_lipschitz(lambda x: np.sin(x), 1.0, 1.0, 1.0, 0.5, 1)
        assert report.depth == 3

    def test_sin_sup_error(self):
        net, _ = approximate_lipschitz(lambda x: np.sin(x), 1.0, 1.0, 1.0, 0.1, 1)
        xs = np.linspace(-1.0, 1.0, 10_001).reshape(-1, 1)
        got = eval_network_batched(net, xs)[:, 0]
        assert np.abs(got - np.sin(xs[:, 0])).max() <= 0.1

    def test_sin_stays_bounded(self):
        net, _ = approximate_lipschitz(lambda x: np.sin(x), 1.0, 1.0, 1.0, 0.1, 1)
        xs = np.linspace(-5.0, 5.0, 10_001).reshape(-1, 1)
        assert np.abs(eval_network_batched(net, xs)).max() <= 1.0

    def test_constant_function(self):
        net, _ = approximate_lipschitz(lambda x: np.full_like(x, 0.7), 0.0, 0.7, 2.0, 0.01, 1)
        xs = np.linspace(-2.0, 2.0, 101).reshape(-1, 1)
        assert np.abs(eval_network_batched(net, xs)[:, 0] - 0.7).max() <= 1e-12

    def test_neuron_scaling_as_eps_halves(self):
        for dim in (1, 2):
            counts = []
            for eps in (0.4, 0.2, 0.1):
                _, report = approximate_lipschitz(
                    lambda x: np.sin(x), 1.0, math.sqrt(dim), 1.0, eps, dim
                )
                counts.append(report.neurons)
            for a, b in zip(counts, counts[1:]):
                assert b / a <= 2**dim + 1

    def test_declared_bound_spot_warning(self):
        with pytest.warns(UserWarning, match="declared bound"):
            approximate_lipschitz(lambda x: np.sin(x), 1.0, 0.1, 2.0, 0.5, 1)

    def test_rejects_bad_eps(self):
        with pytest.raises(ValueError):
            approximate_lipschitz(lambda x: x, 1.0, 1.0, 1.0, 0.0, 1)


class TestRegistry:
    def test_known_names(self):
        for name in ("zero", "sin", "cos", "tanh"):
            spec = resolve_function(name)
            assert spec.globally_bounded
            f = spec.factory(2)
            out = f(np.array([0.3, -0.4]))
            assert out.shape == (2,)

    def test_polynomial(self):
        spec = resolve_function("poly:0,0,1")  # x^2
        f = spec.factory(1)
        assert abs(f(np.array([0.5]))[0] - 0.25) <= 1e-12
        assert spec.lipschitz(1, 1.0) >= 2.0
        assert not spec.globally_bounded

    def test_bad_specs(self):
        with pytest.raises(ValueError):
            resolve_function("nope")
        with pytest.raises(ValueError):
            resolve_function("poly:1,a")


class TestFileFormat:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(12)
        f = random_pwl(rng, 2, 2, 0.5, out_dim=2)
        path = tmp_path / "f.json"
        save_pwl(f, path)
        back = load_pwl(path)
        assert back.grid.dim == 2 and back.grid.cell_size == 0.5
        for vertex, value in f.values.items():
            assert np.array_equal(back.values[vertex], value)

    def test_dict_shape(self):
        doc = pwl_to_dict(hat_1d())
        assert doc["dim"] == 1 and doc["h"] == 1.0 and doc["r"] == 1.0
        assert doc["values"] == [{"vertex": [0], "value": [1.0]}]
        assert pwl_from_dict(doc).degrees_of_freedom == 1

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            pwl_from_dict({"dim": 1, "h": 1.0, "r": 1.0, "values": []})


class TestPWLValidation:
    def test_cube_must_align_with_grid(self):
        with pytest.raises(ValueError, match="multiple"):
            PWLFunction(KuhnGrid(1, 0.4), 1.0, {(0,): [1.0]})

    def test_vertices_must_lie_in_cube(self):
        with pytest.raises(ValueError, match="outside"):
            PWLFunction(KuhnGrid(1), 1.0, {(2,): [1.0]})

    def test_degrees_of_freedom_counts_nonzero(self):
        f = PWLFunction(KuhnGrid(1), 2.0, {(0,): [1.0], (1,): [0.0]})
        assert f.degrees_of_freedom == 1
        assert f.max_value_norm == 1.0
