import numpy as np
import pytest

from halfvae.diffengine import mlp_forward
from halfvae.errors import ConfigError, ShapeError, UnderdeterminedError
from halfvae.synth import (
    MixingMap,
    SourceSpec,
    default_source_specs,
    generate_sources,
    make_mixing,
    mix,
)


class TestGenerateSources:
    def test_uniform_mean(self):
        z = generate_sources([SourceSpec("uniform", {"low": -1.0, "high": 1.0}, 100_000)], seed=5)
        se = z[0].std() / np.sqrt(z.shape[1])
        assert abs(z[0].mean()) <= 4 * se

    def test_deterministic(self):
        a = generate_sources(default_source_specs(200), seed=11)
        b = generate_sources(default_source_specs(200), seed=11)
        assert a.tobytes() == b.tobytes()

    def test_seed_changes_output(self):
        assert not np.array_equal(
            generate_sources(default_source_specs(50), 1), generate_sources(default_source_specs(50), 2)
        )

    def test_near_zero_correlation(self):
        z = generate_sources(default_source_specs(10_000), seed=3)
        c = np.corrcoef(z)
        assert np.max(np.abs(c[np.triu_indices(3, 1)])) <= 0.05

    def test_default_variances(self):
        z = generate_sources(default_source_specs(200_000), seed=4)
        # Laplace(0,1) has variance 2; U(-sqrt3, sqrt3) has 1; the bimodal mixture 1.5^2 + 0.4^2
        np.testing.assert_allclose(z.var(axis=1), [2.0, 1.0, 2.41], rtol=0.02)

    def test_sine_kind(self):
        z = generate_sources([SourceSpec("sine_plus_noise", {"frequency": 0.05, "amplitude": 2.0, "noise": 0.0}, 400)], 0)
        assert np.max(np.abs(z)) <= 2.0 + 1e-12

    def test_rows_independent_of_neighbours(self):
        specs = default_source_specs(100)
        three = generate_sources(specs, seed=9)
        two = generate_sources(specs[:2], seed=9)
        np.testing.assert_array_equal(three[:2], two)

    def test_inconsistent_lengths(self):
        with pytest.raises(ConfigError):
            generate_sources([SourceSpec("uniform", {}, 10), SourceSpec("laplace", {}, 11)], 0)

    @pytest.mark.parametrize(
        "kind, params", [("laplace", {"scale": 0.0}), ("uniform", {"low": 1.0, "high": 1.0}), ("bogus", {})]
    )
    def test_invalid_spec(self, kind, params):
        with pytest.raises(ConfigError):
            SourceSpec(kind, params, 10)


class TestMakeMixing:
    def test_square_deterministic(self):
        a = make_mixing(3, 3, "linear", seed=7)
        b = make_mixing(3, 3, "linear", seed=7)
        assert a.matrix.tobytes() == b.matrix.tobytes()
        assert np.linalg.matrix_rank(a.matrix) == 3
        assert np.linalg.cond(a.matrix) <= 100

    def test_tall(self):
        a = make_mixing(3, 2, "linear", seed=1)
        assert a.matrix.shape == (3, 2)
        assert np.linalg.matrix_rank(a.matrix) == 2

    def test_underdetermined(self):
        with pytest.raises(UnderdeterminedError):
            make_mixing(2, 3, "linear", seed=1)

    @pytest.mark.parametrize("seed", range(20))
    def test_condition_bound(self, seed):
        a = make_mixing(4, 3, "linear", seed)
        assert np.linalg.cond(a.matrix) <= 100
        assert np.all(np.abs(a.matrix) <= 1.0)

    def test_nonlinear(self):
        mp = make_mixing(3, 2, "mlp_nonlinear", seed=2)
        assert (mp.m, mp.n) == (3, 2)

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            make_mixing(3, 3, "quadratic", 0)

    @pytest.mark.parametrize("kind", ["linear", "mlp_nonlinear"])
    def test_dict_roundtrip(self, kind, rng):
        mp = make_mixing(3, 3, kind, seed=4)
        back = MixingMap.from_dict(mp.to_dict())
        z = rng.normal(size=(3, 5))
        np.testing.assert_array_equal(mix(back, z), mix(mp, z))


class TestMix:
    def test_identity(self, rng):
        z = rng.normal(size=(3, 8))
        np.testing.assert_array_equal(mix(MixingMap("linear", matrix=np.eye(3)), z), z)

    def test_zero_sources(self):
        assert not mix(make_mixing(3, 3, "linear", 0), np.zeros((3, 6))).any()

    @pytest.mark.parametrize("kind", ["linear", "mlp_nonlinear"])
    def test_per_column(self, kind, rng):
        mp = make_mixing(4, 3, kind, seed=3)
        z = rng.normal(size=(3, 9))
        x = mix(mp, z)
        for j in range(9):
            col = mp.matrix @ z[:, j] if kind == "linear" else mlp_forward(mp.mlp, z[:, j:j + 1])[0][:, 0]
            np.testing.assert_allclose(x[:, j], col, rtol=1e-13, atol=1e-15)

    def test_column_permutation_commutes(self, rng):
        mp = make_mixing(3, 3, "linear", seed=8)
        z = rng.normal(size=(3, 10))
        order = rng.permutation(10)
        np.testing.assert_allclose(mix(mp, z[:, order]), mix(mp, z)[:, order], rtol=1e-13)

    def test_shape_mismatch(self, rng):
        with pytest.raises(ShapeError):
            mix(make_mixing(3, 3, "linear", 0), rng.normal(size=(2, 4)))
