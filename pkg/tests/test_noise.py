import numpy as np
import pytest
from scipy import stats

import uncoupled
from uncoupled import DesignPoints, Grid, GridMeasure, IsotonicFn, make_noise

FAMILIES = [
    ("gaussian", {"sd": 0.7}),
    ("laplace", {"scale": 0.5}),
    ("uniform", {"half_width": 2.0}),
    ("point-mass", {}),
]


class TestMakeNoise:
    @pytest.mark.parametrize("family, params", FAMILIES)
    def test_families(self, family, params):
        noise = make_noise(family, params)
        assert noise.family == family
        assert noise.sigma >= 0
        assert family in repr(noise)

    def test_unknown_family(self):
        with pytest.raises(uncoupled.UnsupportedFamily, match="cauchy"):
            make_noise("cauchy", {"scale": 1.0})

    @pytest.mark.parametrize(
        "family, params",
        [
            ("gaussian", {}),
            ("gaussian", {"scale": 1.0}),
            ("gaussian", {"sd": 1.0, "scale": 1.0}),
            ("gaussian", {"sd": -1.0}),
            ("uniform", {"half_width": 0.0}),
            ("point-mass", {"sd": 1.0}),
        ],
    )
    def test_invalid_params(self, family, params):
        with pytest.raises(uncoupled.InvalidParameter):
            make_noise(family, params)

    @pytest.mark.parametrize("family, params", FAMILIES)
    def test_dict_roundtrip(self, family, params):
        noise = make_noise(family, params)
        assert noise.to_dict() == {"family": family, **params}
        assert uncoupled.NoiseModel.from_dict(noise.to_dict()) == noise

    def test_from_dict_needs_family(self):
        with pytest.raises(uncoupled.InvalidInput):
            uncoupled.NoiseModel.from_dict({"sd": 1.0})

    def test_explicit_sigma(self):
        noise = uncoupled.NoiseModel("gaussian", 1.0, sigma=3.0)
        assert noise.sigma == 3.0
        with pytest.raises(uncoupled.InvalidParameter):
            uncoupled.NoiseModel("gaussian", 1.0, sigma=-1.0)


class TestSigma:
    def test_gaussian(self):
        sigma = make_noise("gaussian", {"sd": 1.0}).sigma
        # E exp(|X|/t) = 2 exp(1/2t^2) Phi(1/t) for a standard normal
        mgf = 2 * np.exp(0.5 / sigma**2) * stats.norm.cdf(1 / sigma)
        assert mgf == pytest.approx(2, rel=1e-6)
        assert mgf <= 2

    def test_gaussian_scales(self):
        unit = make_noise("gaussian", {"sd": 1.0}).sigma
        assert make_noise("gaussian", {"sd": 0.3}).sigma == pytest.approx(
            0.3 * unit, rel=1e-6
        )

    def test_laplace(self):
        assert make_noise("laplace", {"scale": 0.5}).sigma == pytest.approx(
            1.0, rel=1e-6
        )

    def test_uniform_and_point_mass(self):
        assert make_noise("uniform", {"half_width": 2.0}).sigma == 4.0
        assert make_noise("point-mass").sigma == 0.0

    def test_psi1_norm_of_uniform_is_below_bound(self):
        noise = make_noise("uniform", {"half_width": 1.0})
        norm = uncoupled.psi1_norm(noise)
        # E exp(|X|/t) = t (e^(1/t) - 1) for X uniform on [-1, 1]
        assert norm * np.expm1(1 / norm) == pytest.approx(2, rel=1e-6)
        assert norm <= noise.sigma

    @pytest.mark.parametrize("sd", [0.1, 0.3, 2.0])
    def test_gaussian_closed_form(self, sd):
        u = sd / make_noise("gaussian", {"sd": sd}).sigma
        assert u**2 / 2 + stats.norm.logcdf(u) == pytest.approx(0, abs=1e-9)

    @pytest.mark.parametrize(
        "family, params",
        [
            ("gaussian", {"sd": 0.1}),
            ("gaussian", {"sd": 0.3}),
            ("gaussian", {"sd": 2.0}),
            ("laplace", {"scale": 0.05}),
            ("laplace", {"scale": 1.0}),
        ],
    )
    def test_psi1_norm_matches_sigma(self, family, params):
        noise = make_noise(family, params)
        assert uncoupled.psi1_norm(noise) == pytest.approx(
            noise.sigma, rel=1e-6
        )

    def test_psi1_norm_of_point_mass(self):
        assert uncoupled.psi1_norm(make_noise("point-mass")) == 0


class TestNoiseModel:
    @pytest.mark.parametrize("family, params", FAMILIES[:3])
    @pytest.mark.parametrize("m", [1, 2, 3, 4, 6])
    def test_raw_moments(self, family, params, m):
        noise = make_noise(family, params)
        assert noise.moment(m) == pytest.approx(
            noise.law.moment(m), rel=1e-6, abs=1e-9
        )

    @pytest.mark.parametrize("family, params", FAMILIES[:3])
    @pytest.mark.parametrize("p", [1, 2.5, 5])
    def test_abs_moments(self, family, params, p):
        noise = make_noise(family, params)
        assert noise.abs_moment(p) == pytest.approx(
            noise.law.expect(lambda x: np.abs(x) ** p), rel=1e-6
        )

    def test_point_mass(self):
        noise = make_noise("point-mass")
        assert noise.is_point_mass
        assert noise.cdf(0.0) == 1
        assert noise.cdf_left(0.0) == 0
        assert noise.moment(0) == 1
        assert noise.moment(3) == 0
        assert noise.sample(3, np.random.default_rng(0)).tolist() == [0.0] * 3
        with pytest.raises(uncoupled.UnsupportedFamily):
            noise.density(0.0)

    def test_density(self):
        noise = make_noise("uniform", {"half_width": 2.0})
        assert noise.density(1.0) == pytest.approx(0.25)
        assert noise.quantile(0.5) == pytest.approx(0)

    def test_sample_is_reproducible(self):
        noise = make_noise("laplace", {"scale": 1.0})
        first = noise.sample(5, np.random.default_rng(7))
        second = noise.sample(5, np.random.default_rng(7))
        assert first.tolist() == second.tolist()


class TestGrid:
    grid = Grid(-1.0, 0.5, 4, V=0.5)

    def test_atoms(self):
        assert self.grid.atoms.tolist() == [-1.0, -0.5, 0.0, 0.5, 1.0]
        assert self.grid.feasible.tolist() == [1, 2, 3]
        assert "N=4" in repr(self.grid)

    def test_invalid(self):
        with pytest.raises(uncoupled.InvalidParameter):
            Grid(0.0, 0.0, 3)

    def test_project(self):
        assert self.grid.project(-3.0) == -1
        assert self.grid.project(0.0) == 0
        assert self.grid.project(0.4) == 0
        assert self.grid.project(7.0) == 1
        assert self.grid.project(np.array([-0.7, 0.6])).tolist() == [
            -1.0,
            0.5,
        ]

    def test_project_feasible(self):
        assert self.grid.project_feasible(-3.0) == -0.5
        assert self.grid.project_feasible(0.2) == 0
        assert self.grid.project_feasible(0.3) == 0.5
        assert self.grid.project_feasible(9.0) == 0.5

    def test_project_measure(self):
        mu = GridMeasure([-0.4, 0.2, 0.3, 0.45], [0.2, 0.3, 0.1, 0.4])
        projected = self.grid.project_measure(mu)
        assert projected.atoms.tolist() == [-0.5, 0.0, 0.5]
        assert projected.weights == pytest.approx([0.2, 0.3, 0.5])

    @pytest.mark.parametrize("n", [16, 256, 4096])
    @pytest.mark.parametrize("p", [1, 2, 3])
    def test_project_measure_within_one_spacing(self, n, p, rng):
        grid = uncoupled.build_grid(1.0, 0.5, n)
        for _ in range(50):
            size = rng.integers(1, 8)
            mu = GridMeasure.from_atoms(
                rng.uniform(-1, 1, size), rng.dirichlet(np.ones(size))
            )
            distance = uncoupled.wasserstein_p(
                mu, grid.project_measure(mu), p
            )
            assert distance <= grid.spacing * (1 + 1e-9)

    def test_index_of(self):
        assert self.grid.index_of([-1.0, 0.5]).tolist() == [0, 3]
        with pytest.raises(uncoupled.InvalidInput):
            self.grid.index_of([0.25])
        with pytest.raises(uncoupled.InvalidInput):
            self.grid.index_of([1.5])

    def test_point_mass_kernel_is_identity(self):
        kernel = self.grid.kernel(make_noise("point-mass"))
        assert kernel.shape == (5, 3)
        np.testing.assert_array_equal(kernel, np.eye(5)[:, 1:4])

    def test_kernel_is_column_stochastic(self):
        kernel = self.grid.kernel(make_noise("laplace", {"scale": 0.3}))
        assert kernel.min() >= 0
        np.testing.assert_allclose(kernel.sum(axis=0), 1, atol=1e-12)


class TestCellProbabilities:
    def test_matches_projection(self, rng):
        noise = make_noise("gaussian", {"sd": 0.4})
        grid = uncoupled.build_grid(1.0, noise.sigma, 100)
        a, draws = 0.3, 200_000
        probabilities = uncoupled.cell_probabilities(noise, a, grid)
        assert probabilities.sum() == pytest.approx(1)
        projected = grid.project(a + noise.sample(draws, rng))
        counts = np.bincount(grid.index_of(projected), minlength=grid.N + 1)
        error = np.sqrt(probabilities * (1 - probabilities) / draws)
        assert np.all(
            np.abs(counts / draws - probabilities) <= 5 * error + 1 / draws
        )

    def test_atom_on_boundary(self):
        grid = Grid(0.0, 1.0, 3)
        probabilities = uncoupled.cell_probabilities(
            make_noise("point-mass"), 2.0, grid
        )
        assert probabilities.tolist() == [0.0, 0.0, 1.0, 0.0]


class TestConvolvePushforward:
    grid = Grid(-1.0, 0.5, 4, V=0.5)

    def test_point_mass_noise(self):
        mu = GridMeasure([-0.5, 0.5], [0.25, 0.75])
        result = uncoupled.convolve_pushforward(
            mu, make_noise("point-mass"), self.grid
        )
        assert result.atoms.tolist() == self.grid.atoms.tolist()
        assert result.weights.tolist() == [0.0, 0.25, 0.0, 0.75, 0.0]

    def test_mixes_columns(self):
        noise = make_noise("uniform", {"half_width": 0.3})
        mu = GridMeasure([-0.5, 0.5], [0.5, 0.5])
        result = uncoupled.convolve_pushforward(mu, noise, self.grid)
        expected = (
            uncoupled.cell_probabilities(noise, -0.5, self.grid)
            + uncoupled.cell_probabilities(noise, 0.5, self.grid)
        ) / 2
        np.testing.assert_allclose(result.weights, expected, atol=1e-12)

    def test_gaussian_noise_matches_sampling(self, rng):
        noise, draws = make_noise("gaussian", {"sd": 0.5}), 200_000
        grid = uncoupled.build_grid(1.0, noise.sigma, 100)
        atoms = grid.atoms[grid.feasible][[0, -1]]
        result = uncoupled.convolve_pushforward(
            GridMeasure(atoms, [0.3, 0.7]), noise, grid
        )
        z = rng.choice(atoms, draws, p=[0.3, 0.7]) + noise.sample(draws, rng)
        counts = np.bincount(
            grid.index_of(grid.project(z)), minlength=grid.N + 1
        )
        distance = np.abs(
            np.cumsum(counts) / draws - np.cumsum(result.weights)
        ).max()
        # the 0.1% critical value of the Kolmogorov distribution
        assert distance <= 1.95 / np.sqrt(draws)

    def test_off_grid(self):
        with pytest.raises(uncoupled.InvalidInput):
            uncoupled.convolve_pushforward(
                GridMeasure.point_mass(0.1),
                make_noise("point-mass"),
                self.grid,
            )

    def test_outside_bound(self):
        with pytest.raises(uncoupled.InvalidInput, match="outside"):
            uncoupled.convolve_pushforward(
                GridMeasure.point_mass(1.0),
                make_noise("point-mass"),
                self.grid,
            )


class TestDiscretize:
    def test_point_mass(self):
        law = uncoupled.discretize(make_noise("point-mass"), 10)
        assert law.atoms.tolist() == [0.0]
        assert law.weights == pytest.approx([1.0])

    def test_invalid_size(self):
        with pytest.raises(uncoupled.InvalidParameter):
            uncoupled.discretize(make_noise("point-mass"), 0)

    def test_gaussian(self):
        law = uncoupled.discretize(make_noise("gaussian", {"sd": 2.0}), 4000)
        assert law.size == 4000
        assert law.weights @ law.atoms == pytest.approx(0, abs=1e-9)
        assert law.weights @ law.atoms**2 == pytest.approx(4, rel=1e-2)


class TestConvolvedDistance:
    design = DesignPoints.equispaced(50)

    def test_identical(self, rng):
        f = IsotonicFn(self.design, np.linspace(-1, 1, 50))
        noise = make_noise("gaussian", {"sd": 0.5})
        assert uncoupled.convolved_distance(f, f, noise, 1000, rng) == 0

    def test_shift(self, rng):
        f = IsotonicFn(self.design, np.linspace(-1, 0.5, 50))
        g = IsotonicFn(self.design, f.values + 0.25)
        noise = make_noise("laplace", {"scale": 0.5})
        distance = uncoupled.convolved_distance(f, g, noise, 1000, rng)
        assert distance == pytest.approx(0.25, abs=1e-9)


@pytest.mark.parametrize("n", [64, 256, 1024])
def test_empirical_w2_rate(n, rng):
    noise = make_noise("gaussian", {"sd": 1.0})
    law = uncoupled.discretize(noise, 8192)
    distances = [
        uncoupled.wasserstein_p(
            law,
            uncoupled.EmpiricalMeasure.from_samples(noise.sample(n, rng)),
            2,
        )
        ** 2
        for _ in range(200)
    ]
    assert np.mean(distances) <= 16 * noise.sigma**2 / np.sqrt(n)


@pytest.mark.parametrize("n", [16, 256, 4096])
def test_projection_error(n, rng):
    V, noise, draws = 1.0, make_noise("gaussian", {"sd": 0.5}), 100_000
    grid = uncoupled.build_grid(V, noise.sigma, n)
    z = rng.uniform(-V, V, draws) + noise.sample(draws, rng)
    error = np.mean((grid.project(z) - z) ** 2)
    assert error <= 8 * (V + noise.sigma) ** 2 / np.sqrt(n)
