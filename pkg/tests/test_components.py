import math

import numpy as np
import pytest

from mbsts_tl import ComponentSpec, CovarianceSet, build_state_space
from mbsts_tl.components import StateLayout


def _trend_only_spec(m=1, **kw):
    return ComponentSpec(n_series=m, has_seasonal=False, has_cycle=False,
                         has_regression=False, **kw)


class TestComponentSpec:
    def test_flag_broadcasting(self):
        spec = ComponentSpec(n_series=3, has_cycle=[True, False, True])
        assert spec.has_trend == (True, True, True)
        assert spec.cycle_series == (0, 2)
        assert spec.seasons == (4, 4, 4)

    def test_per_series_seasons(self):
        spec = ComponentSpec(n_series=2, seasons=[3, 7])
        assert spec.seasons == (3, 7)

    @pytest.mark.parametrize("kw", [
        {"rho": 0.0}, {"rho": 1.2}, {"rho": -0.3},
        {"damping": 0.0}, {"damping": 1.0},
        {"frequency": -0.1}, {"frequency": math.pi + 0.1},
        {"seasons": 1},
        {"has_cycle": [True]},          # wrong length
        {"long_term_slope": [1.0, 2.0, 3.0]},
    ])
    def test_invalid_hyperparameters(self, kw):
        with pytest.raises(ValueError):
            ComponentSpec(n_series=2, **kw)

    def test_series_without_components_rejected(self):
        with pytest.raises(ValueError, match="no components"):
            ComponentSpec(n_series=2, has_trend=[True, False],
                          has_seasonal=[True, False], has_cycle=[True, False],
                          has_regression=[True, False])

    def test_n_series_positive(self):
        with pytest.raises(ValueError):
            ComponentSpec(n_series=0)


class TestStateLayout:
    def test_dimensions(self):
        spec = ComponentSpec(n_series=2, seasons=[4, 6])
        layout = StateLayout(spec)
        # 2 trends, 2 slopes, 1 const, (4-1)+(6-1) seasonal, 2+2 cycle
        assert layout.state_dim == 2 + 2 + 1 + 3 + 5 + 4
        assert layout.const_idx == 4
        assert len(layout.seasonal_blocks[0]) == 3
        assert len(layout.seasonal_blocks[1]) == 5
        assert layout.omega_idx.size == layout.omega_star_idx.size == 2

    def test_no_trend_no_const_slot(self):
        spec = ComponentSpec(n_series=1, has_trend=False, has_seasonal=True,
                             has_cycle=False)
        layout = StateLayout(spec)
        assert layout.const_idx is None
        assert layout.mu_idx.size == 0


class TestTransition:
    def test_trend_recursion(self):
        # mu' = mu + delta; delta' = D(1-rho) + rho*delta with D = 2, rho = 0.5
        spec = _trend_only_spec(rho=0.5, long_term_slope=[2.0])
        model = build_state_space(spec, CovarianceSet())
        state = np.array([3.0, 1.0, 1.0])  # (mu, delta, const)
        nxt = model.transition @ state
        assert nxt == pytest.approx([4.0, 2.0 * 0.5 + 0.5 * 1.0, 1.0])

    def test_rho_one_random_walk_slope(self):
        spec = _trend_only_spec(rho=1.0, long_term_slope=[5.0])
        model = build_state_space(spec, CovarianceSet())
        state = np.array([0.0, 1.5, 1.0])
        # drift term vanishes when rho = 1
        assert (model.transition @ state) == pytest.approx([1.5, 1.5, 1.0])

    def test_seasonal_recursion(self):
        spec = ComponentSpec(n_series=1, has_trend=False, has_cycle=False,
                             seasons=4)
        model = build_state_space(spec, CovarianceSet())
        state = np.array([1.0, -2.0, 0.5])
        nxt = model.transition @ state
        assert nxt == pytest.approx([0.5, 1.0, -2.0])

    def test_cycle_rotation(self):
        spec = ComponentSpec(n_series=1, has_trend=False, has_seasonal=False,
                             damping=0.5, frequency=math.pi / 2)
        model = build_state_space(spec, CovarianceSet())
        nxt = model.transition @ np.array([1.0, 0.0])
        assert nxt == pytest.approx([0.0, -0.5], abs=1e-12)

    def test_cycle_zero_frequency_is_damped_identity(self):
        spec = ComponentSpec(n_series=1, has_trend=False, has_seasonal=False,
                             damping=0.7, frequency=0.0)
        model = build_state_space(spec, CovarianceSet())
        assert np.allclose(model.transition, 0.7 * np.eye(2))

    def test_observation_picks_component_heads(self):
        spec = ComponentSpec(n_series=2, seasons=3)
        model = build_state_space(spec, CovarianceSet())
        layout = model.layout
        z = model.observation
        for i in range(2):
            expected = np.zeros(layout.state_dim)
            expected[layout.mu_idx[i]] = 1.0
            expected[layout.seasonal_blocks[i][0]] = 1.0
            expected[layout.omega_idx[i]] = 1.0
            assert np.array_equal(z[i], expected)


class TestCovarianceAssembly:
    def test_q_block_structure(self):
        spec = ComponentSpec(n_series=2, seasons=3)
        covs = CovarianceSet(trend=np.diag([1.0, 2.0]), slope=np.diag([3.0, 4.0]),
                             seasonal=np.diag([5.0, 6.0]), cycle=np.diag([7.0, 8.0]),
                             obs=np.eye(2))
        model = build_state_space(spec, covs)
        q = model.Q
        lay = model.layout
        assert q[lay.mu_idx[0], lay.mu_idx[0]] == 1.0
        assert q[lay.delta_idx[1], lay.delta_idx[1]] == 4.0
        assert q[lay.seasonal_blocks[1][0], lay.seasonal_blocks[1][0]] == 6.0
        # cycle covariance is shared by omega and omega*
        assert q[lay.omega_idx[0], lay.omega_idx[0]] == 7.0
        assert q[lay.omega_star_idx[0], lay.omega_star_idx[0]] == 7.0
        assert q[lay.const_idx, lay.const_idx] == 0.0
        # shocks never correlate across components
        assert q[lay.mu_idx[0], lay.delta_idx[0]] == 0.0
        assert q[lay.omega_idx[0], lay.omega_star_idx[0]] == 0.0
        # seasonal shock only enters the head slot
        assert q[lay.seasonal_blocks[0][1], lay.seasonal_blocks[0][1]] == 0.0

    def test_missing_covariances_default_to_zero(self):
        spec = ComponentSpec(n_series=1)
        model = build_state_space(spec, CovarianceSet())
        assert not model.Q.any()
        assert not model.R.any()

    @pytest.mark.parametrize("kw", [
        {"trend": np.eye(3)},                              # wrong dim
        {"obs": np.array([[1.0, 0.5], [0.4, 1.0]])},       # asymmetric
        {"slope": -np.eye(2)},                             # negative definite
    ])
    def test_invalid_covariances(self, kw):
        spec = ComponentSpec(n_series=2)
        with pytest.raises(ValueError):
            build_state_space(spec, CovarianceSet(**kw))

    def test_initial_state_diffuse_except_const(self):
        spec = ComponentSpec(n_series=1)
        model = build_state_space(spec, CovarianceSet(), diffuse_scale=1e4)
        lay = model.layout
        assert model.initial_mean[lay.const_idx] == 1.0
        assert model.initial_cov[lay.const_idx, lay.const_idx] == 0.0
        assert model.initial_cov[lay.mu_idx[0], lay.mu_idx[0]] == 1e4

    def test_with_initial_replaces_and_validates(self):
        spec = ComponentSpec(n_series=1, has_seasonal=False, has_cycle=False)
        model = build_state_space(spec, CovarianceSet())
        new = model.with_initial(mean=[1.0, 2.0, 1.0], cov=np.zeros((3, 3)))
        assert np.array_equal(new.initial_mean, [1.0, 2.0, 1.0])
        assert not new.initial_cov.any()
        with pytest.raises(ValueError):
            model.with_initial(cov=-np.eye(3))
