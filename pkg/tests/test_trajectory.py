"""
Tests for the Trajectory module.

This module covers the quadratic cost, trajectory validation and
serialization, rollouts and Jacobian helpers.
"""

import numpy as np
import pytest

from hybrid_ddp.qp_solver import InputConstraintSet
from hybrid_ddp.trajectory import (
    DivergedRolloutError,
    DynamicsModel,
    QuadraticCost,
    Trajectory,
    TrajectoryError,
    cost_expansion,
    finite_difference_constraint_jacobians,
    finite_difference_jacobians,
    linearize,
    linearize_constraints,
    rollout,
    state_difference,
    terminal_expansion,
    total_cost,
)


class ExplodingModel(DynamicsModel):
    """Scalar model that overflows after a few steps."""

    name = "exploding"
    state_dim = 1
    input_dim = 1
    modes = (0,)

    def step(self, x, u, mode):
        return np.asarray(x) * 1e200

    def constraints(self, x, mode):
        raise NotImplementedError

    def equilibrium_constraints(self, x, mode):
        raise NotImplementedError

    def step_duration(self, u):
        return 1.0


class MovingBoundModel(DynamicsModel):
    """Scalar-input model whose bound and equality move with the state."""

    name = "moving-bound"
    state_dim = 2
    input_dim = 1
    modes = (0,)

    def step(self, x, u, mode):
        return np.asarray(x, dtype=float)

    def constraints(self, x, mode):
        return InputConstraintSet(
            A=np.array([[1.0]]),
            b=np.array([x[0] ** 2]),
            G=np.array([[2.0]]),
            h=np.array([x[1]]),
        )

    def equilibrium_constraints(self, x, mode):
        return self.constraints(x, mode)

    def step_duration(self, u):
        return 1.0


class TestQuadraticCost:
    """Test cases for QuadraticCost."""

    def test_accepts_diagonal_matrices(self):
        """Test that full diagonal matrices are reduced to their diagonal."""
        cost = QuadraticCost(
            Q=np.diag([1.0, 2.0]), R=np.eye(1), Q_N=np.diag([3.0, 4.0]), goal=[0, 0]
        )

        np.testing.assert_array_equal(cost.Q, [1.0, 2.0])
        assert cost.state_dim == 2
        assert cost.input_dim == 1

    def test_rejects_off_diagonal(self):
        """Test that coupled weights are rejected."""
        with pytest.raises(ValueError, match="diagonal"):
            QuadraticCost(
                Q=np.array([[1.0, 0.1], [0.1, 1.0]]),
                R=[1.0],
                Q_N=[1.0, 1.0],
                goal=[0.0, 0.0],
            )

    def test_rejects_non_positive(self):
        """Test that zero weights are rejected."""
        with pytest.raises(ValueError, match="positive"):
            QuadraticCost(Q=[1.0, 0.0], R=[1.0], Q_N=[1.0, 1.0], goal=[0.0, 0.0])

    def test_rejects_dimension_mismatch(self):
        """Test that Q, Q_N and goal must agree."""
        with pytest.raises(ValueError, match="share the state dimension"):
            QuadraticCost(Q=[1.0, 1.0], R=[1.0], Q_N=[1.0], goal=[0.0, 0.0])

    def test_wraps_angles(self, pushing_cost):
        """Test that angular errors are wrapped before weighting."""
        x = np.array([0.0, 0.0, 2 * np.pi - 0.1])

        np.testing.assert_allclose(pushing_cost.state_error(x), [0.0, 0.0, -0.1])
        assert pushing_cost.terminal(x) == pytest.approx(500.0 * 0.01)

    def test_running_cost_has_no_half_factor(self, linear_cost):
        """Test l = dx^T Q dx + u^T R u."""
        value = linear_cost.running(np.array([1.0, 2.0]), np.array([3.0]))

        assert value == pytest.approx(1.0 + 4.0 + 0.1 * 9.0)

    def test_expansions(self, pushing_cost):
        """Test exact gradients and Hessians of the running and terminal costs."""
        x = np.array([0.1, -0.2, 0.3])
        u = np.array([0.4, 0.05])

        terms = cost_expansion(pushing_cost, x, u)
        _, V_x, V_xx = terminal_expansion(pushing_cost, x)

        np.testing.assert_allclose(terms.l_x, 2.0 * pushing_cost.Q * x)
        np.testing.assert_allclose(terms.l_u, 2.0 * pushing_cost.R * u)
        np.testing.assert_allclose(terms.l_xx, np.diag(2.0 * pushing_cost.Q))
        assert terms.l_xu.shape == (3, 2)
        np.testing.assert_allclose(V_x, 2.0 * pushing_cost.Q_N * x)
        np.testing.assert_allclose(V_xx, np.diag(2.0 * pushing_cost.Q_N))


class TestTrajectory:
    """Test cases for the Trajectory record."""

    def test_valid_trajectory(self):
        """Test properties of a valid trajectory."""
        traj = Trajectory(
            states=np.zeros((4, 2)), inputs=np.zeros((3, 1)), modes=(0, 0, 0)
        )

        assert traj.horizon == 3
        np.testing.assert_array_equal(traj.initial_state, [0.0, 0.0])
        np.testing.assert_array_equal(traj.dt, np.zeros(3))

    def test_state_count_mismatch(self):
        """Test that N modes need N + 1 states."""
        with pytest.raises(TrajectoryError, match="Expected 4 states"):
            Trajectory(
                states=np.zeros((3, 2)), inputs=np.zeros((3, 1)), modes=(0, 0, 0)
            )

    def test_input_count_mismatch(self):
        """Test that N modes need N inputs."""
        with pytest.raises(TrajectoryError, match="Expected 3 inputs"):
            Trajectory(
                states=np.zeros((4, 2)), inputs=np.zeros((2, 1)), modes=(0, 0, 0)
            )

    def test_arrays_are_read_only(self):
        """Test that a trajectory cannot be modified in place."""
        traj = Trajectory(states=np.zeros((2, 2)), inputs=np.zeros((1, 1)), modes=(0,))

        with pytest.raises(ValueError):
            traj.states[0, 0] = 1.0

    def test_serialization(self, double_integrator):
        """Test that to_dict/from_dict preserves every field."""
        traj = rollout(double_integrator, [1.0, 0.0], [[0.1], [0.2]], [0, 0])

        restored = Trajectory.from_dict(traj.to_dict())

        np.testing.assert_array_equal(restored.states, traj.states)
        np.testing.assert_array_equal(restored.inputs, traj.inputs)
        np.testing.assert_array_equal(restored.dt, traj.dt)
        assert restored.modes == traj.modes

    def test_from_dict_missing_keys(self):
        """Test that incomplete documents are rejected."""
        with pytest.raises(TrajectoryError, match="states"):
            Trajectory.from_dict({"inputs": [], "modes": []})


class TestRollout:
    """Test cases for rollout and total_cost."""

    def test_rollout_follows_dynamics(self, double_integrator):
        """Test that every state is the step of the previous one."""
        inputs = np.array([[1.0], [0.0], [-1.0]])

        traj = rollout(double_integrator, [0.0, 0.0], inputs, [0, 0, 0])

        for k in range(traj.horizon):
            np.testing.assert_allclose(
                traj.states[k + 1],
                double_integrator.step(traj.states[k], traj.inputs[k], 0),
            )
        np.testing.assert_allclose(traj.dt, [0.1, 0.1, 0.1])

    def test_rollout_input_count_mismatch(self, double_integrator):
        """Test that inputs and modes must agree."""
        with pytest.raises(TrajectoryError, match="Expected 3 inputs"):
            rollout(double_integrator, [0.0, 0.0], np.zeros((2, 1)), [0, 0, 0])

    def test_rollout_divergence(self):
        """Test that a non-finite state raises with the failing step."""
        with pytest.raises(DivergedRolloutError) as exc_info:
            rollout(ExplodingModel(), [1.0], np.zeros((5, 1)), [0] * 5)

        assert exc_info.value.step == 1

    def test_total_cost_includes_initial_state(self, double_integrator, linear_cost):
        """Test the running sum from k = 0 plus the terminal cost."""
        traj = rollout(double_integrator, [1.0, 0.0], [[0.0]], [0])

        expected = 1.0 + 10.0 * 1.0
        assert total_cost(traj, linear_cost) == pytest.approx(expected)

    def test_total_cost_dimension_mismatch(self, double_integrator, pushing_cost):
        """Test that a cost of another state size is rejected."""
        traj = rollout(double_integrator, [1.0, 0.0], [[0.0]], [0])

        with pytest.raises(TrajectoryError, match="State dimension"):
            total_cost(traj, pushing_cost)

    def test_total_cost_invariant_under_full_turns(self, pushing_model, pushing_cost):
        """Test that turning states and goal by 2 pi leaves the cost unchanged."""
        traj = rollout(
            pushing_model, [-0.1, 0.05, 0.3], np.tile([0.3, 0.05], (5, 1)), [0] * 5
        )
        states = np.array(traj.states)
        states[:, 2] += 2.0 * np.pi
        turned = Trajectory(states, traj.inputs, traj.modes, traj.dt)
        turned_cost = QuadraticCost(
            Q=pushing_cost.Q,
            R=pushing_cost.R,
            Q_N=pushing_cost.Q_N,
            goal=pushing_cost.goal + np.array([0.0, 0.0, 2.0 * np.pi]),
            angle_indices=pushing_cost.angle_indices,
        )

        base = total_cost(traj, pushing_cost)

        assert total_cost(turned, pushing_cost) == pytest.approx(base, rel=1e-9)
        assert total_cost(traj, turned_cost) == pytest.approx(base, rel=1e-9)
        assert total_cost(turned, turned_cost) == pytest.approx(base, rel=1e-9)


class TestJacobians:
    """Test cases for linearization helpers."""

    def test_finite_differences_on_linear_model(self, double_integrator):
        """Test that central differences recover A and B."""
        f_x, f_u = finite_difference_jacobians(
            double_integrator, np.array([0.3, -0.2]), np.array([0.5]), 0
        )

        np.testing.assert_allclose(f_x, double_integrator.A, atol=1e-8)
        np.testing.assert_allclose(f_u, double_integrator.B, atol=1e-8)

    def test_linearize_falls_back_to_finite_differences(self):
        """Test that models without analytic Jacobians are differenced."""
        model = ExplodingModel()
        f_x, f_u = linearize(model, np.array([0.0]), np.array([0.0]), 0)

        np.testing.assert_allclose(f_x, [[1e200]], rtol=1e-6)
        np.testing.assert_allclose(f_u, [[0.0]])

    def test_constraint_derivatives_by_finite_differences(self):
        """Test the state derivatives of A u - b and G u - h."""
        x = np.array([0.3, -0.7])

        C_ineq, C_eq = finite_difference_constraint_jacobians(
            MovingBoundModel(), x, np.array([0.5]), 0
        )

        np.testing.assert_allclose(C_ineq, [[-0.6, 0.0]], atol=1e-8)
        np.testing.assert_allclose(C_eq, [[0.0, -1.0]], atol=1e-8)

    def test_linearize_constraints_prefers_analytic(self, pushing_model):
        """Test that a model's own constraint derivatives are used."""
        x = np.array([0.1, -0.2, 0.4])
        u = np.array([0.3, 0.05])

        C_ineq, C_eq = linearize_constraints(pushing_model, x, u, 0)
        fd_ineq, fd_eq = finite_difference_constraint_jacobians(pushing_model, x, u, 0)

        assert C_ineq.shape == (4, 3)
        assert C_eq.shape == (0, 3)
        np.testing.assert_allclose(C_ineq, fd_ineq, atol=1e-8)


class TestStateDifference:
    """Test cases for wrapped state differences."""

    def test_wraps_across_pi(self, pushing_model):
        """Test that headings on either side of pi differ by a small angle."""
        x = np.array([0.2, 0.0, np.pi - 0.05])
        x_ref = np.array([0.1, 0.0, -np.pi + 0.05])

        dx = state_difference(pushing_model, x, x_ref)

        np.testing.assert_allclose(dx, [0.1, 0.0, -0.1], atol=1e-12)

    def test_models_without_angles(self, double_integrator):
        """Test a plain difference when no coordinate is an angle."""
        dx = state_difference(double_integrator, [7.0, 1.0], [0.0, 0.0])

        np.testing.assert_allclose(dx, [7.0, 1.0])
