"""
Tests for the dense QP solver module.

This module covers solve_qp on small problems with known optima, KKT
certification on random problems, infeasibility reporting, and the
closed-form and generic projections used by the forward pass.
"""

import itertools

import numpy as np
import pytest

from hybrid_ddp.primitives import friction_cone_rows
from hybrid_ddp.qp_solver import (
    ConeRegion,
    InfeasibleConstraintsError,
    InputConstraintSet,
    QPError,
    QPStatus,
    QuadraticProgram,
    check_feasible,
    kkt_residuals,
    project_feasible,
    solve_qp,
)


def _cone_set(mu=0.3, n_max=0.5, tagged=True):
    A, b = friction_cone_rows(2, 0, 1, mu, n_max)
    regions = (ConeRegion(0, 1, mu, n_max),) if tagged else ()
    return InputConstraintSet(
        A=A, b=b, G=np.zeros((0, 2)), h=np.zeros(0), regions=regions
    )


def _enumerated_optimum(qp):
    """Lowest objective over every working set that passes the KKT conditions."""
    n = qp.H.shape[0]
    p, q = qp.A_ineq.shape[0], qp.A_eq.shape[0]
    best = np.inf
    for size in range(min(p, n - q) + 1):
        for rows in itertools.combinations(range(p), size):
            E = np.vstack([qp.A_ineq[list(rows)], qp.A_eq])
            e = np.concatenate([qp.b_ineq[list(rows)], qp.b_eq])
            if E.shape[0] and np.linalg.matrix_rank(E) < E.shape[0]:
                continue
            k = E.shape[0]
            kkt = np.block([[qp.H, -E.T], [E, np.zeros((k, k))]])
            solution = np.linalg.solve(kkt, np.concatenate([-qp.g, e]))
            z, multipliers = solution[:n], solution[n : n + size]
            if np.all(qp.A_ineq @ z >= qp.b_ineq - 1e-9) and np.all(
                multipliers >= -1e-9
            ):
                best = min(best, qp.objective(z))
    return best


class TestQuadraticProgram:
    """Test cases for problem construction."""

    def test_missing_blocks_default_to_empty(self):
        """Test that omitted constraint blocks become zero-row matrices."""
        qp = QuadraticProgram(H=np.eye(3), g=np.zeros(3))

        assert qp.n_vars == 3
        assert qp.n_ineq == 0
        assert qp.n_eq == 0
        assert qp.A_ineq.shape == (0, 3)

    def test_shape_mismatch(self):
        """Test that a Hessian of the wrong size is rejected."""
        with pytest.raises(QPError, match="Hessian shape"):
            QuadraticProgram(H=np.eye(2), g=np.zeros(3))

    def test_objective(self):
        """Test objective evaluation."""
        qp = QuadraticProgram(H=2.0 * np.eye(2), g=np.array([1.0, -1.0]))

        assert qp.objective(np.array([1.0, 2.0])) == pytest.approx(5.0 - 1.0)


class TestSolveQP:
    """Test cases for solve_qp on problems with known solutions."""

    def test_unconstrained(self):
        """Test the unconstrained minimizer -H^-1 g."""
        qp = QuadraticProgram(H=np.diag([2.0, 4.0]), g=np.array([-2.0, -4.0]))

        solution = solve_qp(qp)

        assert solution.optimal
        np.testing.assert_allclose(solution.z, [1.0, 1.0])
        assert solution.active_set == ()

    def test_active_upper_bound(self):
        """Test that a binding bound is reported with a positive multiplier."""
        qp = QuadraticProgram(
            H=np.array([[2.0]]),
            g=np.array([-4.0]),
            A_ineq=np.array([[-1.0]]),
            b_ineq=np.array([-1.0]),
        )

        solution = solve_qp(qp)

        assert solution.status is QPStatus.OPTIMAL
        np.testing.assert_allclose(solution.z, [1.0], atol=1e-10)
        assert solution.active_set == (0,)
        np.testing.assert_allclose(solution.multipliers, [2.0], atol=1e-8)

    def test_equality_constraint(self):
        """Test the minimum-norm point on z1 + z2 = 1."""
        qp = QuadraticProgram(
            H=2.0 * np.eye(2),
            g=np.zeros(2),
            A_eq=np.array([[1.0, 1.0]]),
            b_eq=np.array([1.0]),
        )

        solution = solve_qp(qp)

        assert solution.optimal
        np.testing.assert_allclose(solution.z, [0.5, 0.5], atol=1e-10)
        np.testing.assert_allclose(solution.eq_multipliers, [1.0], atol=1e-8)

    def test_equality_and_inequality(self):
        """Test a bound that binds on the equality manifold."""
        qp = QuadraticProgram(
            H=2.0 * np.eye(2),
            g=np.zeros(2),
            A_ineq=np.array([[1.0, 0.0]]),
            b_ineq=np.array([0.8]),
            A_eq=np.array([[1.0, 1.0]]),
            b_eq=np.array([1.0]),
        )

        solution = solve_qp(qp)

        assert solution.optimal
        np.testing.assert_allclose(solution.z, [0.8, 0.2], atol=1e-9)
        assert solution.active_set == (0,)

    def test_infeasible_inequalities(self):
        """Test that z >= 1 and z <= 0 is reported infeasible."""
        qp = QuadraticProgram(
            H=np.eye(1),
            g=np.zeros(1),
            A_ineq=np.array([[1.0], [-1.0]]),
            b_ineq=np.array([1.0, 0.0]),
        )

        solution = solve_qp(qp)

        assert solution.status is QPStatus.INFEASIBLE
        assert not solution.optimal

    def test_inconsistent_equalities(self):
        """Test that contradictory equality rows are reported infeasible."""
        qp = QuadraticProgram(
            H=np.eye(2),
            g=np.zeros(2),
            A_eq=np.array([[1.0, 0.0], [1.0, 0.0]]),
            b_eq=np.array([0.0, 1.0]),
        )

        assert solve_qp(qp).status is QPStatus.INFEASIBLE

    def test_duplicate_rows_pick_lowest_index(self):
        """Test that the lowest-index duplicate row enters the working set."""
        qp = QuadraticProgram(
            H=np.array([[2.0]]),
            g=np.zeros(1),
            A_ineq=np.array([[1.0], [1.0]]),
            b_ineq=np.array([1.0, 1.0]),
        )

        solution = solve_qp(qp)

        assert solution.optimal
        np.testing.assert_allclose(solution.z, [1.0], atol=1e-9)
        assert solution.active_set == (0,)

    def test_feasible_start_is_used(self):
        """Test that a feasible z_start yields the same optimum."""
        qp = QuadraticProgram(
            H=np.eye(2),
            g=np.array([-2.0, 0.0]),
            A_ineq=np.array([[-1.0, 0.0]]),
            b_ineq=np.array([-1.0]),
        )

        solution = solve_qp(qp, z_start=np.array([0.5, 0.0]))

        assert solution.optimal
        np.testing.assert_allclose(solution.z, [1.0, 0.0], atol=1e-9)

    def test_indefinite_hessian(self):
        """Test that an indefinite Hessian raises QPError."""
        qp = QuadraticProgram(H=np.diag([1.0, -1.0]), g=np.zeros(2))

        with pytest.raises(QPError, match="positive definite"):
            solve_qp(qp)

    def test_asymmetric_hessian(self):
        """Test that a non-symmetric Hessian raises QPError."""
        qp = QuadraticProgram(H=np.array([[1.0, 0.5], [0.0, 1.0]]), g=np.zeros(2))

        with pytest.raises(QPError, match="symmetric"):
            solve_qp(qp)

    @pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
    def test_random_problems_satisfy_kkt(self, seed):
        """Test KKT residuals on random convex problems with a feasible origin."""
        rng = np.random.default_rng(seed)
        M = rng.normal(size=(4, 4))
        H = M @ M.T + 0.5 * np.eye(4)
        g = rng.normal(size=4) * 5.0
        A = rng.normal(size=(6, 4))
        b = -rng.uniform(0.1, 1.0, size=6)
        A_eq = rng.normal(size=(1, 4))
        qp = QuadraticProgram(H=H, g=g, A_ineq=A, b_ineq=b, A_eq=A_eq, b_eq=np.zeros(1))

        solution = solve_qp(qp)
        residuals = kkt_residuals(qp, solution)

        assert solution.optimal
        assert residuals["stationarity"] < 1e-7
        assert residuals["primal_ineq"] < 1e-8
        assert residuals["primal_eq"] < 1e-8
        assert residuals["dual"] < 1e-7
        assert residuals["complementarity"] < 1e-7

    def test_random_problem_beats_feasible_samples(self):
        """Test that no sampled feasible point has a lower objective."""
        rng = np.random.default_rng(42)
        H = np.diag([1.0, 3.0])
        g = np.array([-4.0, 2.0])
        A, b = friction_cone_rows(2, 0, 1, 0.5, 1.0)
        qp = QuadraticProgram(H=H, g=g, A_ineq=A, b_ineq=b)

        best = qp.objective(solve_qp(qp).z)
        samples = rng.uniform([-0.5, -1.0], [1.5, 1.0], size=(2000, 2))
        feasible = [z for z in samples if np.all(A @ z >= b)]

        assert feasible
        assert all(qp.objective(z) >= best - 1e-9 for z in feasible)

    def test_matches_active_set_enumeration(self):
        """Test objective values against every candidate working set."""
        rng = np.random.default_rng(2024)
        for _ in range(1000):
            n = int(rng.integers(1, 4))
            p = int(rng.integers(1, 7))
            q = int(rng.integers(0, n))
            M = rng.normal(size=(n, n))
            qp = QuadraticProgram(
                H=M @ M.T + 0.1 * np.eye(n),
                g=rng.normal(size=n) * 3.0,
                A_ineq=rng.normal(size=(p, n)),
                b_ineq=-rng.uniform(0.0, 1.0, size=p),
                A_eq=rng.normal(size=(q, n)),
                b_eq=np.zeros(q),
            )

            solution = solve_qp(qp)

            assert solution.optimal
            assert qp.objective(solution.z) == pytest.approx(
                _enumerated_optimum(qp), abs=1e-7
            )


class TestInputConstraintSet:
    """Test cases for InputConstraintSet."""

    def test_unconstrained(self):
        """Test the empty constraint set."""
        cons = InputConstraintSet.unconstrained(3)

        assert cons.input_dim == 3
        assert cons.A.shape == (0, 3)
        assert not cons.closed_form

    def test_row_mismatch(self):
        """Test that A and b must have the same number of rows."""
        with pytest.raises(QPError, match="Inequality rows mismatch"):
            InputConstraintSet(
                A=np.eye(2), b=np.zeros(3), G=np.zeros((0, 2)), h=np.zeros(0)
            )

    def test_arrays_are_read_only(self):
        """Test that constraint arrays cannot be modified."""
        cons = _cone_set()

        with pytest.raises(ValueError):
            cons.A[0, 0] = 5.0

    def test_with_equalities_drops_regions(self):
        """Test that appending equalities disables the closed form."""
        cons = _cone_set()
        extended = cons.with_equalities(np.array([[0.0, 1.0]]), [0.0])

        assert cons.closed_form
        assert not extended.closed_form
        assert extended.G.shape == (1, 2)

    def test_check_feasible(self):
        """Test the feasibility check with tolerance."""
        cons = _cone_set()

        assert check_feasible(cons, np.array([0.4, 0.1]), 1e-9)
        assert not check_feasible(cons, np.array([0.4, 0.2]), 1e-9)
        assert check_feasible(cons, np.array([0.5 + 1e-10, 0.0]), 1e-9)


class TestProjectFeasible:
    """Test cases for project_feasible."""

    def test_feasible_input_returned_unchanged(self):
        """Test that a feasible input comes back as an equal copy."""
        u = np.array([0.2, 0.05])

        projected = project_feasible(u, _cone_set())

        np.testing.assert_array_equal(projected, u)
        assert projected is not u

    def test_negative_normal_projects_to_apex(self):
        """Test that pulling forces project onto the cone apex."""
        projected = project_feasible(np.array([-1.0, 0.0]), _cone_set())

        np.testing.assert_allclose(projected, [0.0, 0.0], atol=1e-12)

    def test_projection_onto_cone_edge(self):
        """Test projection of an over-tangential force onto the friction edge."""
        projected = project_feasible(np.array([0.2, 0.5]), _cone_set())

        t = 0.175 / 0.2725
        np.testing.assert_allclose(projected, [0.5 * t, 0.15 * t], atol=1e-12)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_closed_form_matches_qp(self, seed):
        """Test that the closed-form cone projection agrees with the QP projection."""
        rng = np.random.default_rng(seed)
        tagged, generic = _cone_set(), _cone_set(tagged=False)

        for u in rng.uniform(-1.0, 1.0, size=(50, 2)):
            np.testing.assert_allclose(
                project_feasible(u, tagged), project_feasible(u, generic), atol=1e-8
            )

    def test_projection_with_equalities(self):
        """Test a generic projection onto a cone intersected with a line."""
        cons = _cone_set().with_equalities(np.array([[0.0, 1.0]]), [0.1])

        projected = project_feasible(np.array([0.0, 0.0]), cons)

        np.testing.assert_allclose(projected, [1.0 / 3.0, 0.1], atol=1e-9)

    def test_empty_set_raises(self):
        """Test that projecting onto an empty set raises."""
        cons = InputConstraintSet(
            A=np.array([[1.0], [-1.0]]),
            b=np.array([1.0, 0.0]),
            G=np.zeros((0, 1)),
            h=np.zeros(0),
        )

        with pytest.raises(InfeasibleConstraintsError):
            project_feasible(np.array([0.5]), cons)
