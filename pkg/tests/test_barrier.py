"""
Tests for the barrier certificate filter
"""

import math
import os
import tempfile

import numpy as np
import pytest

from lib.barrier import (
    BENCHMARK_COLUMNS,
    MAX_NEIGHBORS,
    BarrierParams,
    FilterMode,
    FilterStatus,
    Workspace,
    apply_filter,
    benchmark_certificates,
    build_constraints,
    check_safe_start,
    control_point_params,
    dense_positions,
    filter_centralized,
    filter_decentralized,
    format_benchmark_table,
    h_pairwise,
    neighbor_lists,
    write_benchmark_csv,
)
from lib.errors import InvalidParameterError, UnsafeStartError
from lib.model import SwarmState


class TestBarrierParams:
    """Test parameter validation"""

    def test_defaults(self):
        """Test default values and derived boundary margin"""
        params = BarrierParams()
        assert params.ds == pytest.approx(0.08)
        assert params.gamma == pytest.approx(1.0)
        assert params.boundary_margin == pytest.approx(0.04)

    def test_invalid_values(self):
        """Test that non-positive values are rejected"""
        with pytest.raises(InvalidParameterError):
            BarrierParams(ds=0.0)
        with pytest.raises(InvalidParameterError):
            BarrierParams(gamma=-1.0)
        with pytest.raises(InvalidParameterError):
            BarrierParams(neighbor_radius=0.05)

    def test_to_dict_infinite_radius(self):
        """Test that an unbounded neighborhood serializes as None"""
        assert BarrierParams(neighbor_radius=math.inf).to_dict()['neighbor_radius'] is None

    def test_control_point_inflation(self):
        """Test the look-ahead point certificate parameters"""
        params = control_point_params(BarrierParams(), 0.05, 0.01)
        assert params.ds == pytest.approx(0.08 + 0.12)
        assert params.neighbor_radius == pytest.approx(0.20 + 0.12)
        assert params.boundary_margin == pytest.approx(0.04 + 0.06)

    def test_control_point_inflation_rejects_bad_lookahead(self):
        """Test lookahead validation"""
        with pytest.raises(InvalidParameterError):
            control_point_params(BarrierParams(), 0.0)


class TestWorkspace:
    """Test the arena rectangle"""

    def test_contains(self):
        """Test closed containment"""
        ws = Workspace()
        mask = ws.contains(np.array([[0.0, 0.0], [0.65, 0.45], [0.7, 0.0]]))
        assert mask.tolist() == [True, True, False]

    def test_too_small_for_ds(self):
        """Test validate() against ds"""
        with pytest.raises(InvalidParameterError):
            Workspace(-0.05, 0.05, -0.05, 0.05).validate(0.08)


class TestPairwiseBarrier:
    """Test h_ij"""

    def test_coincident(self):
        """Test coincident points give -ds^2"""
        assert h_pairwise([0.1, 0.1], [0.1, 0.1], 0.08) == pytest.approx(-0.0064)

    def test_at_ds(self):
        """Test the boundary of the safe set"""
        assert h_pairwise([0.0, 0.0], [0.08, 0.0], 0.08) == pytest.approx(0.0, abs=1e-15)

    def test_hand_value(self):
        """Test xi=(0,0), xj=(0.1,0), ds=0.08"""
        assert h_pairwise([0.0, 0.0], [0.1, 0.0], 0.08) == pytest.approx(0.0036)


class TestBuildConstraints:
    """Test constraint assembly"""

    def test_single_robot(self):
        """Test N=1 gives only the four boundary rows"""
        cs = build_constraints(np.array([[0.0, 0.0]]), BarrierParams(), Workspace())
        assert cs.n_pairwise == 0
        assert cs.n_boundary == 4
        assert cs.A.shape == (4, 2)

    def test_hand_row(self):
        """Test the displayed pairwise row for x1=(0,0), x2=(0.1,0)"""
        cs = build_constraints(np.array([[0.0, 0.0], [0.1, 0.0]]), BarrierParams(gamma=1.0), Workspace())
        assert cs.n_pairwise == 1
        assert cs.A[0] == pytest.approx([0.2, 0.0, -0.2, 0.0])
        assert cs.b[0] == pytest.approx(0.0036)
        assert cs.rows[0].robots == (0, 1)

    def test_neighborhood_pruning(self):
        """Test that far pairs get no row"""
        cs = build_constraints(np.array([[-0.3, 0.0], [0.3, 0.0]]), BarrierParams(), Workspace())
        assert cs.n_pairwise == 0

    def test_all_pairs_with_infinite_radius(self):
        """Test exactly N(N-1)/2 rows when neighbor_radius is infinite"""
        positions = np.array([[-0.4, 0.0], [0.0, 0.0], [0.4, 0.0], [0.0, 0.3]])
        cs = build_constraints(positions, BarrierParams(neighbor_radius=math.inf), Workspace())
        assert cs.n_pairwise == 6

    def test_unsafe_start_names_pair(self):
        """Test that a too-close pair raises with its indices"""
        positions = np.array([[0.0, 0.0], [0.3, 0.0], [0.03, 0.0]])
        with pytest.raises(UnsafeStartError) as exc_info:
            build_constraints(positions, BarrierParams(), Workspace())
        assert exc_info.value.pairs == [(0, 2)]

    def test_unsafe_start_outside(self):
        """Test that a robot outside the workspace is reported"""
        with pytest.raises(UnsafeStartError) as exc_info:
            check_safe_start(np.array([[0.0, 0.0], [1.0, 0.0]]), BarrierParams(), Workspace())
        assert exc_info.value.outside == [1]

    def test_non_strict_allows_restoring_rows(self):
        """Test that non-strict construction yields b < 0 for an overlapping pair"""
        cs = build_constraints(np.array([[0.0, 0.0], [0.05, 0.0]]), BarrierParams(), Workspace(), strict=False)
        assert cs.b[0] < 0

    def test_accepts_swarm_state(self):
        """Test that a SwarmState can be passed directly"""
        state = SwarmState(np.array([[0.0, 0.0, 0.0], [0.1, 0.0, 0.0]]))
        assert build_constraints(state, BarrierParams(), Workspace()).n_pairwise == 1


class TestCentralizedFilter:
    """Test the centralized QP filter"""

    def test_far_apart_passthrough(self):
        """Test that inactive certificates leave the request unchanged"""
        positions = np.array([[-0.3, 0.0], [0.3, 0.0]])
        desired = np.array([[0.05, 0.02], [-0.03, 0.01]])
        result = filter_centralized(positions, desired, BarrierParams(), Workspace())
        assert result.status is FilterStatus.OK
        assert result.commands == pytest.approx(desired)

    def test_head_on_at_ds(self):
        """Test that two robots at ds driving at each other are stopped"""
        positions = np.array([[-0.04, 0.0], [0.04, 0.0]])
        desired = np.array([[0.1, 0.0], [-0.1, 0.0]])
        result = filter_centralized(positions, desired, BarrierParams(), Workspace())
        assert result.commands == pytest.approx(np.zeros((2, 2)), abs=1e-9)

    def test_boundary_normal_removed(self):
        """Test a robot on the right margin heading out at 45 degrees"""
        params = BarrierParams()
        ws = Workspace()
        x = ws.xmax - params.boundary_margin
        result = filter_centralized(np.array([[x, 0.0]]), np.array([[0.05, 0.05]]), params, ws)
        assert result.commands[0, 0] == pytest.approx(0.0, abs=1e-9)
        assert result.commands[0, 1] == pytest.approx(0.05)

    def test_output_satisfies_constraints(self):
        """Test that the filtered command satisfies every row"""
        rng = np.random.default_rng(3)
        params = BarrierParams()
        positions = dense_positions(12, params, rng)
        ws = Workspace(-0.5, 0.5, -0.5, 0.5)
        desired = rng.uniform(-0.1, 0.1, size=(12, 2))
        result = filter_centralized(positions, desired, params, ws)
        cs = build_constraints(positions, params, ws)
        assert cs.satisfied_by(result.commands, tol=1e-8)
        assert np.all(np.abs(result.commands) <= params.alpha_bound + 1e-12)

    def test_emergency_stop_when_infeasible(self):
        """Test that an infeasible QP yields all-zero commands"""
        # overlapping pair squeezed between the walls: restoring rows cannot be met
        params = BarrierParams(gamma=50.0)
        ws = Workspace(-0.1, 0.1, -0.1, 0.1)
        positions = np.array([[-0.001, 0.0], [0.001, 0.0]])
        result = filter_centralized(positions, np.array([[0.1, 0.0], [-0.1, 0.0]]), params, ws, strict=False)
        assert result.status is FilterStatus.EMERGENCY_STOP
        assert result.commands == pytest.approx(np.zeros((2, 2)))
        assert result.message


class TestDecentralizedFilter:
    """Test per-agent filtering"""

    def test_inactive_passthrough(self):
        """Test u* = u_hat per agent when nothing is close"""
        positions = np.array([[-0.3, 0.0], [0.3, 0.0], [0.0, 0.3]])
        desired = np.array([[0.01, 0.0], [0.0, 0.02], [-0.02, -0.01]])
        result = filter_decentralized(positions, desired, BarrierParams(), Workspace())
        assert result.commands == pytest.approx(desired)

    def test_head_on_at_ds(self):
        """Test that each half-constraint forbids approach"""
        positions = np.array([[-0.04, 0.0], [0.04, 0.0]])
        desired = np.array([[0.1, 0.0], [-0.1, 0.0]])
        result = filter_decentralized(positions, desired, BarrierParams(), Workspace())
        assert result.commands == pytest.approx(np.zeros((2, 2)), abs=1e-9)

    def test_satisfies_centralized_rows(self):
        """Test that the half split implies the full certificate"""
        rng = np.random.default_rng(11)
        params = BarrierParams()
        ws = Workspace(-0.6, 0.6, -0.6, 0.6)
        for _ in range(5):
            positions = dense_positions(20, params, rng)
            desired = rng.uniform(-0.1, 0.1, size=(20, 2))
            result = filter_decentralized(positions, desired, params, ws)
            assert result.status is FilterStatus.OK
            cs = build_constraints(positions, params, ws)
            assert cs.satisfied_by(result.commands, tol=2e-8)

    def test_neighbor_count_bounded(self):
        """Test that dense states never give an agent more than 26 neighbors"""
        rng = np.random.default_rng(0)
        params = BarrierParams()
        for _ in range(3):
            positions = dense_positions(100, params, rng, spacing=params.ds)
            for nb in neighbor_lists(positions, params.neighbor_radius):
                assert len(nb) <= MAX_NEIGHBORS


class TestApplyFilter:
    """Test mode dispatch"""

    def test_off_passthrough(self):
        """Test that OFF returns a copy of the request"""
        desired = np.array([[0.3, 0.0]])
        result = apply_filter(FilterMode.OFF, np.array([[0.0, 0.0]]), desired, BarrierParams(), Workspace())
        assert result.commands == pytest.approx(desired)
        assert result.commands is not desired

    def test_modes_agree_when_inactive(self):
        """Test centralized and decentralized give the same passthrough"""
        positions = np.array([[-0.3, 0.0], [0.3, 0.0]])
        desired = np.array([[0.02, 0.0], [0.0, 0.02]])
        a = apply_filter(FilterMode.CENTRALIZED, positions, desired, BarrierParams(), Workspace())
        b = apply_filter(FilterMode.DECENTRALIZED, positions, desired, BarrierParams(), Workspace())
        assert a.commands == pytest.approx(b.commands)


class TestForwardInvariance:
    """Test that filtered single integrators never violate ds"""

    def test_random_goals_60_seconds(self):
        """Test min distance >= ds - 1e-3 over 60 s at 30 Hz"""
        params = BarrierParams()
        ws = Workspace()
        rng = np.random.default_rng(4)
        x = np.array([[-0.3, -0.2], [0.3, 0.2], [-0.3, 0.2], [0.3, -0.2], [0.0, 0.0]])
        goals = x[[1, 0, 3, 2, 4]]
        dt = 1.0 / 30.0
        worst = np.inf
        for _ in range(1800):
            desired = np.clip(goals - x + rng.normal(0.0, 0.01, x.shape), -0.1, 0.1)
            u = filter_centralized(x, desired, params, ws, strict=False).commands
            x = x + dt * u
            d = np.linalg.norm(x[:, None] - x[None, :], axis=2)
            worst = min(worst, d[np.triu_indices(5, 1)].min())
        assert worst >= params.ds - 1e-3
        assert np.all(ws.contains(x))


class TestBenchmark:
    """Test the certificate timing harness"""

    def test_structure(self):
        """Test one row per N and mode"""
        rows = benchmark_certificates([5, 10], FilterMode.CENTRALIZED, iters=2, seed=1)
        rows += benchmark_certificates([5, 10], FilterMode.DECENTRALIZED, iters=2, seed=1)
        assert [(r.n, r.mode) for r in rows] == [
            (5, 'centralized'), (10, 'centralized'), (5, 'decentralized'), (10, 'decentralized')
        ]
        for r in rows:
            assert r.ms_min <= r.ms_mean <= r.ms_max
            assert r.hz > 0

    def test_rejects_empty_and_off(self):
        """Test argument validation"""
        with pytest.raises(InvalidParameterError):
            benchmark_certificates([], FilterMode.CENTRALIZED)
        with pytest.raises(InvalidParameterError):
            benchmark_certificates([5], FilterMode.OFF)

    def test_dense_positions_are_safe(self):
        """Test that generated states respect ds"""
        params = BarrierParams()
        positions = dense_positions(40, params, np.random.default_rng(9))
        d = np.linalg.norm(positions[:, None] - positions[None, :], axis=2)
        assert d[np.triu_indices(40, 1)].min() >= params.ds

    def test_table_and_csv(self):
        """Test the text table and the CSV export"""
        rows = benchmark_certificates([4], FilterMode.CENTRALIZED, iters=1, seed=0)
        text = format_benchmark_table(rows)
        assert 'centralized' in text

        with tempfile.NamedTemporaryFile(mode='w', suffix='.csv', delete=False) as f:
            temp_path = f.name
        try:
            write_benchmark_csv(rows, temp_path, {'seed': 0, 'version': '1.0.0'})
            with open(temp_path) as f:
                lines = f.read().splitlines()
            assert lines[0] == '# seed: 0'
            assert lines[2] == ','.join(BENCHMARK_COLUMNS)
            assert lines[3].startswith('4,centralized,')
        finally:
            os.unlink(temp_path)
