"""
Tests for scenario loading and ScenarioChecker
"""

import json
import math
import os
import tempfile

import numpy as np
import pytest
import yaml

from lib.barrier import FilterMode, Workspace
from lib.controllers import ControllerKind
from lib.errors import ScenarioValidationError, SwarmGuardError
from lib.model import IDENTITY_COEFFICIENTS, CALIBRATED_COEFFICIENTS
from lib.scenario import (
    ScenarioChecker,
    ScenarioIssue,
    circle_poses,
    grid_poses,
    load_scenario,
    random_poses,
    scenario_from_dict,
)
from tests.scenario_factory import TEMPLATES_DIR, scenario_doc


class TestScenarioIssue:
    """Test ScenarioIssue"""

    def test_issue_creation(self):
        """Test creating a scenario issue"""
        issue = ScenarioIssue('error', 'barrier.ds', "must be positive")
        assert issue.severity == 'error'
        assert issue.field == 'barrier.ds'
        assert str(issue) == "[ERROR] barrier.ds: must be positive"
        assert issue.to_dict()['field'] == 'barrier.ds'


class TestPoseGenerators:
    """Test initial-pose layouts"""

    def test_circle(self):
        """Test even spacing on the circle with inward headings"""
        poses = circle_poses(4, 0.2)
        assert poses[0] == pytest.approx([0.2, 0.0, math.pi])
        assert poses[1][:2] == pytest.approx([0.0, 0.2], abs=1e-12)
        for p in poses:
            assert math.hypot(p[0], p[1]) == pytest.approx(0.2)

    def test_circle_tangent(self):
        """Test tangent headings point counter-clockwise"""
        poses = circle_poses(4, 0.2, heading='tangent')
        assert poses[0][2] == pytest.approx(math.pi / 2)

    def test_grid(self):
        """Test a centered row-major grid"""
        poses = grid_poses(4, 0.3, columns=2)
        assert [p[:2] for p in poses] == [
            pytest.approx([-0.15, 0.15]),
            pytest.approx([0.15, 0.15]),
            pytest.approx([-0.15, -0.15]),
            pytest.approx([0.15, -0.15]),
        ]

    def test_grid_default_columns(self):
        """Test ceil(sqrt(count)) columns"""
        poses = grid_poses(5, 0.2)
        assert sorted({round(p[0], 6) for p in poses}) == pytest.approx([-0.2, 0.0, 0.2])

    def test_random_separation(self):
        """Test that random poses respect separation and margin"""
        ws = Workspace()
        poses = np.array(random_poses(8, ws, min_separation=0.2, margin=0.1, seed=5))
        assert poses.shape == (8, 3)
        d = np.linalg.norm(poses[:, None, :2] - poses[None, :, :2], axis=2)
        assert d[np.triu_indices(8, k=1)].min() >= 0.2
        assert poses[:, 0].min() >= ws.xmin + 0.1
        assert poses[:, 1].max() <= ws.ymax - 0.1

    def test_random_deterministic(self):
        """Test that a seed reproduces the layout"""
        ws = Workspace()
        assert random_poses(5, ws, 0.2, 0.1, seed=9) == random_poses(5, ws, 0.2, 0.1, seed=9)

    def test_random_impossible(self):
        """Test that an overfull arena fails"""
        with pytest.raises(SwarmGuardError):
            random_poses(100, Workspace(), min_separation=0.5, margin=0.1, max_attempts=10)


class TestScenarioChecker:
    """Test ScenarioChecker class"""

    def test_checker_creation(self):
        """Test creating scenario checker"""
        checker = ScenarioChecker()
        assert len(checker.issues) == 0

    def test_valid_minimal_scenario(self):
        """Test checking a valid minimal scenario"""
        checker = ScenarioChecker()
        issues = checker.check(scenario_doc())
        assert [i for i in issues if i.severity == 'error'] == []
        assert checker.get_summary()['passed'] is True

    def test_missing_required_fields(self):
        """Test that every missing top-level field is reported at once"""
        doc = scenario_doc()
        del doc['duration']
        del doc['thresholds']
        issues = ScenarioChecker().check(doc)
        fields = {i.field for i in issues}
        assert 'duration' in fields
        assert 'thresholds' in fields

    def test_schema_errors_list_all_fields(self):
        """Test that several structural errors come back together with paths"""
        doc = scenario_doc(
            barrier={'mode': 'sideways', 'ds': -1},
            controller={'kind': 'teleport'},
        )
        issues = ScenarioChecker().check(doc)
        fields = {i.field for i in issues}
        assert {'barrier.mode', 'barrier.ds', 'controller.kind'} <= fields

    def test_unknown_section(self):
        """Test that unknown keys are rejected"""
        issues = ScenarioChecker().check(scenario_doc(speed_limit=3))
        assert any(i.severity == 'error' for i in issues)

    def test_coincident_robots(self):
        """Test that robots closer than ds are named by index"""
        doc = scenario_doc(robots={'layout': 'explicit', 'poses': [[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.3, 0.0, 0.0]]})
        issues = ScenarioChecker().check(doc)
        messages = [i.message for i in issues if i.severity == 'error']
        assert any("(0, 1)" in m for m in messages)

    def test_robot_outside_workspace(self):
        """Test that a robot outside the arena is reported with its index"""
        doc = scenario_doc(robots={'layout': 'explicit', 'poses': [[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]]})
        issues = ScenarioChecker().check(doc)
        assert 'robots.poses.1' in {i.field for i in issues}

    def test_duration_shorter_than_tick(self):
        """Test that duration must cover one tick"""
        issues = ScenarioChecker().check(scenario_doc(duration=0.01))
        assert 'duration' in {i.field for i in issues if i.severity == 'error'}

    def test_collision_radius_too_large(self):
        """Test that discs wider than ds are rejected"""
        issues = ScenarioChecker().check(scenario_doc(collision={'robot_radius': 0.05}))
        assert 'collision' in {i.field for i in issues}

    def test_workspace_too_small(self):
        """Test the arena size check"""
        doc = scenario_doc(workspace={'xmin': 0.0, 'xmax': 0.1, 'ymin': 0.0, 'ymax': 1.0})
        issues = ScenarioChecker().check(doc)
        assert 'workspace' in {i.field for i in issues}

    def test_bad_assignment(self):
        """Test that a non-permutation assignment is a controller error"""
        doc = scenario_doc(controller={'kind': 'position_swap', 'params': {'assignment': [0, 0]}})
        issues = ScenarioChecker().check(doc)
        assert 'controller.params' in {i.field for i in issues}

    def test_goal_outside_workspace(self):
        """Test that goals must lie in the arena"""
        doc = scenario_doc(controller={'kind': 'go_to_goal', 'params': {'goals': [[0.0, 0.0], [3.0, 0.0]]}})
        issues = ScenarioChecker().check(doc)
        assert 'controller.params.goals.1' in {i.field for i in issues}

    def test_swap_without_circulation_warns(self):
        """Test the deadlock warning"""
        doc = scenario_doc(controller={'kind': 'position_swap', 'params': {}})
        issues = ScenarioChecker().check(doc)
        warnings = [i for i in issues if i.severity == 'warning']
        assert any(i.field == 'controller.params.circulation' for i in warnings)
        assert not [i for i in issues if i.severity == 'error']

    def test_print_report(self, capsys):
        """Test the human-readable report"""
        checker = ScenarioChecker()
        checker.check(scenario_doc(duration=0.01))
        checker.print_report()
        out = capsys.readouterr().out
        assert "ERRORS" in out
        assert "duration" in out


class TestScenarioFromDict:
    """Test building ScenarioConfig"""

    def test_defaults(self):
        """Test the defaults filled in for a minimal document"""
        scenario = scenario_from_dict(scenario_doc())
        assert scenario.n == 2
        assert scenario.barrier_mode is FilterMode.OFF
        assert scenario.barrier.ds == pytest.approx(0.08)
        assert scenario.collision.robot_radius == pytest.approx(0.04)
        assert scenario.coefficients == CALIBRATED_COEFFICIENTS
        assert scenario.dt == pytest.approx(1.0 / 30.0)
        assert scenario.robots.virtual == [False, False]

    def test_named_coefficients(self):
        """Test the identity coefficient set"""
        scenario = scenario_from_dict(scenario_doc(coefficients='identity'))
        assert scenario.coefficients == IDENTITY_COEFFICIENTS

    def test_infinite_neighbor_radius(self):
        """Test that null and 'inf' keep every pair"""
        for value in (None, 'inf'):
            scenario = scenario_from_dict(scenario_doc(barrier={'mode': 'centralized', 'neighbor_radius': value}))
            assert math.isinf(scenario.barrier.neighbor_radius)

    def test_invalid_raises_with_all_issues(self):
        """Test ScenarioValidationError carries every error"""
        doc = scenario_doc(duration=-1, barrier={'mode': 'sideways'})
        with pytest.raises(ScenarioValidationError) as exc_info:
            scenario_from_dict(doc)
        data = exc_info.value.to_dict()
        assert data['error'] == 'scenario_invalid'
        fields = {i['field'] for i in data['issues']}
        assert {'duration', 'barrier.mode'} <= fields

    def test_hash_stable_under_round_trip(self):
        """Test that the canonical form rebuilds the same scenario"""
        scenario = scenario_from_dict(scenario_doc(
            robots={'layout': 'circle', 'count': 6, 'radius': 0.3},
            controller={'kind': 'position_swap', 'params': {'circulation': 0.5}},
            barrier={'mode': 'centralized'},
        ))
        rebuilt = scenario_from_dict(scenario.to_dict())
        assert rebuilt.config_hash() == scenario.config_hash()

    def test_hash_changes_with_content(self):
        """Test that editing the document changes the hash"""
        a = scenario_from_dict(scenario_doc())
        b = scenario_from_dict(scenario_doc(duration=3.0))
        assert a.config_hash() != b.config_hash()
        assert len(a.config_hash()) == 64

    def test_layout_recorded(self):
        """Test that the generated layout is kept for reference"""
        scenario = scenario_from_dict(scenario_doc(robots={'layout': 'grid', 'count': 4, 'spacing': 0.3}))
        assert scenario.robots.layout['layout'] == 'grid'
        assert scenario.n == 4


class TestLoadScenario:
    """Test loading scenario files"""

    def test_load_yaml(self):
        """Test loading a YAML scenario"""
        with tempfile.NamedTemporaryFile(mode='w', suffix='.yaml', delete=False) as f:
            yaml.dump(scenario_doc(name='from-yaml'), f)
            temp_path = f.name

        try:
            scenario = load_scenario(temp_path)
            assert scenario.name == 'from-yaml'
        finally:
            os.unlink(temp_path)

    def test_load_json(self):
        """Test loading a JSON scenario"""
        with tempfile.NamedTemporaryFile(mode='w', suffix='.json', delete=False) as f:
            json.dump(scenario_doc(name='from-json'), f)
            temp_path = f.name

        try:
            scenario = load_scenario(temp_path)
            assert scenario.name == 'from-json'
        finally:
            os.unlink(temp_path)

    def test_load_toml(self):
        """Test that the TOML swap template resolves to the YAML one"""
        from_toml = load_scenario(str(TEMPLATES_DIR / "swap10.toml"))
        from_yaml = load_scenario(str(TEMPLATES_DIR / "swap10.yaml"))
        assert from_toml.n == 10
        assert from_toml.config_hash() == from_yaml.config_hash()

    def test_malformed_toml(self):
        """Test that a TOML syntax error is a ValueError"""
        with tempfile.NamedTemporaryFile(mode='w', suffix='.toml', delete=False) as f:
            f.write("name = \n")
            temp_path = f.name

        try:
            with pytest.raises(ValueError):
                load_scenario(temp_path)
        finally:
            os.unlink(temp_path)

    def test_unsupported_suffix(self):
        """Test that other file types are rejected"""
        with tempfile.NamedTemporaryFile(mode='w', suffix='.ini', delete=False) as f:
            f.write("[scenario]\nname = x\n")
            temp_path = f.name

        try:
            with pytest.raises(ValueError):
                load_scenario(temp_path)
        finally:
            os.unlink(temp_path)

    def test_check_file(self):
        """Test ScenarioChecker.check_file"""
        with tempfile.NamedTemporaryFile(mode='w', suffix='.yml', delete=False) as f:
            yaml.dump(scenario_doc(duration=0.01), f)
            temp_path = f.name

        try:
            issues = ScenarioChecker().check_file(temp_path)
            assert any(i.field == 'duration' for i in issues)
        finally:
            os.unlink(temp_path)

    @pytest.mark.parametrize("name", [
        "swap10", "headon_crash", "static_safe", "consensus6", "formation6", "waypoint_track",
    ])
    def test_templates_load(self, name):
        """Test that every shipped template validates"""
        scenario = load_scenario(str(TEMPLATES_DIR / f"{name}.yaml"))
        assert scenario.name == name
        assert scenario.n >= 2

    def test_swap_template(self):
        """Test the swap template's resolved configuration"""
        scenario = load_scenario(str(TEMPLATES_DIR / "swap10.yaml"))
        assert scenario.n == 10
        assert scenario.controller.kind is ControllerKind.POSITION_SWAP
        assert scenario.barrier_mode is FilterMode.CENTRALIZED
        assert scenario.outputs.trajectory == 'swap10-trajectory.csv'
