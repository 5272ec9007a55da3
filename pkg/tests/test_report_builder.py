"""
Tests for SafetyReportBuilder module
"""

import json
import os
import tempfile
from pathlib import Path

import pytest
from jsonschema import Draft7Validator

from lib.barrier import FilterMode
from lib.report_builder import SafetyReportBuilder
from lib.simulator import run, summarize
from lib.verification import SafetyThresholds, verify
from tests.scenario_factory import template

REPORT_SCHEMA = Path(__file__).resolve().parent.parent / "schemas" / "safety-report.json"


@pytest.fixture(scope="module")
def passing_report():
    return verify(template('static_safe'), thresholds=SafetyThresholds(0.004, 0.001, runs=3))


@pytest.fixture(scope="module")
def failing_report():
    return verify(template('headon_crash'), thresholds=SafetyThresholds(0.0002, 0.0001, runs=2))


def _validator():
    with open(REPORT_SCHEMA) as f:
        return Draft7Validator(json.load(f))


class TestReportBuilderBasics:
    """Test basic report builder functionality"""

    def test_builder_creation(self):
        """Test creating report builder"""
        builder = SafetyReportBuilder()
        assert builder.report is None
        assert builder.requested_mode is FilterMode.OFF
        assert builder.manual_notes == []

    def test_add_note(self):
        """Test adding manual notes"""
        builder = SafetyReportBuilder()
        builder.add_note("First note")
        builder.add_note("Second note")

        assert len(builder.manual_notes) == 2
        assert "First note" in builder.manual_notes

    def test_empty_report(self):
        """Test that a builder without results asks for verification"""
        markdown = SafetyReportBuilder().build_markdown()
        assert "No verification results." in markdown
        assert "Run verification before deploying" in markdown


class TestMarkdownReport:
    """Test the human-readable report"""

    def test_passing_report(self, passing_report):
        """Test the sections of a passing report"""
        builder = SafetyReportBuilder()
        builder.set_report(passing_report)
        markdown = builder.build_markdown()

        assert "# Safety Report: static_safe" in markdown
        assert "pass-unfiltered" in markdown
        assert "## Per-Run Scores" in markdown
        assert "may run without barrier certificates" in markdown
        assert passing_report.header['config_hash'] in markdown
        assert "## Diagnostics" not in markdown

    def test_failing_report(self, failing_report):
        """Test diagnostics and the enforced filter in a failing report"""
        builder = SafetyReportBuilder()
        builder.set_report(failing_report, FilterMode.OFF)
        markdown = builder.build_markdown()

        assert "fail-requires-barriers" in markdown
        assert "## Diagnostics" in markdown
        assert "deploy with the centralized filter" in markdown

    def test_worst_runs_table(self, failing_report):
        """Test that the table lists at most worst_runs_shown runs"""
        builder = SafetyReportBuilder()
        builder.worst_runs_shown = 1
        builder.set_report(failing_report)
        markdown = builder.build_markdown()
        assert "Worst 1 of 2 runs:" in markdown

    def test_nominal_run_and_notes(self, passing_report):
        """Test the nominal run section and manual notes"""
        builder = SafetyReportBuilder()
        builder.set_report(passing_report)
        builder.set_run_summary(summarize(run(template('static_safe'))))
        builder.add_note("Checked on the bench")
        markdown = builder.build_markdown()

        assert "## Nominal Run" in markdown
        assert "Contact ticks: 0" in markdown
        assert "## Additional Notes" in markdown
        assert "Checked on the bench" in markdown


class TestJsonReport:
    """Test the machine-readable report"""

    def test_build_dict_matches_schema(self, passing_report):
        """Test that the JSON document validates against the report schema"""
        builder = SafetyReportBuilder()
        builder.set_report(passing_report)
        builder.set_run_summary(summarize(run(template('static_safe'))))
        builder.add_note("note")
        data = builder.build_dict()

        errors = list(_validator().iter_errors(data))
        assert errors == []
        assert data['deployment_mode'] == 'off'
        assert data['notes'] == ["note"]
        assert data['nominal_run']['contact_ticks'] == 0

    def test_failing_dict_matches_schema(self, failing_report):
        """Test the schema on a failing report with negative scores"""
        builder = SafetyReportBuilder()
        builder.set_report(failing_report, FilterMode.OFF)
        data = builder.build_dict()

        assert list(_validator().iter_errors(data)) == []
        assert data['verdict'] == 'fail-requires-barriers'
        assert data['deployment_mode'] == 'centralized'

    def test_dict_is_reproducible(self, passing_report):
        """Test that the JSON document carries no timestamp"""
        builder = SafetyReportBuilder()
        builder.set_report(passing_report)
        assert json.dumps(builder.build_dict()) == json.dumps(builder.build_dict())
        assert 'generated' not in builder.build_dict()


class TestSaveReport:
    """Test saving reports to files"""

    def test_save_markdown(self, passing_report):
        """Test saving Markdown report"""
        builder = SafetyReportBuilder()
        builder.set_report(passing_report)

        with tempfile.NamedTemporaryFile(mode='w', suffix='.md', delete=False) as f:
            temp_path = f.name

        try:
            builder.save_markdown(temp_path)
            with open(temp_path, 'r') as f:
                content = f.read()
            assert "# Safety Report" in content
        finally:
            os.unlink(temp_path)

    def test_save_json(self, passing_report):
        """Test saving JSON report"""
        builder = SafetyReportBuilder()
        builder.set_report(passing_report)

        with tempfile.NamedTemporaryFile(mode='w', suffix='.json', delete=False) as f:
            temp_path = f.name

        try:
            builder.save_json(temp_path)
            with open(temp_path, 'r') as f:
                data = json.load(f)
            assert data['scenario'] == 'static_safe'
            assert data['verdict'] == 'pass-unfiltered'
        finally:
            os.unlink(temp_path)
