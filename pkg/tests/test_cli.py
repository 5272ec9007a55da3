"""
Tests for the swarmguard command line
"""

import json

import numpy as np
import pytest
import yaml

from lib.cli import EXIT_GATE_FAILED, EXIT_INTERNAL, EXIT_OK, EXIT_USAGE, main
from lib.trajectory_io import REQUIRED_COLUMNS
from tests.scenario_factory import TEMPLATES_DIR, scenario_doc

STATIC = str(TEMPLATES_DIR / "static_safe.yaml")
HEADON = str(TEMPLATES_DIR / "headon_crash.yaml")


@pytest.fixture(autouse=True)
def quiet_logging(monkeypatch):
    monkeypatch.setenv("SWARMGUARD_LOG_LEVEL", "CRITICAL")


def _stderr_json(capsys):
    err = capsys.readouterr().err
    return json.loads(err[err.index('{'):])


class TestUsage:
    """Test argument handling"""

    def test_no_command(self):
        """Test that a missing subcommand is a usage error"""
        assert main([]) == EXIT_USAGE

    def test_unknown_command(self):
        """Test that an unknown subcommand is a usage error"""
        assert main(['teleport']) == EXIT_USAGE

    def test_version(self, capsys):
        """Test --version"""
        assert main(['--version']) == EXIT_OK
        assert "swarmguard" in capsys.readouterr().out


class TestSimulate:
    """Test the simulate command"""

    def test_writes_trajectory_and_summary(self, tmp_path, capsys):
        """Test a successful run and its artifacts"""
        out = tmp_path / "traj.csv"
        summary = tmp_path / "summary.json"
        plot = tmp_path / "plot.csv"
        code = main(['simulate', STATIC, '--out', str(out), '--summary', str(summary), '--plot', str(plot)])
        assert code == EXIT_OK
        assert out.exists() and plot.exists()
        data = json.loads(summary.read_text())
        assert data['scenario'] == 'static_safe'
        assert data['summary']['contact_ticks'] == 0
        assert len(data['header']['config_hash']) == 64
        assert "static_safe" in capsys.readouterr().out

    def test_seed_reproduces(self, tmp_path):
        """Test that the same --seed writes identical logs"""
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(['simulate', HEADON, '--seed', '5', '--duration', '1', '--out', str(a)]) == EXIT_OK
        assert main(['simulate', HEADON, '--seed', '5', '--duration', '1', '--out', str(b)]) == EXIT_OK
        assert a.read_text() == b.read_text()

    def test_seed_is_recorded(self, tmp_path):
        """Test that the override seed lands in the log header"""
        out = tmp_path / "t.csv"
        main(['simulate', HEADON, '--seed', '9', '--duration', '0.5', '--out', str(out)])
        assert "# seed: 9" in out.read_text().splitlines()

    def test_toml_scenario(self, tmp_path):
        """Test that the TOML swap template runs like the YAML one"""
        summary = tmp_path / "summary.json"
        code = main(['simulate', str(TEMPLATES_DIR / "swap10.toml"), '--duration', '10',
                     '--out', str(tmp_path / "swap.csv"), '--summary', str(summary)])
        assert code == EXIT_OK
        data = json.loads(summary.read_text())
        assert data['scenario'] == 'swap10'
        assert data['summary']['min_distance'] >= 0.079
        assert data['summary']['contact_ticks'] == 0

    def test_invalid_scenario(self, tmp_path, capsys):
        """Test exit 2 with a JSON error document listing the fields"""
        path = tmp_path / "bad.yaml"
        path.write_text(yaml.dump(scenario_doc(duration=-1, barrier={'mode': 'sideways'})))
        assert main(['simulate', str(path)]) == EXIT_USAGE
        document = _stderr_json(capsys)
        assert document['error'] == 'scenario_invalid'
        fields = {i['field'] for i in document['issues']}
        assert {'duration', 'barrier.mode'} <= fields

    def test_missing_file(self, tmp_path, capsys):
        """Test that an unreadable scenario is a usage error"""
        assert main(['simulate', str(tmp_path / "nope.yaml")]) == EXIT_USAGE
        assert _stderr_json(capsys)['error'] == 'invalid_input'

    def test_aborted_run(self, tmp_path, monkeypatch, capsys):
        """Test that an aborted run exits 3"""
        calls = {'n': 0}

        def failing(self, poses, points, state):
            calls['n'] += 1
            if calls['n'] > 3:
                raise RuntimeError("boom")
            return np.zeros((self.n, 2)), state

        monkeypatch.setattr("lib.simulator.Controller.__call__", failing)
        assert main(['simulate', STATIC, '--out', str(tmp_path / "t.csv")]) == EXIT_INTERNAL
        assert _stderr_json(capsys)['error'] == 'run_aborted'

    def test_internal_error(self, tmp_path, monkeypatch, capsys):
        """Test that unexpected exceptions exit 3"""
        def explode(*args, **kwargs):
            raise RuntimeError("unexpected")

        monkeypatch.setattr("lib.cli.run", explode)
        assert main(['simulate', STATIC, '--out', str(tmp_path / "t.csv")]) == EXIT_INTERNAL
        assert _stderr_json(capsys)['error'] == 'internal'


class TestVerify:
    """Test the verify command"""

    def test_pass(self, tmp_path, capsys):
        """Test exit 0 and both report formats for a safe scenario"""
        report = tmp_path / "report.json"
        markdown = tmp_path / "report.md"
        code = main(['verify', STATIC, '--runs', '2', '--report', str(report), '--markdown', str(markdown)])
        assert code == EXIT_OK
        data = json.loads(report.read_text())
        assert data['verdict'] == 'pass-unfiltered'
        assert len(data['runs']) == 2
        assert "# Safety Report: static_safe" in markdown.read_text()
        assert "pass-unfiltered" in capsys.readouterr().out

    def test_fail(self, tmp_path):
        """Test exit 1 and the enforced deployment mode"""
        report = tmp_path / "report.json"
        assert main(['verify', HEADON, '--runs', '2', '--report', str(report)]) == EXIT_GATE_FAILED
        data = json.loads(report.read_text())
        assert data['verdict'] == 'fail-requires-barriers'
        assert data['deployment_mode'] == 'centralized'

    def test_filter_override_passes(self, tmp_path):
        """Test that --filter changes only the rollout mode"""
        report = tmp_path / "report.json"
        code = main(['verify', HEADON, '--runs', '2', '--filter', 'centralized', '--report', str(report)])
        assert code == EXIT_OK
        data = json.loads(report.read_text())
        assert data['filter_mode'] == 'centralized'
        assert data['deployment_mode'] == 'off'

    def test_nominal_run(self, tmp_path):
        """Test that --nominal adds the nominal run summary"""
        report = tmp_path / "report.json"
        main(['verify', STATIC, '--runs', '1', '--nominal', '--report', str(report)])
        data = json.loads(report.read_text())
        assert data['nominal_run']['contact_ticks'] == 0

    def test_seed_changes_master_seed(self, tmp_path):
        """Test that --seed sets the master seed of the campaign"""
        report = tmp_path / "report.json"
        main(['verify', STATIC, '--runs', '1', '--seed', '42', '--report', str(report)])
        assert json.loads(report.read_text())['master_seed'] == 42


class TestBenchmark:
    """Test the benchmark command"""

    def test_rows_and_csv(self, tmp_path, capsys):
        """Test one row per (mode, n) and the CSV header block"""
        out = tmp_path / "timing.csv"
        assert main(['benchmark', '--n', '4,8,12', '--iters', '2', '--out', str(out)]) == EXIT_OK
        lines = out.read_text().splitlines()
        assert "# seed: 0" in lines
        body = [line for line in lines if not line.startswith('#')]
        assert body[0] == "n,mode,ms_mean,ms_p95,ms_min,ms_max,hz"
        assert len(body) == 1 + 6
        assert "Wrote 6 rows" in capsys.readouterr().out

    def test_bad_n(self, capsys):
        """Test that malformed robot counts are a usage error"""
        assert main(['benchmark', '--n', 'ten']) == EXIT_USAGE
        assert _stderr_json(capsys)['error'] == 'invalid_input'


class TestSysid:
    """Test the sysid command"""

    def test_synthetic(self, tmp_path, capsys):
        """Test recovery of the default coefficients from synthetic data"""
        out = tmp_path / "coefficients.json"
        assert main(['sysid', '--synthetic', '--out', str(out)]) == EXIT_OK
        data = json.loads(out.read_text())
        assert data['alpha1'] == pytest.approx(0.8645, rel=0.01)
        assert data['alpha2'] == pytest.approx(0.8119, rel=0.01)
        assert data['alpha3'] == pytest.approx(0.4640, rel=0.01)
        assert data['header']['source'] == 'synthetic'
        assert "alpha1 = " in capsys.readouterr().out

    def test_from_log(self, tmp_path, capsys):
        """Test fitting a simulated log recovers the coefficients it ran with"""
        log = tmp_path / "run.csv"
        doc = scenario_doc(
            robots={'layout': 'explicit', 'poses': [[-0.3, -0.1, 0.0]]},
            controller={'kind': 'go_to_goal', 'params': {'goals': [[0.3, 0.2]]}},
            duration=6.0,
        )
        scenario = tmp_path / "one.yaml"
        scenario.write_text(yaml.dump(doc))
        assert main(['simulate', str(scenario), '--out', str(log)]) == EXIT_OK
        out = tmp_path / "fit.json"
        assert main(['sysid', str(log), '--out', str(out)]) == EXIT_OK
        data = json.loads(out.read_text())
        assert data['alpha1'] == pytest.approx(0.8645, rel=1e-4)
        assert data['alpha3'] == pytest.approx(0.4640, rel=1e-4)
        assert data['header']['sources'][0]['path'] == str(log)

    def test_no_logs(self, capsys):
        """Test that sysid without logs is a usage error"""
        assert main(['sysid']) == EXIT_USAGE

    def test_schema_mismatch(self, tmp_path, capsys):
        """Test exit 2 naming the offending column"""
        path = tmp_path / "bad.csv"
        columns = [c for c in REQUIRED_COLUMNS if c != 'e_loss']
        path.write_text(",".join(columns) + "\n" + ",".join("0" for _ in columns) + "\n")
        assert main(['sysid', str(path)]) == EXIT_USAGE
        document = _stderr_json(capsys)
        assert document['error'] == 'schema_mismatch'
        assert document['column'] == 'e_loss'


class TestTrajError:
    """Test the traj-error command"""

    def _simulate(self, tmp_path, name, *extra):
        out = tmp_path / name
        assert main(['simulate', HEADON, '--duration', '2', '--out', str(out), *extra]) == EXIT_OK
        return str(out)

    def test_self_is_zero(self, tmp_path, capsys):
        """Test that a log compared with itself gives 0.0000 m"""
        path = self._simulate(tmp_path, "a.csv")
        capsys.readouterr()
        assert main(['traj-error', path, path]) == EXIT_OK
        out = capsys.readouterr().out
        assert "robot 0: 0.0000 m" in out
        assert "mean: 0.0000 m" in out

    def test_out_json(self, tmp_path):
        """Test the JSON result for one robot"""
        sim = self._simulate(tmp_path, "sim.csv", '--no-noise')
        real = self._simulate(tmp_path, "real.csv", '--seed', '3')
        out = tmp_path / "err.json"
        assert main(['traj-error', sim, real, '--robot', '1', '--out', str(out)]) == EXIT_OK
        data = json.loads(out.read_text())
        assert list(data['errors']) == ['1']
        assert data['mean'] >= 0.0
        assert np.isfinite(data['mean'])

    def test_robot_count_mismatch(self, tmp_path, capsys):
        """Test that logs of different swarms are a usage error"""
        two = self._simulate(tmp_path, "two.csv")
        one_doc = scenario_doc(robots={'layout': 'explicit', 'poses': [[0.0, 0.0, 0.0]]})
        scenario = tmp_path / "one.yaml"
        scenario.write_text(yaml.dump(one_doc))
        one = tmp_path / "one.csv"
        assert main(['simulate', str(scenario), '--out', str(one)]) == EXIT_OK
        capsys.readouterr()
        assert main(['traj-error', two, str(one)]) == EXIT_USAGE
        assert _stderr_json(capsys)['error'] == 'invalid_input'

    def test_robot_out_of_range(self, tmp_path):
        """Test that --robot must index the swarm"""
        path = self._simulate(tmp_path, "a.csv")
        assert main(['traj-error', path, path, '--robot', '5']) == EXIT_USAGE
