"""
Safety Report Builder Module

Renders verification results (and optionally a simulation summary) as
Markdown for people and as a dict/JSON document for tools.
"""

import json
from datetime import datetime
from typing import Any, Dict, List, Optional

from .barrier import FilterMode
from .simulator import RunSummary
from .verification import SafetyReport, deployment_mode


class SafetyReportBuilder:
    """
    Builds safety reports for a scenario.

    Combines:
    - Monte Carlo gate results
    - The run summary of a nominal simulation
    - Manual notes
    - Deployment recommendation
    """

    def __init__(self):
        """Initialize report builder."""
        self.report: Optional[SafetyReport] = None
        self.run_summary: Optional[RunSummary] = None
        self.requested_mode: FilterMode = FilterMode.OFF
        self.manual_notes: List[str] = []
        self.worst_runs_shown: int = 5

    def set_report(self, report: SafetyReport, requested_mode: FilterMode = FilterMode.OFF):
        """Set verification results and the filter mode the experimenter asked for."""
        self.report = report
        self.requested_mode = requested_mode

    def set_run_summary(self, summary: RunSummary):
        """Set the summary of a nominal (noise-free or seeded) simulation."""
        self.run_summary = summary

    def add_note(self, note: str):
        """Add manual note to report."""
        self.manual_notes.append(note)

    def build_markdown(self) -> str:
        """
        Build the safety report in Markdown format.

        Returns:
            Formatted markdown string
        """
        lines = []
        name = self.report.scenario if self.report else "scenario"

        lines.append(f"# Safety Report: {name}")
        if self.report:
            header = self.report.header
            lines.append(f"**Config hash**: `{header.get('config_hash', 'n/a')}`")
            lines.append(f"**Master seed**: {header.get('seed', 'n/a')}")
            lines.append(f"**Version**: {header.get('version', 'n/a')}")
        lines.append(f"**Generated**: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}")
        lines.append("")
        lines.append("---")
        lines.append("")

        lines.append("## Summary")
        lines.append("")
        lines.extend(self._build_summary())
        lines.append("")

        if self.run_summary:
            lines.append("## Nominal Run")
            lines.append("")
            lines.extend(self._build_run_section())
            lines.append("")

        if self.report:
            lines.append("## Per-Run Scores")
            lines.append("")
            lines.extend(self._build_runs_table())
            lines.append("")

            if self.report.diagnostics:
                lines.append("## Diagnostics")
                lines.append("")
                for item in self.report.diagnostics:
                    lines.append(f"- {item}")
                lines.append("")

        if self.manual_notes:
            lines.append("## Additional Notes")
            lines.append("")
            for note in self.manual_notes:
                lines.append(f"- {note}")
            lines.append("")

        lines.append("## Recommendation")
        lines.append("")
        lines.extend(self._build_recommendations())
        lines.append("")

        lines.append("---")
        lines.append("")
        lines.append("*This report was generated automatically by SwarmGuard.*")

        return "\n".join(lines)

    def _build_summary(self) -> List[str]:
        lines = []
        report = self.report
        if not report:
            lines.append("No verification results.")
            return lines

        t = report.thresholds
        lines.append(f"**Verdict**: {'✅ ' if report.passed else '❌ '}{report.verdict.value}")
        lines.append(f"- Robots: {report.robots}")
        lines.append(f"- Runs: {len(report.runs)} (filter during rollouts: {report.filter_mode})")
        lines.append(f"- Thresholds: D_max = {t.d_max_total:.3e} J, d_i,max = {t.d_max_individual:.3e} J")
        lines.append(f"- Expected S: {report.mean_score:.6f} (worst run {report.worst_score:.6f})")
        if report.mean_scores_individual:
            worst_robot = min(range(report.robots), key=lambda i: report.mean_scores_individual[i])
            lines.append(
                f"- Lowest expected s_i: {report.mean_scores_individual[worst_robot]:.6f} "
                f"(robot {worst_robot})"
            )
        return lines

    def _build_run_section(self) -> List[str]:
        s = self.run_summary
        return [
            f"- Ticks: {s.ticks}",
            f"- Minimum pairwise distance: {s.min_distance:.4f} m",
            f"- Contact ticks: {s.contact_ticks}",
            f"- Total damage: {s.total_damage:.3e} J",
            f"- Filter interventions: {s.filter_interventions}",
            f"- Emergency stops: {s.emergency_stops}",
            f"- Status: {s.status}" + (f" ({s.error})" if s.error else ""),
        ]

    def _build_runs_table(self) -> List[str]:
        lines = []
        runs = sorted(self.report.runs, key=lambda r: (r.score, r.index))
        shown = runs[:self.worst_runs_shown]
        lines.append(f"Worst {len(shown)} of {len(runs)} runs:")
        lines.append("")
        lines.append("| Run | Seed | D (J) | S | min s_i | Min distance (m) | Status |")
        lines.append("|---|---|---|---|---|---|---|")
        for r in shown:
            min_si = min(r.scores_individual) if r.scores_individual else 1.0
            lines.append(
                f"| {r.index} | {r.seed} | {r.damage:.3e} | {r.score:.6f} | {min_si:.6f} | "
                f"{r.min_distance:.4f} | {r.status} |"
            )
        return lines

    def _build_recommendations(self) -> List[str]:
        if not self.report:
            return ["- ⚠️  Run verification before deploying"]
        mode = deployment_mode(self.report, self.requested_mode)
        if self.report.passed:
            if mode is FilterMode.OFF:
                return ["- ✅ Controller may run without barrier certificates"]
            return [f"- ✅ Gate passed; running with the requested {mode.value} filter"]
        return [
            f"- 🔴 Barrier certificates required: deploy with the {mode.value} filter",
            "- 💡 Increase spacing or lower gains to pass the gate unfiltered",
        ]

    def build_dict(self) -> Dict[str, Any]:
        """
        Build the report as a dictionary for JSON export.

        Returns:
            Report data as dict (schemas/safety-report.json); no timestamp, so
            a fixed seed reproduces the document byte for byte
        """
        data: Dict[str, Any] = self.report.to_dict() if self.report else {}
        data['notes'] = list(self.manual_notes)
        if self.report:
            data['deployment_mode'] = deployment_mode(self.report, self.requested_mode).value
        if self.run_summary:
            data['nominal_run'] = self.run_summary.to_dict()
        return data

    def save_markdown(self, filepath: str):
        """Save report as Markdown file."""
        with open(filepath, 'w') as f:
            f.write(self.build_markdown())

    def save_json(self, filepath: str):
        """Save report as JSON file."""
        with open(filepath, 'w') as f:
            json.dump(self.build_dict(), f, indent=2)
