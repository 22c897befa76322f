"""Scenario runs and parameter sweeps with their file outputs."""
from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import svg
from .config import Scenario, SweepSpec
from .control import Law
from .sim import RunSummary, SimulationAborted, TrajectoryLog, force_error, run, summarize
from .stability import StabilityReport, stability_report

log = logging.getLogger(__name__)

#: Upper bound on plotted samples per time series; plotted points are a subset of CSV rows.
MAX_PLOT_POINTS = 2000


@dataclass
class RunResult:
    scenario: Scenario
    log: TrajectoryLog
    summary: RunSummary
    report: StabilityReport
    error: str | None = None

    @property
    def aborted(self) -> bool:
        return self.error is not None

    def summary_dict(self) -> dict:
        out = {"name": self.scenario.name, "aborted": self.aborted, "error": self.error}
        out.update(self.summary.to_dict())
        out.update(self.report.to_dict())
        if self.scenario.expected:
            out["expected_ok"] = self.scenario.check_expected(self.summary)
        return out


def scenario_report(scenario: Scenario) -> StabilityReport:
    return stability_report(scenario.sim.guidance, scenario.params, scenario.gamma_xy)


def simulate(scenario: Scenario) -> RunResult:
    """Run a scenario; an aborted run returns its partial log with ``error`` set."""
    error = None
    try:
        trajectory = run(scenario.sim, scenario.params)
    except SimulationAborted as exc:
        trajectory, error = exc.log, str(exc)
    return RunResult(scenario, trajectory, summarize(trajectory), scenario_report(scenario), error)


def plot_rows(n: int) -> np.ndarray:
    """Indices of the log rows drawn in plots (always includes the last row)."""
    stride = max(1, math.ceil(n / MAX_PLOT_POINTS))
    idx = np.arange(0, n, stride)
    if idx[-1] != n - 1:
        idx = np.append(idx, n - 1)
    return idx


def timeseries_svg(result: RunResult) -> str:
    lg = result.log
    idx = plot_rows(len(lg))
    t = lg.t[idx].tolist()
    err = force_error(lg)[idx].tolist()
    speed = np.linalg.norm(lg.v_H[idx], axis=1).tolist()
    law = result.scenario.law.value
    return svg.render([
        svg.Panel(f"{result.scenario.name}: force error", "time [s]", "|gamma_xy - F_xy| [N]",
                  [svg.Series(law, t, err)]),
        svg.Panel("human speed", "time [s]", "|v_H| [m/s]", [svg.Series(law, t, speed)]),
    ])


def write_run(result: RunResult, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    name = result.scenario.name
    paths = {"csv": out / f"{name}.csv", "summary": out / f"{name}.summary.json", "svg": out / f"{name}.svg"}
    result.log.to_csv(paths["csv"])
    paths["summary"].write_text(json.dumps(result.summary_dict(), indent=2, allow_nan=False) + "\n")
    paths["svg"].write_text(timeseries_svg(result))
    return paths


SWEEP_COLUMNS = (
    "index", "law", "value", "name", "mean_force_error", "std_force_error", "mean_speed", "std_speed",
    "slack_fraction", "converged", "settle_time", "vertical_force_ok", "damping_condition_ok",
    "scalar_damping_ok", "scalar_damping_margin", "aborted",
)


def _sweep_point(point):
    index, law, value, scenario = point
    result = simulate(scenario)
    row = {"index": index, "law": law.value, "value": value}
    row.update({k: v for k, v in result.summary_dict().items() if k in SWEEP_COLUMNS})
    return row


@dataclass
class SweepResult:
    spec: SweepSpec
    rows: list

    @property
    def failed(self) -> bool:
        return any(r["aborted"] for r in self.rows)

    def rows_for(self, law: Law) -> list:
        return [r for r in self.rows if r["law"] == law.value]

    def slope(self, law: Law) -> float | None:
        """Least-squares slope of mean force error against mean speed."""
        rows = [r for r in self.rows_for(law) if not r["aborted"]]
        if len(rows) < 2:
            return None
        x = np.array([r["mean_speed"] for r in rows])
        y = np.array([r["mean_force_error"] for r in rows])
        if np.ptp(x) == 0:
            return None
        return float(np.polyfit(x, y, 1)[0])


def run_sweep(spec: SweepSpec, jobs: int | None = None) -> SweepResult:
    points = spec.grid()
    jobs = jobs or spec.jobs or os.cpu_count() or 1
    if jobs == 1 or len(points) == 1:
        rows = [_sweep_point(p) for p in points]
    else:
        with ProcessPoolExecutor(max_workers=min(jobs, len(points))) as pool:
            rows = list(pool.map(_sweep_point, points))
    laws = [l.value for l in spec.laws]
    rows.sort(key=lambda r: (r["index"], laws.index(r["law"])))
    return SweepResult(spec, rows)


def sweep_svg(result: SweepResult) -> str:
    series = []
    for law in result.spec.laws:
        rows = [r for r in result.rows_for(law) if not r["aborted"]]
        xs = [r["mean_speed"] for r in rows]
        ys = [r["mean_force_error"] for r in rows]
        series.append(svg.Series(f"{law.value} runs", xs, ys, style="points"))
        slope = result.slope(law)
        if slope is not None:
            intercept = float(np.mean(ys) - slope * np.mean(xs))
            ends = [min(xs), max(xs)]
            series.append(svg.Series(f"{law.value} fit", ends, [intercept + slope * e for e in ends],
                                     style="dashed" if law is Law.GAMMA else "line"))
    return svg.render([svg.Panel(f"{result.spec.name}: force error vs walking speed",
                                 "mean human speed [m/s]", "mean force error [N]", series)])


def write_sweep(result: SweepResult, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    name = result.spec.name
    paths = {"csv": out / f"{name}.sweep.csv", "summary": out / f"{name}.sweep.json", "svg": out / f"{name}.sweep.svg"}
    with open(paths["csv"], "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        w.writeheader()
        for r in result.rows:
            w.writerow({k: _csv_cell(r.get(k)) for k in SWEEP_COLUMNS})
    summary = {"name": name, "axis": result.spec.axis, "runs": len(result.rows), "failed": result.failed,
               "slopes": {l.value: result.slope(l) for l in result.spec.laws}}
    paths["summary"].write_text(json.dumps(summary, indent=2) + "\n")
    paths["svg"].write_text(sweep_svg(result))
    return paths


def _csv_cell(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.9g}"
    return v
