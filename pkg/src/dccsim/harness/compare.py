"""Cross-run comparison: aligned plain-text table plus comparison.json."""

from __future__ import annotations

import json
from pathlib import Path

from ..errors import ConfigError


def _load_report(run_dir: Path) -> dict:
    path = run_dir / "summary.json"
    if not path.exists():
        raise ConfigError(f"{run_dir}: no summary.json")
    try:
        with open(path, encoding="utf-8") as fh:
            report = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if "mean_co2_kg" in report:
        mean = report["mean_co2_kg"]
        std = report.get("std_co2_kg", 0.0)
    elif "totals" in report:
        mean = report["totals"]["co2_kg"]
        std = 0.0
    else:
        raise ConfigError(f"{path}: no CO2 totals found")
    return {
        "run_dir": str(run_dir),
        "scenario": report.get("scenario", "?"),
        "configuration": report.get("configuration", "?"),
        "mean_co2_kg": float(mean),
        "std_co2_kg": float(std),
    }


def compare_runs(run_dirs) -> tuple[str, dict]:
    """Build the comparison table; the first run is the reference.

    Returns (formatted table text, comparison document).
    """
    run_dirs = [Path(d) for d in run_dirs]
    if len(run_dirs) < 2:
        raise ConfigError("compare needs at least two run directories")
    entries = [_load_report(d) for d in run_dirs]
    reference = entries[0]
    rows = []
    for entry in entries:
        delta_pct = 100.0 * (entry["mean_co2_kg"] - reference["mean_co2_kg"]) \
            / reference["mean_co2_kg"]
        rows.append({**entry, "delta_pct_vs_first": delta_pct})

    name_w = max(len(r["configuration"]) for r in rows)
    name_w = max(name_w, len("configuration"))
    co2_cells = [f"{r['mean_co2_kg']:.1f} ± {r['std_co2_kg']:.1f}" for r in rows]
    co2_w = max(len(c) for c in co2_cells + ["co2_kg (mean ± std)"])
    lines = [
        f"{'configuration':<{name_w}}  {'co2_kg (mean ± std)':>{co2_w}}  {'Δ% vs first':>11}",
        f"{'-' * name_w}  {'-' * co2_w}  {'-' * 11}",
    ]
    for row, cell in zip(rows, co2_cells):
        lines.append(
            f"{row['configuration']:<{name_w}}  {cell:>{co2_w}}  "
            f"{row['delta_pct_vs_first']:>+10.2f}%"
        )
    table = "\n".join(lines)
    doc = {
        "reference": reference["configuration"],
        "rows": rows,
    }
    return table, doc


def write_comparison(run_dirs, out_path) -> str:
    table, doc = compare_runs(run_dirs)
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
    return table
