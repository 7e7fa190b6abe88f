"""Helpers shared by the experiment scripts."""

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from qwitness.cli import evaluate, parse_scenario, write_outputs  # noqa: E402

ROOT = Path(__file__).resolve().parent.parent
SCENARIOS = ROOT / "scenarios"
RESULTS = ROOT / "results"


def load(scenario: str, **changes) -> dict:
    doc = json.loads((SCENARIOS / f"{scenario}.json").read_text())
    for key, value in changes.items():
        if key == "parameters":
            doc.setdefault("parameters", {}).update(value)
        else:
            doc[key] = value
    return doc


def run_scenario(scenario: str, **changes):
    """Evaluate a shipped scenario (optionally modified) and write CSV, JSON and SVG."""
    sc = parse_scenario(load(scenario, **changes))
    table = evaluate(sc)
    paths = write_outputs(table, sc, RESULTS, svg=True)
    print(f"{sc.output.get('stem', sc.name)}: max value {table.column('value').max():.4g} -> {paths['csv']}")
    return table


def write_csv(stem: str, header: list[str], rows) -> Path:
    RESULTS.mkdir(parents=True, exist_ok=True)
    path = RESULTS / f"{stem}.csv"
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return path


def line_plot(stem: str, x, curves: dict, xlabel: str, ylabel: str, logy: bool = False) -> Path:
    matplotlib.rcParams["svg.hashsalt"] = "qwitness"
    fig, ax = plt.subplots(figsize=(5, 4))
    for label, y in curves.items():
        ax.plot(x, y, label=label)
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if len(curves) > 1:
        ax.legend()
    fig.tight_layout()
    path = RESULTS / f"{stem}.svg"
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path
