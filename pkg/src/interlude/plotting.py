"""Plot emission for experiment records and training logs.

Every plot is written next to a delimited data file holding exactly the
plotted table; ``plot_from_csv`` regenerates the image from that file alone.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .errors import ConfigurationError, DataError

KINDS = ("sensitivity", "learning-curve", "layout-ablation")


def _write_csv(path: Path, fieldnames, rows) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)


def _read_csv(path: Path):
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def _records_table(records, kind: str):
    rows = []
    for rec in records:
        point = rec.point if hasattr(rec, "point") else rec["point"]
        mean = rec.mean_error if hasattr(rec, "mean_error") else rec["mean_error"]
        ci = rec.ci95 if hasattr(rec, "ci95") else rec["ci95"]
        seeds = rec.seed_errors if hasattr(rec, "seed_errors") else rec["seed_errors"]
        if kind == "layout-ablation":
            x = point.get("layout", "_".join(str(v) for v in point.values()) or "base")
        else:
            if len(point) != 1:
                raise ConfigurationError(
                    f"sensitivity plots need single-parameter sweep points, got {point}"
                )
            x = next(iter(point.values()))
        rows.append(
            {
                "x": x,
                "mean_error": mean,
                "ci95": "" if ci is None else ci,
                "n_seeds": len(seeds),
                "param": next(iter(point), "layout"),
            }
        )
    rows.sort(key=lambda r: str(r["x"]))
    return rows


def _metrics_table(records):
    fields = ["step", "lr", "l_sup", "l_unsup", "l_dc", "l_saf", "mask_rate", "eval_error"]
    rows = []
    for rec in records:
        rows.append({k: ("" if rec.get(k) is None else rec.get(k)) for k in fields})
    return fields, rows


def emit_plots(records, kind: str, out_dir, name: str = None):
    """Write <name>.csv and <name>.png for a record set; returns both paths."""
    if kind not in KINDS:
        raise ConfigurationError(f"unknown plot kind {kind!r}; expected one of {KINDS}")
    records = list(records)
    if not records:
        raise DataError("no records to plot")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    name = name or kind
    csv_path = out_dir / f"{name}.csv"
    png_path = out_dir / f"{name}.png"

    if kind == "learning-curve":
        fields, rows = _metrics_table(records)
        _write_csv(csv_path, fields, rows)
    else:
        rows = _records_table(records, kind)
        _write_csv(csv_path, ["param", "x", "mean_error", "ci95", "n_seeds"], rows)
    plot_from_csv(csv_path, kind, png_path)
    return png_path, csv_path


def plot_from_csv(csv_path, kind: str, png_path):
    """Re-render a plot purely from its data file."""
    rows = _read_csv(csv_path)
    if not rows:
        raise DataError(f"{csv_path} holds no rows")
    png_path = Path(png_path)
    fig, ax = plt.subplots(figsize=(6, 4))

    if kind == "sensitivity":
        xs = [float(r["x"]) for r in rows]
        order = sorted(range(len(xs)), key=lambda i: xs[i])
        xs = [xs[i] for i in order]
        means = [float(rows[i]["mean_error"]) for i in order]
        cis = [float(rows[i]["ci95"]) if rows[i]["ci95"] else None for i in order]
        ax.plot(xs, means, marker="o")
        if all(c is not None for c in cis) and len(xs) > 1:
            lo = [m - c for m, c in zip(means, cis)]
            hi = [m + c for m, c in zip(means, cis)]
            ax.fill_between(xs, lo, hi, alpha=0.2)
        ax.set_xlabel(rows[0]["param"])
        ax.set_ylabel("error rate")
    elif kind == "layout-ablation":
        xs = [r["x"] for r in rows]
        means = [float(r["mean_error"]) for r in rows]
        errs = [float(r["ci95"]) if r["ci95"] else 0.0 for r in rows]
        ax.bar(range(len(xs)), means, yerr=errs, capsize=4)
        ax.set_xticks(range(len(xs)), xs)
        ax.set_ylabel("error rate")
    elif kind == "learning-curve":
        steps = [int(r["step"]) for r in rows]
        for key, style in (("l_sup", "-"), ("l_unsup", "--"), ("l_dc", ":")):
            vals = [float(r[key]) if r[key] != "" else None for r in rows]
            if any(v is not None for v in vals):
                ax.plot(steps, vals, style, label=key)
        eval_pts = [(int(r["step"]), float(r["eval_error"])) for r in rows if r["eval_error"] != ""]
        if eval_pts:
            ax.plot(*zip(*eval_pts), marker="s", label="eval_error")
        ax.set_xlabel("step")
        ax.legend()
    else:
        raise ConfigurationError(f"unknown plot kind {kind!r}")

    fig.tight_layout()
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
    return png_path
