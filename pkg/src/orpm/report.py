"""Evaluation report emission: structured text, a delimited table mirroring
the per-sequence layout, and matplotlib figures rendered to files.

All outputs are byte-deterministic for identical reports: numbers use fixed
formatting and figures pin their PNG metadata.
"""

from pathlib import Path

from .metrics import EvalReport, SplitStats

_PNG_METADATA = {"Software": "orpm-pose"}


def _fmt(value: float) -> str:
    return f"{value:.6f}"


def _split_line(stats: SplitStats | None) -> str:
    if stats is None:
        return "n/a"
    return f"{_fmt(stats.pck)} ({stats.n_correct}/{stats.n_joints})"


def report_text(report: EvalReport) -> str:
    lines = [
        "occlusion-robust pose-map evaluation",
        "====================================",
        f"annotated_persons    {report.n_annotated}",
        f"matched_predictions  {report.n_matched}",
        f"detection_rate       {_fmt(report.detection_rate)}",
        f"pck_radius_mm        {_fmt(report.radius_mm)}",
        f"pck_total            {_split_line(report.total)}",
        f"auc                  {_fmt(report.auc)}",
        "mpjpe_matched_mm     "
        + (_fmt(report.mpjpe_matched_mm) if report.mpjpe_matched_mm is not None else "n/a"),
        f"pck_occluded         {_split_line(report.occluded)}",
        f"pck_unoccluded       {_split_line(report.unoccluded)}",
        "",
        "per-joint 3dpck:",
    ]
    for name, stats in report.per_joint.items():
        lines.append(f"  {name:<12} {_split_line(stats)}")
    lines.append("")
    lines.append("per-sequence 3dpck:")
    for name, stats in report.per_sequence.items():
        lines.append(f"  {name:<20} {_split_line(stats)}")
    lines.append("")
    return "\n".join(lines)


def report_tsv(report: EvalReport) -> str:
    """Sequences as columns, metrics as rows, total column last."""
    names = list(report.per_sequence)
    header = ["metric", *names, "total"]
    rows = [
        ["pck", *(_fmt(report.per_sequence[n].pck) for n in names), _fmt(report.total.pck)],
        [
            "n_correct",
            *(str(report.per_sequence[n].n_correct) for n in names),
            str(report.total.n_correct),
        ],
        [
            "n_joints",
            *(str(report.per_sequence[n].n_joints) for n in names),
            str(report.total.n_joints),
        ],
    ]
    return "\n".join("\t".join(row) for row in [header, *rows]) + "\n"


def save_figures(report: EvalReport, out_dir) -> list[Path]:
    """Render the PCK curve and the per-joint bars alongside the tables."""
    from matplotlib.backends.backend_agg import FigureCanvasAgg
    from matplotlib.figure import Figure

    out_dir = Path(out_dir)
    paths = []

    fig = Figure(figsize=(5.0, 3.4), dpi=120)
    FigureCanvasAgg(fig)
    ax = fig.add_subplot()
    ax.plot(report.thresholds_mm, report.pck_curve, marker="o", markersize=3)
    ax.set_xlabel("threshold (mm)")
    ax.set_ylabel("3DPCK (%)")
    ax.set_ylim(0, 105)
    ax.set_title(f"PCK curve (AUC {report.auc:.1f})")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    curve_path = out_dir / "pck_curve.png"
    fig.savefig(curve_path, metadata=_PNG_METADATA)
    paths.append(curve_path)

    fig = Figure(figsize=(6.4, 3.4), dpi=120)
    FigureCanvasAgg(fig)
    ax = fig.add_subplot()
    names = list(report.per_joint)
    ax.bar(range(len(names)), [report.per_joint[n].pck for n in names])
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=60, ha="right", fontsize=7)
    ax.set_ylabel("3DPCK (%)")
    ax.set_ylim(0, 105)
    ax.set_title(f"per-joint 3DPCK @ {report.radius_mm:.0f} mm")
    fig.tight_layout()
    joint_path = out_dir / "pck_per_joint.png"
    fig.savefig(joint_path, metadata=_PNG_METADATA)
    paths.append(joint_path)
    return paths
