"""CSV tables and minimal SVG line charts from verification reports."""

from __future__ import annotations

from pathlib import Path

BOUND_HEADER = "c, kappa_u, bound_value, margin"


def bound_csv(rows) -> str:
    lines = [BOUND_HEADER]
    lines += [", ".join(f"{v:.17g}" for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def line_svg(xs, ys, title: str = "", width: int = 480, height: int = 320, pad: int = 40) -> str:
    """One polyline with a frame and min/max tick labels."""
    xs = [float(x) for x in xs]
    ys = [float(y) for y in ys]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5

    def px(x):
        return pad + (x - x0) / (x1 - x0) * (width - 2 * pad)

    def py(y):
        return height - pad - (y - y0) / (y1 - y0) * (height - 2 * pad)

    pts = " ".join(f"{px(x):.3f},{py(y):.3f}" for x, y in zip(xs, ys))
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">\n'
        f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" '
        f'fill="none" stroke="#888"/>\n'
        f'<polyline points="{pts}" fill="none" stroke="#1f4e9c" stroke-width="1.5"/>\n'
        f'<text x="{pad}" y="{pad - 12}" font-size="12">{title}</text>\n'
        f'<text x="{pad}" y="{height - pad + 16}" font-size="10">{x0:.4g}</text>\n'
        f'<text x="{width - pad}" y="{height - pad + 16}" font-size="10" text-anchor="end">{x1:.4g}</text>\n'
        f'<text x="{pad - 4}" y="{height - pad}" font-size="10" text-anchor="end">{y0:.4g}</text>\n'
        f'<text x="{pad - 4}" y="{pad + 4}" font-size="10" text-anchor="end">{y1:.4g}</text>\n'
        "</svg>\n"
    )


def emit_bound_plots(report: dict, out_dir) -> list[Path]:
    """One CSV and one SVG per snapshot in the report's bound series."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for entry in report.get("bound", {}).get("per_snapshot", []):
        if "rows" not in entry:
            continue
        stem = f"bound_{entry['index']:04d}"
        rows = entry["rows"]
        p = out / f"{stem}.csv"
        p.write_text(bound_csv(rows), encoding="utf-8")
        written.append(p)
        title = f"kappa_u(c) at t = {entry['time']:.6g}, A = {entry['A']:.6g}"
        q = out / f"{stem}.svg"
        q.write_text(line_svg([r[0] for r in rows], [r[1] for r in rows], title), encoding="utf-8")
        written.append(q)
    return written
