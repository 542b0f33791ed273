"""Run reports: JSON for machines, aligned columns for people, CSV for sweeps."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Iterable, Sequence


@dataclass
class RunReport:
    command: str
    config: dict
    summary: dict
    capm_residual: float
    deficit_residual: float
    prop1: dict
    prop2: dict
    witness: dict
    restriction: dict
    capitals: dict
    meta: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, timing: bool = True) -> str:
        d = self.to_dict()
        if not timing:
            d.pop("timing")
        return json.dumps(d, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        return cls.from_dict(json.loads(text))


def _fmt(v) -> str:
    if isinstance(v, bool) or v is None:
        return str(v)
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isinf(v) or math.isnan(v):
            return str(v)
        return f"{v:.6g}"
    return str(v)


def format_table(rows: Sequence[Sequence], header: Sequence[str] | None = None) -> str:
    """Left-aligned first column, right-aligned numbers."""
    cells = [[_fmt(c) for c in row] for row in rows]
    if header is not None:
        cells.insert(0, list(header))
    if not cells:
        return ""
    widths = [max(len(r[i]) for r in cells) for i in range(len(cells[0]))]
    lines = []
    for j, row in enumerate(cells):
        parts = [row[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(row[1:], widths[1:])]
        lines.append("  ".join(parts).rstrip())
        if header is not None and j == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def render_run(report: RunReport) -> str:
    s = report.summary
    out = io.StringIO()
    out.write(f"{report.command}: N={s['n']} dt={s['dt']:g} T={s['T']:g}\n\n")
    out.write(
        format_table(
            [
                ("mu_s", s["mu_s"], "mu_m", s["mu_m"]),
                ("sigma_s^2", s["sigma_s_sq"], "sigma_m^2", s["sigma_m_sq"]),
                ("sigma_sm", s["sigma_sm"], "sigma_(s-m)^2", s["sigma_diff_sq"]),
                ("lambda_s", s["lambda_s"], "lambda_m", s["lambda_m"]),
            ]
        )
    )
    p1, p2, w = report.prop1, report.prop2, report.witness
    out.write("\n")
    out.write(
        format_table(
            [
                ("capm residual", report.capm_residual),
                (f"upper bound (eps={p1['epsilon_upper']:.4g})", p1["upper_bound"]),
                (f"lower bound (eps={p1['epsilon_lower']:.4g})", p1["lower_bound"]),
                ("lambda_s - lambda_m", p2["log_growth_gap"]),
                ("-sigma_(s-m)^2 / 2", -p2["performance_deficit"]),
                ("deficit residual", report.deficit_residual),
                ("sandwich gaps", f"{_fmt(p2['lower_gap'])} / {_fmt(p2['upper_gap'])}"),
                (f"witness verdicts (eps={w['epsilon']:g}, alpha={w['alpha']:g})",
                 " ".join(f"{k[8:]}={w[k]}" for k in sorted(w) if k.startswith("verdict_"))),
                ("terminal G_N / M_N", f"{_fmt(report.capitals['investor'])} / {_fmt(report.capitals['index'])}"),
            ]
        )
    )
    violations = report.restriction.get("violations") or []
    for v in violations:
        out.write(f"restriction: {v}\n")
    return out.getvalue()


def write_rows_csv(rows: Iterable[dict], columns: Sequence[str], fh) -> None:
    writer = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n", extrasaction="ignore")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (format(v, ".17g") if isinstance(v, float) else v) for k, v in row.items()})
