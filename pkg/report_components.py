import json
import logging
import math
from pathlib import Path

import numpy as np
import pandas as pd

from conformal_core import Report

logger = logging.getLogger("report_components")

TEXT_DIGITS = 12
RULE = "=" * 72


def _fmt_float(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "-"
    return f"{x:.{TEXT_DIGITS}g}"


def _plain(value):
    """Recursively turn numpy / pandas values into JSON-ready Python values."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float):
        if math.isnan(value):
            return None
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
    if value is pd.NA:
        return None
    return value


def table_records(df: pd.DataFrame) -> list[dict]:
    return _plain(df.to_dict("records"))


# ============ text report ============


def render_table(df: pd.DataFrame) -> str:
    if df.empty:
        return "(empty)"
    return df.to_string(index=False, float_format=_fmt_float, na_rep="-")


def render_text(report: Report) -> str:
    lines = [
        RULE,
        f"conformal-engine {report.version}  command: {report.command}",
        f"argv: {' '.join(report.argv)}",
        f"seed: {report.seed}",
    ]
    for path, digest in report.inputs.items():
        lines.append(f"input: {path}  sha256={digest}")
    for key, value in report.summary.items():
        shown = _fmt_float(value) if isinstance(value, float) else value
        lines.append(f"{key}: {shown}")
    for title, df in report.tables:
        lines += ["", f"---- {title} ----", render_table(df)]
    lines += ["", "---- checks ----", render_table(report.checks.drop(columns=["task"]))]
    verdict = "PASS" if report.passed else "FAIL"
    failed = int((~report.checks["passed"].astype(bool)).sum()) if not report.checks.empty else 0
    lines += ["", f"verdict: {verdict} ({len(report.checks) - failed}/{len(report.checks)} checks passed)"]
    # 墙钟时间只出现在文本报告里
    lines += [f"wall time: {report.wall_time:.2f}s", RULE]
    return "\n".join(lines)


# ============ structured report ============


def to_structured(report: Report) -> dict:
    return {
        "engine_version": report.version,
        "command": report.command,
        "argv": list(report.argv),
        "seed": report.seed,
        "inputs": [{"path": p, "sha256": d} for p, d in report.inputs.items()],
        "summary": _plain(report.summary),
        "tables": [{"title": title, "rows": table_records(df)} for title, df in report.tables],
        "checks": table_records(report.checks),
        "passed": report.passed,
    }


def render_structured(report: Report) -> str:
    return json.dumps(to_structured(report), sort_keys=True, indent=2, allow_nan=False)


def write_structured(report: Report, path) -> Path:
    out = Path(path)
    out.write_text(render_structured(report) + "\n", encoding="utf-8")
    logger.info("[Report] structured report written to %s", out)
    return out
