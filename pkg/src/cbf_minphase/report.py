"""Text and JSON renderings of run summaries."""

from __future__ import annotations

import json
from typing import Any, Dict, List


def _flatten(prefix: str, value: Any, lines: List[str]) -> None:
    if isinstance(value, dict):
        for key, item in value.items():
            _flatten(f"{prefix}.{key}" if prefix else key, item, lines)
    else:
        lines.append(f"{prefix}: {value}")


def build_summary_text(summary: Dict[str, Any]) -> str:
    lines = [
        f"scenario: {summary.get('scenario')}",
        f"wiring: {summary.get('wiring')}",
        f"classification: {summary.get('classification')}",
        f"expected: {summary.get('expected')}",
        f"matched: {summary.get('matched')}",
    ]
    for section in ("verdict", "extrema", "final", "analysis", "config"):
        if summary.get(section):
            lines.append("")
            lines.append(f"[{section}]")
            _flatten("", summary[section], lines)
    lines.append("")
    lines.append(f"version: {summary.get('version')}")
    return "\n".join(lines) + "\n"


def serialize_summary_json(summary: Dict[str, Any]) -> str:
    return json.dumps(summary, indent=2) + "\n"
