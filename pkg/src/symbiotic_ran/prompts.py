"""Prompt templates and rendering helpers."""

from __future__ import annotations

import math
from functools import lru_cache
from importlib import resources
from typing import Iterable, Sequence


@lru_cache(maxsize=None)
def template(name: str) -> str:
    return resources.files(__package__).joinpath("templates").joinpath(f"{name}.txt").read_text("utf-8").strip()


def _fmt(x: float) -> str:
    return f"{x:g}"


def memory_table(entries: Iterable[tuple[float, float]]) -> str:
    """Most-recent-first ``<Kp, mean iterations>`` rows."""
    rows = [f"| {i} | Kp: {_fmt(kp)} | average iterations to converge: {_fmt(kpi)} |"
            for i, (kp, kpi) in enumerate(entries, start=1)]
    if not rows:
        return " (empty) "
    return "\n| # | Kp | KPI |\n" + "\n".join(rows) + "\n"


def render_kp_prompt(current_kp: float, current_kpi: float, target_kpi: float,
                     memory: Sequence[tuple[float, float]],
                     kp_bounds: tuple[float, float]) -> str:
    return template("kp_tuning").format(
        target_avg_iters_conv=_fmt(target_kpi), curr_Kp=_fmt(current_kp),
        curr_mean_conv_iters=_fmt(current_kpi), memory=memory_table(memory),
        kp_low=_fmt(kp_bounds[0]), kp_high=_fmt(kp_bounds[1]))


def render_guardrail(interval) -> str:
    """Guard-rail instruction for a confidence interval (empty when None)."""
    if interval is None:
        return ""
    low, high = math.floor(interval.lower), math.ceil(interval.upper)
    return template("guardrail").format(low=low, high=high)
