"""Figure specification: what to read, how to group, where to draw."""

from __future__ import annotations

import json
from dataclasses import dataclass, fields

FIGURE_KINDS = ("delay_series", "controller_averages", "policy_comparison")


@dataclass(frozen=True)
class FigureSpec:
    """One figure: a kind, input CSVs, an output image and grouping columns.

    Input paths are resolved relative to the spec file's directory by the
    CLI; the library treats them as given.
    """

    kind: str
    inputs: tuple[str, ...]
    output: str
    group_by: tuple[str, ...]

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise ValueError(
                f"unknown figure kind {self.kind!r}; expected one of {FIGURE_KINDS}"
            )
        if not self.inputs:
            raise ValueError("spec lists no input CSV files")
        if not self.output:
            raise ValueError("spec has an empty output path")
        if not self.group_by:
            raise ValueError("spec lists no grouping columns")


def spec_from_dict(d: dict) -> FigureSpec:
    known = {f.name for f in fields(FigureSpec)}
    unknown = set(d) - known
    if unknown:
        raise ValueError(f"unknown spec keys: {sorted(unknown)}")
    missing = known - set(d)
    if missing:
        raise ValueError(f"spec is missing keys: {sorted(missing)}")
    return FigureSpec(
        kind=d["kind"],
        inputs=tuple(d["inputs"]),
        output=d["output"],
        group_by=tuple(d["group_by"]),
    )


def load_spec(path) -> FigureSpec:
    with open(path, encoding="utf-8") as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as e:
            raise ValueError(f"{path}: not valid JSON ({e})") from None
    if not isinstance(d, dict):
        raise ValueError(f"{path}: spec file must hold a JSON object")
    try:
        return spec_from_dict(d)
    except (ValueError, TypeError) as e:
        raise ValueError(f"{path}: {e}") from None
