"""Accessors for the data files shipped with the package."""
from __future__ import annotations

from importlib import resources
from pathlib import Path

from .geometry import TrapLayout, load_layout
from .noise import DipoleBath, load_bath


def data_path(name: str) -> Path:
    p = resources.files("surftrap").joinpath("data", name)
    with resources.as_file(p) as fp:
        return Path(fp)


def paper_layout() -> TrapLayout:
    """The shipped asymmetric five-wire layout with its fitted operating point."""
    return load_layout(data_path("paper_trap.layout"))


def shipped_bath(name: str) -> DipoleBath:
    """Bath presets from file: 'wide' or 'paper_a10'."""
    return load_bath(data_path(f"bath_{name}.toml"))


def paper_points_csv() -> Path:
    """Survey records derivable from the source text (flagged approximate)."""
    return data_path("paper_points.csv")
