"""Energy-harvesting IoT simulator: Python front end to the C++ core."""

import json
import os

from . import _core
from ._core import ape, benchmark_table, compute_sf, presets

__all__ = ["run", "sweep", "config_hash", "ape", "benchmark_table", "compute_sf", "presets"]


def _text(config):
    return config if isinstance(config, str) else json.dumps(config)


def run(config, base_dir=os.curdir):
    """Run one experiment; returns the result document as a dict."""
    return json.loads(_core.run(_text(config), base_dir))


def sweep(config, workers=1, base_dir=os.curdir):
    """Capacitance x S_I grid; returns the heatmap rows as dicts."""
    lines = _core.sweep(_text(config), workers, base_dir).strip().splitlines()
    header = lines[0].split(",")
    return [dict(zip(header, row.split(","))) for row in lines[1:]]


def config_hash(config, base_dir=os.curdir):
    return _core.normalize_config(_text(config), base_dir)[1]
