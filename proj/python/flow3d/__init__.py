"""Latency-driven mapping of 3D CNNs onto runtime-configurable FPGA accelerators."""

import csv
import io
import json
import os

from . import _core
from ._core import (  # noqa: F401
    DeviceError,
    HardwareGraphError,
    ModelError,
    OptimizerError,
    ScheduleError,
    bram_blocks,
    derive_metrics,
)


def _data_dir():
    here = os.path.join(os.path.dirname(__file__), "data")
    return here if os.path.isdir(here) else _core.DATA_DIR


def _text(doc):
    return doc if isinstance(doc, str) else json.dumps(doc)


def zoo_names():
    return list(_core.zoo_names())


def zoo_model(name):
    return json.loads(_core.zoo_model(name))


def load_model(path):
    with open(path) as f:
        return json.loads(_core.normalize_model(f.read()))


def load_device(name_or_path):
    """A bundled profile by name (e.g. "zcu102") or a JSON file path."""
    path = name_or_path
    if not os.path.exists(path):
        path = os.path.join(_data_dir(), "devices", name_or_path + ".json")
    with open(path) as f:
        return json.loads(_core.normalize_device(f.read()))


def model_summary(model):
    return dict(_core.model_summary(_text(model)))


def optimize(model, device, params=None):
    """Returns (design, best_cycles, warm_start_cycles, trace rows)."""
    design, best, warm, trace = _core.optimize(_text(model), _text(device), _text(params) if params else "")
    rows = [
        {"iter": int(r["iter"]), "tau": float(r["tau"]), "current_cycles": int(r["current_cycles"]),
         "best_cycles": int(r["best_cycles"]), "feasible": r["feasible"] == "1"}
        for r in csv.DictReader(io.StringIO(trace))
    ]
    return json.loads(design), best, warm, rows


def schedule(design, device=None):
    return json.loads(_core.schedule(_text(design), _text(device) if device else ""))


def report(design, device):
    return json.loads(_core.report(_text(design), _text(device)))


def pareto(model, device, budgets, params=None):
    text = _core.pareto(_text(model), _text(device), list(budgets), _text(params) if params else "")
    return [{k: float(v) if k == "latency_ms" else int(v) for k, v in r.items()}
            for r in csv.DictReader(io.StringIO(text))]
