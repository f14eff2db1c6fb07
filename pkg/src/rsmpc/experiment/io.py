"""result files: one CSV per closed loop trace, JSON summaries and the sweep table"""

import csv
import os
from typing import Dict, List

import numpy as np

from rsmpc.sim.closed_loop import ClosedLoopTrace
from rsmpc.util._utils import save_json


def run_folder(out_dir: str, name: str, config_hash: str) -> str:
    """folder of all results of one experiment description"""
    return os.path.join(out_dir, f"{name}_{config_hash[:12]}")


def cell_folder(folder: str, alpha: float, p: float) -> str:
    """folder of one (alpha, p) cell"""
    return os.path.join(folder, f"alpha_{alpha:g}_p_{p:g}")


def trace_filename(config_hash: str, variant: str, seed: int | None) -> str:
    """file name of a trace, unique per configuration, controller and seed"""
    return f"{config_hash[:12]}_{variant}_seed_{seed}.csv"


def trace_rows(trace: ClosedLoopTrace) -> List[Dict]:
    """one row per recorded state; the last row of a complete run has no input"""
    rows = []
    n = trace.x.shape[1]
    m = trace.u.shape[1]
    for k in range(trace.x.shape[0]):
        row = {"k": k}
        for i in range(n):
            row[f"x{i}"] = float(trace.x[k, i])
        applied = k < trace.steps
        for i in range(m):
            row[f"u{i}"] = float(trace.u[k, i]) if applied else ""
        for i in range(n):
            row[f"s{i}"] = float(trace.s0[k, i]) if applied else ""
        row["alpha"] = float(trace.alpha0[k]) if applied else ""
        row["status"] = trace.status[k] if k < len(trace.status) else ""
        row["state_ok"] = int(np.all(trace.state_flags[k]))
        row["input_ok"] = int(np.all(trace.input_flags[k])) if applied else ""
        row["stage_cost"] = float(trace.stage_cost[k]) if applied else ""
        rows.append(row)
    return rows


def write_trace_csv(trace: ClosedLoopTrace, file_name: str) -> None:
    """Writes a trace as CSV with columns k, x*, u*, s*, alpha, status,
    state_ok, input_ok, stage_cost"""
    rows = trace_rows(trace)
    folder = os.path.dirname(file_name)
    if folder and not os.path.exists(folder):
        os.makedirs(folder)
    with open(file_name, "w", encoding="utf8", newline="") as out_file:
        writer = csv.DictWriter(out_file, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


def write_summary(data: Dict, file_name: str) -> None:
    """Writes a JSON summary, creating the folder if needed"""
    folder = os.path.dirname(file_name)
    if folder and not os.path.exists(folder):
        os.makedirs(folder)
    save_json(data, file_name)


TABLE_COLUMNS = [
    "alpha",
    "p_x",
    "p_u",
    "status",
    "rsmpc_N_c",
    "rsmpc_excluded",
    "baseline_N_c",
    "baseline_excluded",
    "cost_increase_mean",
    "cost_increase_std",
]


def write_table(rows: List[Dict], folder: str) -> None:
    """Writes the sweep table as table.csv and table.json in folder"""
    if not os.path.exists(folder):
        os.makedirs(folder)
    with open(os.path.join(folder, "table.csv"), "w", encoding="utf8", newline="") as out_file:
        writer = csv.DictWriter(out_file, fieldnames=TABLE_COLUMNS, extrasaction="ignore")
        writer.writeheader()
        writer.writerows(rows)
    save_json({"cells": rows}, os.path.join(folder, "table.json"))
