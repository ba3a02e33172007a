"""CSV/JSON writers for tables, histories, snapshots and convergence curves."""

import csv
import json
import math
import os

import numpy as np

from .schemes import HISTORY_COLUMNS


def fmt(x):
    if x is None:
        return ""
    x = float(x)
    if math.isnan(x):
        return ""
    return f"{x:.16e}"


def _write(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(row)
    return path


def _value(est):
    return None if est is None else est.value


def _resid(est):
    return None if est is None else est.residual


def write_tables(reports, out_dir):
    """Wide table1-3 CSVs plus the long (h, quantity, ...) listing."""
    files = []
    files.append(_write(
        os.path.join(out_dir, "table1.csv"),
        ["h", "norm_A_consistent", "norm_A_lumped", "residual_consistent", "residual_lumped", "error"],
        [[fmt(r.h), fmt(_value(r.norm_A_consistent)), fmt(_value(r.norm_A_lumped)),
          fmt(_resid(r.norm_A_consistent)), fmt(_resid(r.norm_A_lumped)),
          "; ".join(f"{k}: {v}" for k, v in r.errors.items() if k.startswith("norm_A"))]
         for r in reports]))
    files.append(_write(
        os.path.join(out_dir, "table2.csv"),
        ["h", "eta", "tau0", "residual_eta", "residual_tau0", "error"],
        [[fmt(r.h), fmt(_value(r.eta)), fmt(_value(r.tau0_explicit_lw)),
          fmt(_resid(r.eta)), fmt(_resid(r.tau0_explicit_lw)),
          "; ".join(f"{k}: {v}" for k, v in r.errors.items() if k in ("eta", "tau0_explicit_lw"))]
         for r in reports]))
    files.append(_write(
        os.path.join(out_dir, "table3.csv"),
        ["h", "norm_Q", "tau0", "residual_norm_Q", "error"],
        [[fmt(r.h), fmt(_value(r.norm_Q)), fmt(r.tau0_implicit_lw), fmt(_resid(r.norm_Q)),
          r.errors.get("norm_Q", "")]
         for r in reports]))
    rows = []
    for r in reports:
        for h, name, value, resid, its in r.rows():
            rows.append([fmt(h), name, fmt(value), fmt(resid), its])
    files.append(_write(os.path.join(out_dir, "stability.csv"),
                        ["h", "quantity", "value", "residual", "iterations"], rows))
    path = os.path.join(out_dir, "stability.json")
    with open(path, "w") as f:
        json.dump([r.to_dict() for r in reports], f, indent=2)
    files.append(path)
    return files


def write_oracle_check(rows, out_dir):
    return _write(os.path.join(out_dir, "oracle_check.csv"),
                  ["h", "quantity", "iterative", "dense_oracle", "relative_difference"],
                  [[fmt(h), q, fmt(a), fmt(b), fmt(d)] for h, q, a, b, d in rows])


def write_history(history, path):
    return _write(path, list(HISTORY_COLUMNS),
                  [[fmt(getattr(r, c)) for c in HISTORY_COLUMNS] for r in history])


def snapshot_name(t):
    return f"snapshot_t{t:.6f}.csv"


def write_snapshot(mesh, z, path):
    return _write(path, ["index", "x1", "x2", "value"],
                  [[k, fmt(x1), fmt(x2), fmt(v)] for k, ((x1, x2), v) in enumerate(zip(mesh.nodes, z))])


def write_convergence(result, path):
    header = ["t"] + [f"epsilon_tau={fmt(t)}" for t in result.taus]
    rows = [[fmt(t)] + [fmt(result.errors[i, j]) for i in range(len(result.taus))]
            for j, t in enumerate(result.times)]
    return _write(path, header, rows)


def write_orders(result, path):
    rows = []
    for i, (tau, e) in enumerate(zip(result.taus, result.terminal)):
        order = result.orders[i - 1] if i > 0 else None
        rows.append([fmt(tau), fmt(e), fmt(order)])
    return _write(path, ["tau", "terminal_epsilon", "observed_order"], rows)


def save_reference(snapshots, out_dir):
    """One ``.npy`` per sample time; ``np.save`` output is byte-deterministic."""
    files = []
    index = []
    for k, t in enumerate(sorted(snapshots)):
        name = f"ref_{k:04d}.npy"
        np.save(os.path.join(out_dir, name), np.asarray(snapshots[t]))
        files.append(os.path.join(out_dir, name))
        index.append({"t": t, "file": name})
    path = os.path.join(out_dir, "reference_index.json")
    with open(path, "w") as f:
        json.dump(index, f, indent=2)
    files.append(path)
    return files


def load_reference(ref_dir):
    with open(os.path.join(ref_dir, "reference_index.json")) as f:
        index = json.load(f)
    return {e["t"]: np.load(os.path.join(ref_dir, e["file"])) for e in index}
