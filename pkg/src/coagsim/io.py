"""CSV and summary writers.  Floats are written with 17 significant digits so
that files round-trip exactly and repeated runs are byte-identical."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .diagnostics import STOPPING_TIMES


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    if isinstance(v, (tuple, list)):
        return ", ".join(fmt(x) for x in v)
    if v is None:
        return "none"
    return str(v)


def write_rows(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")
    return path


def write_trajectory(path, traj) -> Path:
    cols = (traj.t_macro, traj.com, traj.energy, traj.grad_norm_inf, traj.n_segments)
    return write_rows(path, ("t_macro", "com", "energy", "grad_norm_inf", "n_segments"),
                      zip(*cols))


def write_snapshots(path, traj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for t, x in zip(traj.t_macro, traj.snapshots):
            fh.write(" ".join(fmt(v) for v in (t, *x)) + "\n")
    return path


def write_stopping(path, rows) -> Path:
    """``rows``: iterable of (run_id, seed, StoppingRecord)."""
    return write_rows(path, ("run_id", "seed", *STOPPING_TIMES),
                      ((rid, seed, *rec.row()) for rid, seed, rec in rows))


def write_rod_trajectory(path, traj) -> Path:
    n = traj.eta_tilde.shape[1]
    return write_rows(path, ("t_macro", *(f"eta_tilde_{i}" for i in range(n))),
                      ((t, *v) for t, v in zip(traj.t_macro, traj.eta_tilde)))


def write_events(path, events) -> Path:
    def members(m):
        return " ".join(str(i) for i in m)
    return write_rows(path, ("t_macro", "left_members", "right_members", "new_mass"),
                      ((e.t_macro, members(e.left_group), members(e.right_group), e.new_mass)
                       for e in events))


def write_summary(path, items) -> Path:
    """``key = value`` lines from an iterable of pairs."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for k, v in items:
            fh.write(f"{k} = {fmt(v)}\n")
    return path
