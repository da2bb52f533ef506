"""Reproducible file outputs: CSV traces/sweeps and JSON summaries.

Numbers are printed with 17 significant digits so round-tripping is
bit-faithful, and every file starts with the fully resolved configuration as
comment lines, making each output self-describing.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

FMT = "%.17g"


def _num(x) -> str:
    return FMT % float(x)


def config_header(config) -> list[str]:
    lines = [f"# config source: {config.source}"]
    lines += [f"# {key} = {value}" for key, value in config.resolved_items()]
    return lines


def write_correlation_csv(path, trace, header_lines=()) -> None:
    """Columns: tau, re, im."""
    rows = ["tau,re,im"]
    rows += [",".join((_num(t), _num(v.real), _num(v.imag)))
             for t, v in zip(trace.lags, trace.values)]
    _write_lines(path, list(header_lines) + rows)


def write_trajectory_csv(path, traj, header_lines=()) -> None:
    """Columns: t, p1..p4 (level populations), re/im of tr(mu_hat rho_c)."""
    pops = traj.populations()  # matrix order: levels 4, 3, 2, 1
    rows = ["t,p1,p2,p3,p4,re_rho_c_trace,im_rho_c_trace"]
    for k in range(traj.times.size):
        rows.append(",".join((
            _num(traj.times[k]),
            _num(pops[k, 3]), _num(pops[k, 2]), _num(pops[k, 1]), _num(pops[k, 0]),
            _num(traj.coherence[k].real), _num(traj.coherence[k].imag))))
    _write_lines(path, list(header_lines) + rows)


def write_sweep_csv(path, result, header_lines=()) -> None:
    """Columns: value, dn_pos, dn_neg, effect."""
    rows = ["value,dn_pos,dn_neg,effect"]
    effect = result.effect
    for k in range(result.values.size):
        rows.append(",".join((_num(result.values[k]), _num(result.dn_pos[k]),
                              _num(result.dn_neg[k]), _num(effect[k]))))
    _write_lines(path, list(header_lines) + rows)


def write_json(path, payload: dict, config=None) -> None:
    if config is not None:
        payload = {"config": dict(config.resolved_items()), **payload}
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=False,
                                     default=_jsonify) + "\n")


def append_jsonl(path, record: dict) -> None:
    with open(path, "a") as fh:
        fh.write(json.dumps(record, sort_keys=False, default=_jsonify) + "\n")


def _jsonify(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _write_lines(path, lines) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")
