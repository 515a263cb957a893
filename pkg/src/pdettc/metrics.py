"""Rollout evaluation: MSE curves, sample gain, conservation traces.

MSE is averaged over the four physical channels and all cells, in
normalized (per-channel z-score) units when statistics are supplied, so
channels with different scales contribute comparably.  Sample gain is
the paired ratio MSE_B / MSE_{B=1}; the table-level aggregate is
(1 - mean ratio) reported in percent.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .euler import GAMMA_DEFAULT, Normalization, Snapshot, Trajectory
from .rewards import UndefinedReward, arm_energy, arm_mass, arm_momentum
from .ttc import RolloutRecord

CSV_COLUMNS = ("dataset", "family", "ic_seed", "model", "reward", "B", "t",
               "mse", "sg", "mass_arm", "mom_x_arm", "mom_y_arm", "energy_arm")


def mse(a: Snapshot, b: Snapshot, norm: Normalization | None = None) -> float:
    """Mean squared difference over 4 channels x cells."""
    if a.rho.shape != b.rho.shape:
        raise ValueError(f"grid mismatch {a.rho.shape} vs {b.rho.shape}")
    d = a.fields() - b.fields()
    if norm is not None:
        d = d / norm.std[:, None, None]
    return float(np.mean(d * d))


def sample_gain(mse_b: float, mse_1: float) -> float:
    """Paired per-sample ratio; below 1 means the B-run improved."""
    if mse_1 <= 0.0:
        raise ValueError("baseline MSE must be positive")
    return mse_b / mse_1


def aggregate_gain(ratios) -> float:
    """(1 - mean sample-gain ratio) in percent."""
    ratios = list(ratios)
    if not ratios:
        raise ValueError("need at least one ratio")
    return (1.0 - float(np.mean(ratios))) * 100.0


def conservation_trace(record: RolloutRecord, gamma: float = GAMMA_DEFAULT) -> dict:
    """ARM values along the chosen trajectory, one entry per step.

    Momentum entries where the reward is undefined (near-zero total)
    are NaN.
    """
    states = record.states()
    n = len(states) - 1
    out = {k: np.full(n, np.nan) for k in ("mass", "momentum_x", "momentum_y", "energy")}
    for k in range(n):
        u_t, u_n = states[k], states[k + 1]
        out["mass"][k] = arm_mass(u_t, u_n).value
        out["energy"][k] = arm_energy(u_t, u_n, gamma).value
        for comp in ("x", "y"):
            try:
                out[f"momentum_{comp}"][k] = arm_momentum(u_t, u_n, comp).value
            except UndefinedReward:
                pass
    return out


@dataclass
class EvalReport:
    """Flat per-(ic, t, B, reward) rows plus per-(reward, B) aggregates."""

    dataset_label: str
    model_label: str
    rows: list = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)   # (reward, B) -> percent gain
    final_mse: dict = field(default_factory=dict)    # (reward, B) -> mean final MSE
    curves: dict = field(default_factory=dict)       # (reward, B) -> mean MSE per t

    def summary_dict(self) -> dict:
        agg = {}
        fin = {}
        for (reward, b), v in self.aggregates.items():
            agg.setdefault(reward, {})[str(b)] = v
        for (reward, b), v in self.final_mse.items():
            fin.setdefault(reward, {})[str(b)] = v
        return {"dataset": self.dataset_label, "model": self.model_label,
                "aggregate_gain_percent": agg, "mean_final_mse": fin}


def evaluate(sweeps: dict, trajectories: list, norm: Normalization | None,
             gamma: float = GAMMA_DEFAULT, dataset_label: str = "",
             model_label: str = "") -> EvalReport:
    """Build an EvalReport from {reward_name: {(ic_index, B): record}}.

    Sample gains pair each record against the B=1 record of the same
    reward sweep and IC; they are omitted when no B=1 run exists.
    """
    report = EvalReport(dataset_label=dataset_label, model_label=model_label)
    for reward, records in sweeps.items():
        b_values = sorted({b for (_, b) in records})
        ic_values = sorted({i for (i, _) in records})
        per_t_mse = {}
        for (ic, b), rec in records.items():
            truth = trajectories[ic]
            errs = [mse(s, truth.snapshots[k + 1], norm)
                    for k, s in enumerate(rec.chosen)]
            per_t_mse[(ic, b)] = errs
        for b in b_values:
            finals, ratios_final = [], []
            curve = np.zeros(len(per_t_mse[(ic_values[0], b)]))
            for ic in ic_values:
                rec = records[(ic, b)]
                errs = per_t_mse[(ic, b)]
                base = per_t_mse.get((ic, 1))
                trace = conservation_trace(rec, gamma)
                for k, e in enumerate(errs):
                    sg = sample_gain(e, base[k]) if base else None
                    report.rows.append({
                        "dataset": dataset_label,
                        "family": rec.ic_family,
                        "ic_seed": rec.ic_seed,
                        "model": model_label,
                        "reward": reward,
                        "B": b,
                        "t": k + 1,
                        "mse": e,
                        "sg": sg,
                        "mass_arm": trace["mass"][k],
                        "mom_x_arm": trace["momentum_x"][k],
                        "mom_y_arm": trace["momentum_y"][k],
                        "energy_arm": trace["energy"][k],
                    })
                curve += np.asarray(errs)
                finals.append(errs[-1])
                if base:
                    ratios_final.append(sample_gain(errs[-1], base[-1]))
            report.curves[(reward, b)] = (curve / len(ic_values)).tolist()
            report.final_mse[(reward, b)] = float(np.mean(finals))
            if ratios_final:
                report.aggregates[(reward, b)] = aggregate_gain(ratios_final)
    return report


def write_rows_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        w.writeheader()
        for row in rows:
            out = dict(row)
            for k, v in out.items():
                if v is None or (isinstance(v, float) and not np.isfinite(v)):
                    out[k] = ""
            w.writerow(out)


def write_summary_json(path, report: EvalReport, extra: dict | None = None) -> None:
    doc = report.summary_dict()
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
