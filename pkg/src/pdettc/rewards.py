"""Reward models over (current, candidate-next) snapshot pairs.

Three analytical rewards measure violation of discrete conservation
totals between consecutive snapshots; all are <= 0 with 0 meaning the
totals match exactly.  The learned process reward model (PRM) shares
the transformer family of the surrogate, reads the channel-concatenated
pair, and is trained with a contrastive triplet margin loss on
candidates ranked by MSE against ground truth.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .euler import (GAMMA_DEFAULT, Dataset, GridSpec, Normalization, Snapshot,
                    Trajectory, energy_density)
from .nn import AdamW, NonFiniteGradient
from .rng import RngStream, mix64
from .storage import (Checkpoint, load_checkpoint, read_container,
                      save_checkpoint, write_container)
from .surrogate import Surrogate
from .vit import (MODE_DETERMINISTIC, MODE_TRAIN, ModelConfig,
                  VisionTransformer)

_PRM_INIT_TAG = 0x9137
_PRM_SHUFFLE_TAG = 0x3F21
_PRM_DROPOUT_TAG = 0xD1
_TRIPLET_TAG = 0x7319

MOMENTUM_EPS_PER_CELL = 1e-12
DEGENERATE_MSE_SPREAD = 1e-14


class UndefinedReward(ArithmeticError):
    """Reward has no defined value for this pair (near-zero denominator)."""


@dataclass(frozen=True)
class RewardScore:
    value: float
    model_id: str


def _check_same_grid(u_t: Snapshot, u_next: Snapshot) -> None:
    if u_t.rho.shape != u_next.rho.shape:
        raise ValueError(f"grid mismatch {u_t.rho.shape} vs {u_next.rho.shape}")


def arm_mass(u_t: Snapshot, u_next: Snapshot) -> RewardScore:
    _check_same_grid(u_t, u_next)
    denom = float(u_t.rho.sum())
    if denom <= 0.0:
        raise ValueError("total density of the current snapshot must be positive")
    value = -abs(float(u_next.rho.sum()) - denom) / denom
    return RewardScore(value=value, model_id="arm_mass")


def arm_momentum(u_t: Snapshot, u_next: Snapshot, component: str = "x") -> RewardScore:
    _check_same_grid(u_t, u_next)
    if component not in ("x", "y"):
        raise ValueError(f"component must be 'x' or 'y', got {component!r}")
    v_t = u_t.vx if component == "x" else u_t.vy
    v_n = u_next.vx if component == "x" else u_next.vy
    denom = float((u_t.rho * v_t).sum())
    eps = MOMENTUM_EPS_PER_CELL * u_t.rho.size
    if abs(denom) <= eps:
        raise UndefinedReward(
            f"net {component}-momentum {denom:.3e} below threshold {eps:.3e}")
    value = -abs(float((u_next.rho * v_n).sum()) - denom) / abs(denom)
    return RewardScore(value=value, model_id=f"arm_momentum_{component}")


def arm_energy(u_t: Snapshot, u_next: Snapshot,
               gamma: float = GAMMA_DEFAULT) -> RewardScore:
    _check_same_grid(u_t, u_next)
    e_t = float(energy_density(u_t, gamma).sum())
    e_n = float(energy_density(u_next, gamma).sum())
    value = -abs(e_n - e_t) / e_t
    return RewardScore(value=value, model_id="arm_energy")


# ---------------------------------------------------------------------------
# Pluggable reward-model objects for the rollout engine


class MassReward:
    model_id = "arm_mass"

    def score(self, u_t: Snapshot, u_cand: Snapshot) -> float:
        return arm_mass(u_t, u_cand).value


class MomentumReward:
    def __init__(self, component: str):
        self.component = component
        self.model_id = f"arm_momentum_{component}"

    def score(self, u_t: Snapshot, u_cand: Snapshot) -> float:
        return arm_momentum(u_t, u_cand, self.component).value


class EnergyReward:
    model_id = "arm_energy"

    def __init__(self, gamma: float = GAMMA_DEFAULT):
        self.gamma = gamma

    def score(self, u_t: Snapshot, u_cand: Snapshot) -> float:
        return arm_energy(u_t, u_cand, self.gamma).value


class OracleMseReward:
    """Diagnostic upper bound: score = -MSE against the true next snapshot."""

    model_id = "oracle_mse"

    def __init__(self, truth: Trajectory, norm: Normalization | None):
        self.truth = truth
        self.norm = norm
        self._dt = float(truth.times[1] - truth.times[0])

    def score(self, u_t: Snapshot, u_cand: Snapshot) -> float:
        k = int(round(u_cand.t / self._dt))
        target = self.truth.snapshots[k]
        d = u_cand.fields() - target.fields()
        if self.norm is not None:
            d = d / self.norm.std[:, None, None]
        return -float(np.mean(d * d))


# ---------------------------------------------------------------------------
# Triplet construction


@dataclass(frozen=True)
class TripletRecord:
    """One ranked (best, median, worst) candidate triple for a pair."""

    current: Snapshot
    best: Snapshot
    median: Snapshot
    worst: Snapshot
    mse: tuple                      # (best, median, worst), ascending
    traj_index: int = -1
    t_index: int = -1

    def __post_init__(self):
        a, b, c = self.mse
        if not (a <= b <= c):
            raise ValueError(f"triplet mse must be ascending, got {self.mse}")


def _norm_mse(a_fields: np.ndarray, b_fields: np.ndarray,
              norm: Normalization | None) -> float:
    d = a_fields - b_fields
    if norm is not None:
        d = d / norm.std[:, None, None]
    return float(np.mean(d * d))


def build_prm_triplets(surrogate: Surrogate, dataset: Dataset, k_candidates: int,
                       seed: int, indices=None, log=None) -> list:
    """Rank K stochastic candidates per consecutive train pair.

    Keeps the argmin / rank-floor(K/2) / argmax candidates by MSE against
    the true next snapshot (ties -> lowest candidate index); skips pairs
    whose candidates are numerically indistinguishable.
    """
    if k_candidates < 3:
        raise ValueError("need at least 3 candidates per pair")
    if indices is None:
        indices = dataset.split["train"]
    norm = surrogate.norm
    records = []
    for ti in indices:
        tr = dataset.trajectories[ti]
        pair_seed = mix64(seed, _TRIPLET_TAG, ti)
        for k in range(len(tr) - 1):
            u_t = tr.snapshots[k]
            target = tr.snapshots[k + 1].fields()
            cands = surrogate.sample_candidates(u_t, k_candidates, pair_seed, t_index=k)
            mses = np.array([_norm_mse(c.fields(), target, norm) for c in cands])
            if float(mses.max() - mses.min()) < DEGENERATE_MSE_SPREAD:
                continue
            order = np.argsort(mses, kind="stable")
            i_best = int(order[0])
            i_median = int(order[k_candidates // 2])
            i_worst = int(np.argmax(mses))     # first index attaining the max
            records.append(TripletRecord(
                current=u_t, best=cands[i_best], median=cands[i_median],
                worst=cands[i_worst],
                mse=(float(mses[i_best]), float(mses[i_median]), float(mses[i_worst])),
                traj_index=ti, t_index=k))
        if log:
            log(f"triplets: trajectory {ti} done ({len(records)} records)")
    return records


def triplet_loss(r_min: float, r_median: float, r_max: float, margin: float) -> float:
    """Hinge pair pushing score(worst) + margin <= score(median) <= score(best) - margin.

    r_min/r_median/r_max are the PRM scores of the worst/median/best-MSE
    candidates (higher score = better candidate).
    """
    return max(0.0, r_min - r_median + margin) + max(0.0, r_median - r_max + margin)


def save_triplets(path, records: list, grid: GridSpec, gamma: float) -> None:
    header = {
        "record_type": "TRIPLET",
        "grid": {"nx": grid.nx, "ny": grid.ny, "lx": grid.lx, "ly": grid.ly},
        "gamma": gamma,
        "channel_order": ["rho", "vx", "vy", "p"],
        "slot_order": ["current", "best", "median", "worst"],
        "records": [
            {"traj": r.traj_index, "t_index": r.t_index,
             "t": r.current.t, "t_next": r.best.t, "mse": list(r.mse)}
            for r in records
        ],
    }
    if records:
        payload = np.stack([
            np.stack([r.current.fields(), r.best.fields(),
                      r.median.fields(), r.worst.fields()])
            for r in records
        ])
    else:
        payload = np.zeros((0, 4, 4, grid.nx, grid.ny))
    write_container(path, header, payload)


def load_triplets(path) -> list:
    header, payload = read_container(path, expect_type="TRIPLET")
    records = []
    for i, meta in enumerate(header["records"]):
        t, t_next = meta["t"], meta["t_next"]
        snaps = [Snapshot.from_fields(payload[i, j], t if j == 0 else t_next)
                 for j in range(4)]
        records.append(TripletRecord(
            current=snaps[0], best=snaps[1], median=snaps[2], worst=snaps[3],
            mse=tuple(meta["mse"]), traj_index=meta["traj"], t_index=meta["t_index"]))
    return records


# ---------------------------------------------------------------------------
# Process reward model


@dataclass(frozen=True)
class PRMConfig:
    backbone: ModelConfig
    margin: float = 0.1
    k_candidates: int = 100
    lr: float = 1e-4
    weight_decay: float = 0.0
    batch_triplets: int = 8
    epochs: int = 10
    patience: int = 3
    seed: int = 0
    orientation: str = "higher_better"   # audit flag: flips the loss binding

    def __post_init__(self):
        if self.margin <= 0.0:
            raise ValueError("margin must be positive")
        if self.k_candidates < 3:
            raise ValueError("need K >= 3 candidates")
        if self.orientation not in ("higher_better", "lower_better"):
            raise ValueError(f"unknown orientation {self.orientation!r}")


def prm_backbone_config(model_cfg: ModelConfig) -> ModelConfig:
    """Scalar-head twin of the surrogate: 2x(4 fields + time) input channels."""
    return ModelConfig(
        height=model_cfg.height, width=model_cfg.width,
        patch_size=model_cfg.patch_size, in_channels=10, out_channels=4,
        embed_dim=model_cfg.embed_dim, depth=model_cfg.depth,
        n_heads=model_cfg.n_heads, mlp_ratio=model_cfg.mlp_ratio,
        dropout_p=model_cfg.dropout_p, head="scalar")


class ProcessRewardModel:
    """Scalar-scoring transformer over a concatenated snapshot pair."""

    model_id = "prm"

    def __init__(self, config: ModelConfig, normalization: Normalization,
                 init_seed: int = 0, orientation: str = "higher_better",
                 model: VisionTransformer | None = None):
        if config.head != "scalar":
            raise ValueError("PRM needs a scalar head")
        self.config = config
        self.norm = normalization
        self.init_seed = init_seed
        self.orientation = orientation
        self.model = model or VisionTransformer(
            config, RngStream(init_seed, mix64(_PRM_INIT_TAG)))
        self.store = self.model.param_store()

    def pack_pair(self, cur_fields, cur_t, cand_fields, cand_t) -> np.ndarray:
        """(B,4,H,W) x2 plus times -> (B,10,H,W) normalized input."""
        b, _, h, w = cur_fields.shape

        def tchan(t):
            return np.broadcast_to(
                np.asarray(t, dtype=np.float64)[:, None, None], (b, h, w))[:, None]

        return np.concatenate([
            self.norm.apply(cur_fields), tchan(cur_t),
            self.norm.apply(cand_fields), tchan(cand_t),
        ], axis=1)

    def score_batch(self, cur_fields, cur_t, cand_fields, cand_t) -> np.ndarray:
        x = self.pack_pair(cur_fields, np.atleast_1d(cur_t),
                           cand_fields, np.atleast_1d(cand_t))
        return self.model.forward(x, MODE_DETERMINISTIC)

    def score(self, u_t: Snapshot, u_cand: Snapshot) -> float:
        s = self.score_batch(u_t.fields()[None], [u_t.t],
                             u_cand.fields()[None], [u_cand.t])
        return float(s[0])

    def save(self, path) -> None:
        save_checkpoint(path, "prm", self.config, self.store, self.norm,
                        extra={"init_seed": self.init_seed,
                               "orientation": self.orientation})

    @classmethod
    def from_checkpoint(cls, source) -> "ProcessRewardModel":
        ckpt = source if isinstance(source, Checkpoint) else load_checkpoint(source)
        if ckpt.model_kind != "prm":
            raise ValueError(f"checkpoint holds a {ckpt.model_kind!r} model")
        prm = cls(ckpt.config, ckpt.normalization,
                  init_seed=ckpt.extra.get("init_seed", 0),
                  orientation=ckpt.extra.get("orientation", "higher_better"))
        prm.store.load_values(ckpt.values)
        prm.store.step_count = ckpt.step_count
        return prm


def prm_score(prm: ProcessRewardModel, u_t: Snapshot, u_cand: Snapshot) -> RewardScore:
    return RewardScore(value=prm.score(u_t, u_cand), model_id="prm")


def ranking_accuracy(prm: ProcessRewardModel, triplets: list,
                     batch: int = 32) -> float:
    """Fraction of triplets whose best candidate outscores the worst."""
    if not triplets:
        return np.nan
    correct = 0
    for start in range(0, len(triplets), batch):
        chunk = triplets[start:start + batch]
        cur = np.stack([r.current.fields() for r in chunk])
        cur_t = np.array([r.current.t for r in chunk])
        best = np.stack([r.best.fields() for r in chunk])
        worst = np.stack([r.worst.fields() for r in chunk])
        cand_t = np.array([r.best.t for r in chunk])
        s_best = prm.score_batch(cur, cur_t, best, cand_t)
        s_worst = prm.score_batch(cur, cur_t, worst, cand_t)
        if prm.orientation == "higher_better":
            correct += int(np.sum(s_best > s_worst))
        else:
            correct += int(np.sum(s_best < s_worst))
    return correct / len(triplets)


@dataclass
class PRMTrainResult:
    prm: ProcessRewardModel
    history: list = field(default_factory=list)
    diverged: bool = False

    @property
    def best_accuracy(self) -> float:
        accs = [h["holdout_accuracy"] for h in self.history
                if np.isfinite(h["holdout_accuracy"])]
        return max(accs) if accs else np.nan


def train_prm(triplets: list, prm_cfg: PRMConfig, normalization: Normalization,
              holdout: list | None = None, log=None) -> PRMTrainResult:
    """Minimize the mean triplet margin loss over ranked candidate triples.

    ``holdout`` triplets drive early stopping on pairwise ranking
    accuracy; without them the train loss is used.
    """
    if not triplets:
        raise ValueError("need at least one triplet")
    prm = ProcessRewardModel(prm_backbone_config_like(prm_cfg.backbone),
                             normalization, init_seed=prm_cfg.seed,
                             orientation=prm_cfg.orientation)
    opt = AdamW(lr=prm_cfg.lr, weight_decay=prm_cfg.weight_decay)
    margin = prm_cfg.margin
    flip = prm_cfg.orientation == "lower_better"
    history = []
    best = (-np.inf, prm.store.values_copy(), prm.store.step_count)
    stale = 0
    diverged = False
    for epoch in range(prm_cfg.epochs):
        t0 = time.perf_counter()
        order = RngStream(prm_cfg.seed, mix64(_PRM_SHUFFLE_TAG, epoch)).permutation(len(triplets))
        losses = []
        for bi, start in enumerate(range(0, len(order), prm_cfg.batch_triplets)):
            sel = order[start:start + prm_cfg.batch_triplets]
            chunk = [triplets[j] for j in sel]
            nb = len(chunk)
            cur = np.repeat(np.stack([r.current.fields() for r in chunk]), 3, axis=0)
            cur_t = np.repeat(np.array([r.current.t for r in chunk]), 3)
            cand = np.stack([f for r in chunk
                             for f in (r.worst.fields(), r.median.fields(), r.best.fields())])
            cand_t = np.repeat(np.array([r.best.t for r in chunk]), 3)
            x = prm.pack_pair(cur, cur_t, cand, cand_t)
            rng = RngStream(prm_cfg.seed, mix64(_PRM_DROPOUT_TAG, epoch, bi))
            scores = prm.model.forward(x, MODE_TRAIN, rng).reshape(nb, 3)
            s_w, s_m, s_b = scores[:, 0], scores[:, 1], scores[:, 2]
            if flip:
                s_w, s_b = s_b, s_w
            h1 = s_w - s_m + margin
            h2 = s_m - s_b + margin
            loss = float(np.mean(np.maximum(h1, 0.0) + np.maximum(h2, 0.0)))
            g1 = (h1 > 0.0).astype(np.float64) / nb
            g2 = (h2 > 0.0).astype(np.float64) / nb
            d = np.zeros((nb, 3))
            w_col, b_col = (2, 0) if flip else (0, 2)
            d[:, w_col] += g1
            d[:, 1] += g2 - g1
            d[:, b_col] -= g2
            if not np.isfinite(loss):
                diverged = True
                break
            prm.store.zero_grad()
            prm.model.backward(d.reshape(-1))
            try:
                opt.step(prm.store)
            except NonFiniteGradient:
                diverged = True
                break
            losses.append(loss)
        if diverged:
            break
        acc = ranking_accuracy(prm, holdout) if holdout else np.nan
        track = acc if holdout else -float(np.mean(losses))
        if track > best[0]:
            best = (track, prm.store.values_copy(), prm.store.step_count)
            stale = 0
        else:
            stale += 1
        rec = {"epoch": epoch, "train_loss": float(np.mean(losses)),
               "holdout_accuracy": acc, "seconds": time.perf_counter() - t0}
        history.append(rec)
        if log:
            log(rec)
        if stale > prm_cfg.patience:
            break
    prm.store.load_values(best[1])
    prm.store.step_count = best[2]
    return PRMTrainResult(prm=prm, history=history, diverged=diverged)


def prm_backbone_config_like(cfg: ModelConfig) -> ModelConfig:
    """Accept either a surrogate-style or ready scalar-head config."""
    if cfg.head == "scalar" and cfg.in_channels == 10:
        return cfg
    return prm_backbone_config(cfg)
