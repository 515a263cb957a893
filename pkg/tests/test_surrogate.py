import numpy as np
import pytest

from pdettc.euler import GridSpec, ICSpec, assemble_dataset, generate_dataset, solve_trajectory
from pdettc.surrogate import (Surrogate, TrainConfig, candidate_stream,
                              consecutive_pairs, finetune,
                              select_finetune_trajectories, train)
from pdettc.vit import (MODE_DETERMINISTIC, MODE_STOCHASTIC, ModelConfig)


def small_cfg(grid, dropout=0.1, embed=16):
    return ModelConfig(height=grid.nx, width=grid.ny, patch_size=3,
                       in_channels=5, out_channels=4, embed_dim=embed,
                       depth=1, n_heads=2, mlp_ratio=2.0, dropout_p=dropout)


@pytest.fixture(scope="module")
def rp_dataset():
    return generate_dataset(["rp"], 6, GridSpec(16, 16), seed=21,
                            split_fractions=(0.5, 0.25, 0.25))


@pytest.fixture(scope="module")
def rp_surrogate(rp_dataset):
    cfg = small_cfg(rp_dataset.grid)
    return train(rp_dataset, cfg, TrainConfig(lr=1e-3, epochs=2, batch_size=16,
                                              seed=3)).surrogate


def test_deterministic_infer_bit_identical(rp_surrogate, rp_dataset):
    u = rp_dataset.trajectories[0].snapshots[0]
    a = rp_surrogate.predict(u, MODE_DETERMINISTIC)
    b = rp_surrogate.predict(u, MODE_DETERMINISTIC)
    assert np.array_equal(a.fields(), b.fields())
    assert a.t == pytest.approx(u.t + rp_surrogate.dt_out)


def test_stochastic_streams_differ_20_of_20(rp_dataset):
    # D = 64 with dropout 0.1: distinct streams must give distinct fields
    cfg = ModelConfig(height=16, width=16, patch_size=3, in_channels=5,
                      out_channels=4, embed_dim=64, depth=2, n_heads=4,
                      mlp_ratio=2.0, dropout_p=0.1)
    s = Surrogate(cfg, rp_dataset.normalization, init_seed=1)
    u = rp_dataset.trajectories[0].snapshots[0]
    for pair in range(20):
        a = s.predict(u, MODE_STOCHASTIC, candidate_stream(7, 0, 2 * pair))
        b = s.predict(u, MODE_STOCHASTIC, candidate_stream(7, 0, 2 * pair + 1))
        assert not np.array_equal(a.fields(), b.fields()), f"pair {pair} identical"


def test_zero_dropout_stochastic_equals_deterministic(rp_dataset):
    cfg = small_cfg(rp_dataset.grid, dropout=0.0)
    s = Surrogate(cfg, rp_dataset.normalization, init_seed=2)
    u = rp_dataset.trajectories[1].snapshots[3]
    a = s.predict(u, MODE_STOCHASTIC, candidate_stream(1, 3, 0))
    b = s.predict(u, MODE_DETERMINISTIC)
    assert np.array_equal(a.fields(), b.fields())


def test_candidates_count_finite_and_replayable(rp_surrogate, rp_dataset):
    u = rp_dataset.trajectories[2].snapshots[0]
    c1 = rp_surrogate.sample_candidates(u, 8, rollout_seed=5, t_index=0)
    c2 = rp_surrogate.sample_candidates(u, 8, rollout_seed=5, t_index=0)
    assert len(c1) == 8
    for a, b in zip(c1, c2):
        assert np.array_equal(a.fields(), b.fields())
        assert np.all(np.isfinite(a.fields()))


def test_candidate_prefix_property(rp_surrogate, rp_dataset):
    u = rp_dataset.trajectories[2].snapshots[0]
    small = rp_surrogate.sample_candidates(u, 2, rollout_seed=9, t_index=4)
    big = rp_surrogate.sample_candidates(u, 6, rollout_seed=9, t_index=4)
    for a, b in zip(small, big[:2]):
        assert np.array_equal(a.fields(), b.fields())


def test_candidates_are_pure_functions_of_stream_id(rp_surrogate, rp_dataset):
    # permuting stream ids permutes candidates correspondingly
    u = rp_dataset.trajectories[2].snapshots[0]
    cands = rp_surrogate.sample_candidates(u, 4, rollout_seed=11, t_index=1)
    for i in (3, 1, 0, 2):
        direct = rp_surrogate.predict(u, MODE_STOCHASTIC, candidate_stream(11, 1, i))
        assert np.array_equal(direct.fields(), cands[i].fields())


def test_pack_inputs_has_time_channel(rp_surrogate):
    f = np.ones((1, 4, 16, 16))
    x = rp_surrogate.pack_inputs(f, [0.35])
    assert x.shape == (1, 5, 16, 16)
    assert np.all(x[:, 4] == 0.35)


def test_training_on_steady_dataset_reaches_1e6():
    grid = GridSpec(8, 8)
    specs = [ICSpec("gauss", {"rho0": r, "p0": p, "bumps": []}, seed=0)
             for r, p in [(0.9, 1.1), (1.0, 1.0), (1.1, 0.9), (1.2, 1.2)]]
    trajs = [solve_trajectory(s, grid) for s in specs]
    ds = assemble_dataset(trajs, grid, 0, ("gauss",), (1.0, 0.0, 0.0), 1.4)
    cfg = ModelConfig(height=8, width=8, patch_size=3, in_channels=5,
                      out_channels=4, embed_dim=16, depth=1, n_heads=2,
                      mlp_ratio=2.0, dropout_p=0.0)
    res = train(ds, cfg, TrainConfig(lr=5e-3, weight_decay=0.0, batch_size=16,
                                     epochs=300, seed=0))
    assert not res.diverged
    assert res.best_val_mse < 1e-6


def test_training_is_deterministic(rp_dataset):
    cfg = small_cfg(rp_dataset.grid)
    tc = TrainConfig(lr=1e-3, epochs=2, batch_size=8, seed=11)
    r1 = train(rp_dataset, cfg, tc)
    r2 = train(rp_dataset, cfg, tc)
    assert r1.history[-1]["train_loss"] == r2.history[-1]["train_loss"]
    assert r1.history[-1]["val_mse"] == r2.history[-1]["val_mse"]
    for n in r1.surrogate.store.names():
        assert np.array_equal(r1.surrogate.store[n].value, r2.surrogate.store[n].value)


def test_training_improves_over_initialization(rp_dataset):
    cfg = small_cfg(rp_dataset.grid)
    tc = TrainConfig(lr=1e-3, epochs=6, batch_size=16, seed=4)
    init = Surrogate(cfg, rp_dataset.normalization, init_seed=tc.seed)
    from pdettc.surrogate import _val_mse
    val_pairs = consecutive_pairs(rp_dataset, rp_dataset.split["val"])
    before = _val_mse(init, rp_dataset, val_pairs, 16)
    res = train(rp_dataset, cfg, tc)
    assert res.best_val_mse < before


def test_divergent_lr_aborts_with_flag(rp_dataset):
    cfg = small_cfg(rp_dataset.grid)
    res = train(rp_dataset, cfg, TrainConfig(lr=1e9, epochs=3, batch_size=8, seed=0))
    assert res.diverged
    assert np.all(np.isfinite(
        np.concatenate([p.value.ravel() for p in res.surrogate.store.params.values()])))


def test_finetune_zero_trajectories_is_identity(rp_surrogate, rp_dataset):
    out = finetune(rp_surrogate, rp_dataset, 0, TrainConfig(lr=1e-3, seed=0))
    assert out.history == [] and not out.diverged
    for n in rp_surrogate.store.names():
        assert np.array_equal(out.surrogate.store[n].value,
                              rp_surrogate.store[n].value)
    # and it is a copy, not an alias
    out.surrogate.store["pos"].value[...] += 1.0
    assert not np.array_equal(out.surrogate.store["pos"].value,
                              rp_surrogate.store["pos"].value)


def test_finetune_subset_selection_reproducible(rp_dataset):
    a = select_finetune_trajectories(rp_dataset, 2, seed=8)
    b = select_finetune_trajectories(rp_dataset, 2, seed=8)
    assert a == b
    assert len(a) == 2 == len(set(a))
    assert set(a) <= set(rp_dataset.split["train"])


def test_finetune_respects_budget(rp_surrogate, rp_dataset):
    with pytest.raises(ValueError, match="train trajectories"):
        finetune(rp_surrogate, rp_dataset, 99, TrainConfig(lr=1e-3, seed=0))


def test_checkpoint_roundtrip_preserves_predictions(tmp_path, rp_surrogate, rp_dataset):
    path = tmp_path / "s.ckpt"
    rp_surrogate.save(path)
    back = Surrogate.from_checkpoint(path)
    u = rp_dataset.trajectories[0].snapshots[2]
    assert np.array_equal(back.predict(u).fields(), rp_surrogate.predict(u).fields())
    assert back.store.step_count == rp_surrogate.store.step_count


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(lr=0.0)
    with pytest.raises(ValueError):
        TrainConfig(loss_p=0.5)
