import json
from pathlib import Path

import numpy as np
import pytest

from hgcl import autodiff as ad
from hgcl.evaluation import evaluate_classification
from hgcl.graph import load_graph
from hgcl.synthetic import SyntheticSpec, generate_synthetic
from hgcl.trainer import (
    ConfigError,
    TrainConfig,
    TrainingError,
    export_embeddings,
    forward,
    init_params,
    load_checkpoint,
    preprocess,
    read_embeddings,
    save_checkpoint,
    save_loss_history,
    train,
)

from helpers import brute_force_correlation, brute_force_samples, random_hetero_graph

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="module")
def toy():
    return load_graph(FIXTURES / "toy")


def small(**kw):
    return TrainConfig(**{"hidden_dim": 16, "out_dim": 8, **kw})


# ---------------------------------------------------------------- config


def test_defaults():
    cfg = TrainConfig()
    assert (cfg.lr, cfg.hidden_dim, cfg.out_dim, cfg.tau, cfg.lam, cfg.eps_t) == (1e-4, 128, 64, 0.4, 0.5, 1.0)
    assert (cfg.epochs, cfg.patience, cfg.min_rel_improvement) == (200, 20, 1e-4)
    assert (cfg.beta1, cfg.beta2, cfg.adam_eps) == (0.9, 0.999, 1e-8)
    assert cfg.activations() == {"encoder": "elu", "attention": "leaky_relu", "aggregate": "elu",
                                 "semantic": "tanh"}
    assert TrainConfig.compact().out_dim == 32


@pytest.mark.parametrize("bad", [
    {"eps_a": 0.5, "eps_t": -1.0}, {"hidden_dim": 0}, {"tau": 0.0}, {"lam": 1.5}, {"eps_f": {"P": -0.1}},
    {"deltas": {"PAP": 1.2}}, {"views": "all"}, {"sampling": "random"}, {"epochs": -1}, {"lr": 0.0},
])
def test_invalid_configs(bad):
    with pytest.raises(ConfigError):
        TrainConfig(**bad)


def test_config_json_round_trip(tmp_path):
    cfg = TrainConfig(eps_f={"P": 0.3, "A": 0.7}, deltas={"PAP": 0.4}, seed=9)
    path = tmp_path / "c.json"
    path.write_text(cfg.to_json())
    back = TrainConfig.from_json(path)
    assert back == cfg and back.hash() == cfg.hash()
    assert cfg.hash() != cfg.replace(seed=10).hash()
    assert back.eps_f_for("A") == 0.7 and back.eps_f_for("S") == 0.5
    assert back.delta_for("PAP") == 0.4 and back.delta_for("PSP") == 1.0


def test_config_rejects_unknown_and_malformed(tmp_path):
    with pytest.raises(ConfigError, match="unknown config field"):
        TrainConfig.from_dict({"learning_rate": 0.1})
    (tmp_path / "bad.json").write_text('{"epochs": 3,\n "lr": }')
    with pytest.raises(ConfigError, match=":2:"):
        TrainConfig.from_json(tmp_path / "bad.json")


# ---------------------------------------------------------------- preprocessing


def test_preprocess_shapes_and_determinism(toy):
    cfg = small()
    a, b = preprocess(toy, cfg), preprocess(toy, cfg)
    n = toy.num_targets
    assert a.similarity.shape == a.samples.positive.shape == (n, n)
    assert len(a.adjacencies) == len(toy.metapaths)
    for t in toy.node_types:
        assert a.attr.homogeneous[t].shape == (toy.node_counts[t],) * 2
    assert a.samples.positive.tobytes() == b.samples.positive.tobytes()


@pytest.mark.parametrize("seed", range(3))
def test_preprocess_samples_match_pairwise_oracle(seed):
    g = random_hetero_graph(seed, max_nodes=50)
    cfg = TrainConfig(eps_a=0.2, eps_t=1.0, deltas={"PAP": 0.6, "PSP": 0.4, "PP": 1.0, "PAPSP": 0.2})
    prep = preprocess(g, cfg)
    x = g.attributes["P"]
    sim = [[float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b))) for b in x] for a in x]
    corr = brute_force_correlation(g, {m.name: cfg.delta_for(m.name) for m in g.metapaths})
    pos, _ = brute_force_samples(np.array(sim), corr, cfg.eps_a, cfg.eps_t)
    assert [set(prep.samples.positives(i)) for i in range(g.num_targets)] == pos


def test_graph_without_metapaths(toy):
    from dataclasses import replace
    with pytest.raises(ConfigError, match="meta-paths"):
        preprocess(replace(toy, metapaths=()), small())


# ---------------------------------------------------------------- training


def test_zero_epochs_returns_initialised_model(toy):
    model = train(toy, small(epochs=0))
    assert model.loss_history == []
    assert model.embeddings.shape == (toy.num_targets, 16)
    assert np.isfinite(model.embeddings).all()


def test_same_seed_is_bit_identical(toy):
    a, b = train(toy, small(epochs=5)), train(toy, small(epochs=5))
    assert a.loss_history == b.loss_history
    assert a.embeddings.tobytes() == b.embeddings.tobytes()
    c = train(toy, small(epochs=5, seed=1))
    assert c.loss_history != a.loss_history


def test_loss_strictly_decreases_first_ten_epochs_default_lr(toy):
    h = train(toy, TrainConfig(epochs=10)).loss_history
    assert len(h) == 10 and np.isfinite(h).all()
    assert all(b < a for a, b in zip(h, h[1:]))


def test_separable_dataset_learns():
    g = generate_synthetic(SyntheticSpec(per_class=30, aux_sizes={"A": 60, "S": 6}, target_dim=16,
                                         signal_to_noise=2.0, seed=5))
    h = train(g, small(epochs=200, lr=1e-3)).loss_history
    assert h[-1] < h[0]


def test_every_parameter_receives_gradient():
    # a meta-path whose neighborhoods are all self-only would leave its attention vector without signal
    g = generate_synthetic(SyntheticSpec(per_class=8, aux_sizes={"A": 12, "S": 4}, target_dim=6, aux_dim=5,
                                         edge_probs={"A": (0.3, 0.1), "S": (0.5, 0.2)}, seed=4))
    cfg = small(eps_a=0.0, eps_f=0.0, eps_r=0.0)
    prep = preprocess(g, cfg)
    params = init_params(g, cfg, prep)
    ad.backward(forward(params, g, cfg, prep).loss)
    dead = [k for k, p in params.items() if not np.any(p.grad)]
    assert dead == []


def test_nan_loss_names_first_op(toy):
    with pytest.raises(TrainingError, match="exp"):
        train(toy, small(epochs=1, tau=1e-300))


def test_early_stopping_on_plateau(toy):
    model = train(toy, small(epochs=200, lr=1e-12, patience=5))
    assert model.stopped_early
    assert len(model.loss_history) == 6


@pytest.mark.parametrize("views, width", [("topo", 8), ("attr", 8), ("both", 16)])
def test_single_view_variants(toy, views, width):
    model = train(toy, small(epochs=2, views=views))
    assert model.embeddings.shape == (toy.num_targets, width)
    assert (model.z_attr is None) == (views == "topo")
    assert (model.z_topo is None) == (views == "attr")


# ---------------------------------------------------------------- persistence


def test_export_round_trip_and_pipeline_equivalence(toy, tmp_path):
    model = train(toy, small(epochs=3))
    export_embeddings(model, tmp_path / "e.csv")
    back = read_embeddings(tmp_path / "e.csv")
    assert back.tobytes() == model.embeddings.tobytes()
    header = (tmp_path / "e.csv").read_text().splitlines()[0].split(",")
    assert header == ["node_index"] + [f"v{k}" for k in range(16)]
    mem = evaluate_classification(model.embeddings, toy.labels, (0.4,), 3, 0)
    disk = evaluate_classification(back, toy.labels, (0.4,), 3, 0)
    assert mem.classification == disk.classification


def test_export_ten_nodes_width_128(tmp_path):
    z = np.random.default_rng(0).normal(size=(10, 128))
    export_embeddings(z, tmp_path / "e.csv")
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert len(lines) == 11 and all(len(l.split(",")) == 129 for l in lines)


def test_checkpoint_round_trip(toy, tmp_path):
    model = train(toy, small(epochs=3, deltas={"PAP": 0.6}))
    save_checkpoint(model, tmp_path / "c.npz")
    back = load_checkpoint(tmp_path / "c.npz")
    assert back.config == model.config
    assert back.loss_history == model.loss_history
    assert back.params.keys() == model.params.keys()
    for k in model.params:
        assert back.params[k].tobytes() == model.params[k].tobytes()
    assert back.embeddings.tobytes() == model.embeddings.tobytes()
    with np.load(tmp_path / "c.npz") as raw:
        assert raw["param/topo.in.W"].dtype.str == "<f8"
        assert str(raw["config_hash"]) == model.config.hash()


def test_loss_history_csv(toy, tmp_path):
    model = train(toy, small(epochs=2))
    save_loss_history(model, tmp_path / "l.csv")
    rows = (tmp_path / "l.csv").read_text().splitlines()
    assert rows[0] == "epoch,loss,config_hash"
    assert rows[1].split(",")[2] == model.config.hash()
    assert float(rows[2].split(",")[1]) == model.loss_history[1]
