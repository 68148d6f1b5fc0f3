import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import gradcases
import oracles
from eppnet import autodiff as ad
from eppnet import modalities as mod
from eppnet import parsemap as pm
from eppnet.autodiff import Parameter
from eppnet.branches import scores as sc
from eppnet.branches.cnn import CnnConfig, CnnModel, images_to_input
from eppnet.branches.gcn import GcnConfig, GcnModel, build_adjacency
from eppnet.branches.training import (
    ArrayDataset,
    FeatureMapDataset,
    accuracy,
    clip_gradients,
    evaluate_branch,
    train_branch,
)
from eppnet.errors import EmptyDataset, FormatError, IndexOutOfRange, LabelOutOfRange, ShapeMismatch
from eppnet.optim import OptimizerConfig

NTU_EDGES = mod.ntu_topology().edges()


# -- adjacency ---------------------------------------------------------------

def test_adjacency_examples():
    assert build_adjacency([], 1).normalized.tolist() == [[1.0]]
    np.testing.assert_allclose(build_adjacency([(0, 1)], 2).normalized, [[0.5, 0.5], [0.5, 0.5]], atol=1e-7)
    ring = build_adjacency([(i, (i + 1) % 6) for i in range(6)], 6).normalized
    assert np.all(ring.sum(axis=1) == 1.0)
    with pytest.raises(IndexOutOfRange):
        build_adjacency([(0, 3)], 3)


def test_adjacency_matches_oracle_and_invariants():
    a = build_adjacency(NTU_EDGES, 25)
    np.testing.assert_allclose(a.normalized, oracles.adjacency_ref(NTU_EDGES, 25), rtol=1e-14)
    assert np.array_equal(a.normalized, a.normalized.T)
    assert np.all(np.diag(a.normalized) > 0)
    # rows of an irregular graph may sum past 1; the spectrum is what stays bounded
    eig = np.linalg.eigvalsh(a.normalized)
    assert eig.max() == pytest.approx(1.0, abs=1e-12) and eig.min() > -1
    off = a.learned_offset()
    assert off.shape == (25, 25) and not off.data.any()


# -- graph branch ------------------------------------------------------------

def test_single_vertex_block():
    cfg = GcnConfig(classes=1, blocks=1, channels=(1,), temporal_kernel=1, in_channels=1)
    model = GcnModel(cfg, build_adjacency([], 1), dtype=np.float64)
    model.params["block0.spatial.weight"].data[...] = 2.0
    model.params["block0.temporal.weight"].data[...] = 1.0
    model.params["fc.weight"].data[...] = 1.0
    x = np.ones((1, 1, 1, 1, 1))
    spatial = ad.relu(ad.vertex_mix(ad.matmul(x.reshape(1, 1, 1, 1), model.params["block0.spatial.weight"]),
                                    model.adjacency.normalized))
    assert spatial.data.ravel().tolist() == [2.0]
    # identity temporal step, then the residual adds the input back
    assert model.forward(x).data.ravel().tolist() == [3.0]


def test_zero_input_gives_zero_scores():
    model = GcnModel(GcnConfig(classes=4, blocks=3), build_adjacency(NTU_EDGES, 25), seed=1)
    out = model.forward(np.zeros((2, 3, 6, 25, 2), np.float32))
    assert out.shape == (2, 4) and not out.data.any()


def test_gcn_shape_checks():
    model = GcnModel(GcnConfig(classes=4, blocks=2), build_adjacency(NTU_EDGES, 25))
    with pytest.raises(ShapeMismatch):
        model.forward(np.zeros((1, 3, 4, 24, 1)))
    with pytest.raises(ShapeMismatch):
        model.forward(np.zeros((3, 4, 25, 1)))
    with pytest.raises(ValueError):
        GcnConfig(classes=2, temporal_kernel=4)


def test_block_widths_follow_stages():
    assert GcnConfig(classes=2).block_widths() == [16] * 5 + [32] * 5
    assert GcnConfig(classes=2, blocks=3, channels=(8,)).block_widths() == [8, 8, 8]


def _random_offset(model, seed):
    model.params["adj_offset"].data[...] = np.random.default_rng(seed).normal(size=(25, 25)) * 0.05


def permuted_scores(seed, blocks=10):
    """Scores of a model and of its vertex-relabeled twin on relabeled input."""
    rng = np.random.default_rng(seed)
    perm = rng.permutation(25)
    inv = np.argsort(perm)  # new index of old vertex
    cfg = GcnConfig(classes=5, blocks=blocks)
    base = GcnModel(cfg, build_adjacency(NTU_EDGES, 25), seed=seed)
    _random_offset(base, seed)
    twin = GcnModel(cfg, build_adjacency([(inv[i], inv[j]) for i, j in NTU_EDGES], 25), seed=seed)
    twin.params["adj_offset"].data[...] = base.params["adj_offset"].data[np.ix_(perm, perm)]
    x = rng.normal(size=(2, 3, 8, 25, 2)).astype(np.float32)
    return base.forward(x).data, twin.forward(x[:, :, :, perm]).data


@pytest.mark.parametrize("seed", range(3))
def test_vertex_permutation_invariance(seed):
    a, b = permuted_scores(seed)
    np.testing.assert_allclose(a, b, atol=1e-5, rtol=0)


def test_forward_matches_double_precision_oracle():
    cfg = GcnConfig(classes=4, blocks=3, channels=(4, 6), temporal_kernel=3)
    model = GcnModel(cfg, build_adjacency(NTU_EDGES, 25), seed=7, dtype=np.float64)
    rng = np.random.default_rng(7)
    for p in model.parameters():
        if p.name.endswith("bias"):
            p.data[...] = rng.normal(size=p.shape) * 0.1
    x = rng.normal(size=(2, 3, 5, 25, 2))
    model.fit_input_scale(x)
    params = {k: v.data for k, v in model.params.items()}
    ref = oracles.gcn_forward_ref(x, model.adjacency.normalized, params, cfg.blocks, 1, model.input_scale)
    np.testing.assert_allclose(model.forward(x).data, ref, rtol=1e-10, atol=1e-12)
    f32 = GcnModel(cfg, build_adjacency(NTU_EDGES, 25), seed=7)
    f32.load_state_dict(model.state_dict())
    np.testing.assert_allclose(f32.forward(x.astype(np.float32)).data, ref, rtol=1e-4, atol=1e-5)


def test_input_scale_is_channel_rms():
    model = GcnModel(GcnConfig(classes=2, blocks=1), build_adjacency(NTU_EDGES, 25))
    x = np.zeros((2, 3, 4, 25, 1))
    x[:, 0] = 2.0
    x[:, 1] = -3.0
    model.fit_input_scale(x)
    assert model.input_scale.tolist() == [2.0, 3.0, 1.0]


@pytest.mark.parametrize("branch", ["gcn", "cnn"])
def test_branch_gradients(branch):
    make = gradcases.gcn_case if branch == "gcn" else gradcases.cnn_case
    errors = gradcases.clean_cases(make)
    assert len(errors) == gradcases.CASES and max(errors) < gradcases.TOL


# -- convolutional branch ----------------------------------------------------

def test_cnn_zero_input_and_shapes():
    model = CnnModel(CnnConfig(classes=3), seed=0)
    out = model.forward(np.zeros((2, 3, 32, 48), np.float32))
    assert out.shape == (2, 3) and not out.data.any()
    assert model.forward(np.ones((1, 3, 16, 16), np.float32)).shape == (1, 3)
    with pytest.raises(ShapeMismatch):
        model.forward(np.zeros((1, 3, 8, 8)))
    with pytest.raises(ValueError):
        CnnConfig(classes=3, blocks=2, channels=(4, 4, 4))


def _cnn_reference(model, x):
    h = np.asarray(x, dtype=np.float64)
    outs = []
    for n in range(len(h)):
        a = h[n]
        for l in range(model.cfg.blocks):
            k = model.params[f"block{l}.conv.weight"].data.astype(np.float64)
            b = model.params[f"block{l}.conv.bias"].data.astype(np.float64)
            a = np.maximum(oracles.conv2d_loop(a, k, 1, k.shape[-1] // 2) + b[:, None, None], 0)
            C, H, W = a.shape
            a = a[:, :H // 2 * 2, :W // 2 * 2].reshape(C, H // 2, 2, W // 2, 2).max(axis=(2, 4))
        outs.append(a.mean(axis=(1, 2)) @ model.params["fc.weight"].data + model.params["fc.bias"].data)
    return np.array(outs)


def test_cnn_matches_double_precision_reference():
    model = CnnModel(CnnConfig(classes=4, channels=(3, 4, 4, 5)), seed=11)
    rng = np.random.default_rng(11)
    for p in model.parameters():
        if p.name.endswith("bias"):
            p.data[...] = rng.normal(size=p.shape) * 0.1
    images = rng.integers(0, 256, size=(2, 17, 19, 3), dtype=np.uint8)
    x = images_to_input(images)
    assert x.shape == (2, 3, 17, 19) and x.max() <= 1.0
    np.testing.assert_allclose(model.forward(x).data, _cnn_reference(model, x), rtol=1e-4, atol=1e-5)


# -- training ----------------------------------------------------------------

def _toy_pose_data(n=12, K=3, seed=0):
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % K
    x = rng.normal(size=(n, 3, 6, 25, 1)).astype(np.float32) * 0.1
    x[:, 0, :, :, 0] += labels[:, None, None]  # class shifts the x channel
    return ArrayDataset(x, labels)


def _toy_gcn(K=3, seed=0):
    return GcnModel(GcnConfig(classes=K, blocks=2, channels=(4, 8), temporal_kernel=3),
                    build_adjacency(NTU_EDGES, 25), seed=seed)


def test_zero_lr_training_leaves_parameters_bit_identical():
    model = _toy_gcn()
    before = {k: v.copy() for k, v in model.state_dict().items()}
    train_branch(model, _toy_pose_data(), OptimizerConfig(0.0), epochs=2, batch_size=5)
    after = model.state_dict()
    assert all(before[k].tobytes() == after[k].tobytes() for k in before)


def test_training_is_reproducible_and_learns():
    opt = OptimizerConfig(0.05, momentum=0.9, weight_decay=0.0)
    runs = []
    for _ in range(2):
        model = _toy_gcn(seed=3)
        hist = train_branch(model, _toy_pose_data(), opt, epochs=15, seed=5, batch_size=4, clip_norm=1.0)
        runs.append((hist, model.state_dict()))
    (h1, s1), (h2, s2) = runs
    assert h1 == h2
    assert all(s1[k].tobytes() == s2[k].tobytes() for k in s1)
    assert h1[-1]["loss"] < h1[0]["loss"]
    assert set(h1[0]) == {"epoch", "loss", "accuracy", "lr"}


def test_early_stop_requires_clean_accuracy():
    model = _toy_gcn(seed=3)
    data = _toy_pose_data()
    hist = train_branch(model, data, OptimizerConfig(0.05, weight_decay=0.0), epochs=60, seed=5,
                        batch_size=4, clip_norm=1.0, stop_at_accuracy=1.0)
    assert len(hist) < 60
    assert hist[-1]["clean_accuracy"] == 1.0 == accuracy(model, data)


def test_training_errors():
    model = _toy_gcn()
    with pytest.raises(EmptyDataset):
        train_branch(model, ArrayDataset(np.zeros((0, 3, 6, 25, 1)), []), OptimizerConfig(), 1)
    with pytest.raises(LabelOutOfRange):
        train_branch(model, ArrayDataset(np.zeros((1, 3, 6, 25, 1)), [3]), OptimizerConfig(), 1)


def test_clip_gradients():
    a, b = Parameter(np.zeros(1)), Parameter(np.zeros(1))
    a.grad[...] = 3.0
    b.grad[...] = 4.0
    assert clip_gradients([a, b], 1.0) == 5.0
    assert a.grad[0] == pytest.approx(0.6) and b.grad[0] == pytest.approx(0.8)
    assert clip_gradients([a, b], 10.0) == pytest.approx(1.0)
    assert a.grad[0] == pytest.approx(0.6)


def test_evaluation_is_deterministic_and_ordered():
    model, data = _toy_gcn(), _toy_pose_data()
    a = evaluate_branch(model, data, "J", batch_size=5)
    b = evaluate_branch(model, data, "J", batch_size=64)
    assert a.sample_ids == data.sample_ids and a.modality == "J"
    assert a.scores.tobytes() == evaluate_branch(model, data, "J", batch_size=5).scores.tobytes()
    np.testing.assert_allclose(a.scores, b.scores, rtol=1e-6)
    one = evaluate_branch(model, ArrayDataset(data.inputs[:1], data.labels[:1]))
    assert one.scores.shape == (1, 3)


# -- feature-map dataset -----------------------------------------------------

def _fm_dataset(**kw):
    rng = np.random.default_rng(0)
    maps = [[rng.integers(0, 20, size=(20, 12), dtype=np.uint8) for _ in range(15)] for _ in range(2)]
    return FeatureMapDataset(maps, [[None] * 15] * 2, [0, 1], ("a", "b"), pm.make_palette(pm.LIP_LABELS),
                             input_size=32, **kw)


def test_feature_map_dataset_modes():
    ds = _fm_dataset()
    test_img = ds.image(0)
    assert test_img.shape == (32, 32, 3)
    assert np.array_equal(test_img, ds.image(0, epoch=5))
    assert np.array_equal(ds.image(0, 3, train=True), _fm_dataset().image(0, 3, train=True))
    assert not np.array_equal(ds.image(0, 3, train=True), ds.image(0, 4, train=True))
    x = ds.batch([0, 1])
    assert x.shape == (2, 3, 32, 32) and x.dtype == np.float32


def test_feature_map_dataset_without_jitter_is_test_build():
    ds = _fm_dataset(train_random=False, augment_delta=0.0)
    assert np.array_equal(ds.image(1, 2, train=True), ds.image(1))


# -- score CSV ---------------------------------------------------------------

@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 6), st.booleans())
def test_scores_csv_round_trip(seed, K, with_labels):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(0, 5))
    scores = (rng.normal(size=(n, K)) * 10.0 ** rng.integers(-8, 8)).astype(np.float32)
    labels = rng.integers(0, K, size=n) if with_labels else None
    sm = sc.ScoreMatrix(tuple(f"s{i}" for i in range(n)), scores, "B", labels)
    back = sc.from_csv(sc.to_csv(sm), "B")
    assert back.sample_ids == sm.sample_ids and back.scores.tobytes() == scores.tobytes()
    if n:
        assert (back.labels is None) == (labels is None)
    if labels is not None:
        assert np.array_equal(back.labels, labels)


def test_scores_validation(tmp_path):
    with pytest.raises(ShapeMismatch):
        sc.ScoreMatrix(("a",), np.zeros((2, 3)))
    with pytest.raises(ValueError):
        sc.ScoreMatrix(("a",), np.array([[np.nan]]))
    for bad in ("id,label\n", "sample_id,label,score_1\n", "sample_id,label,score_0\na,0\n",
                "sample_id,label,score_0\na,0,x\n"):
        with pytest.raises(FormatError):
            sc.from_csv(bad)
    sm = sc.ScoreMatrix(("a",), np.ones((1, 2), np.float32), "P", [1])
    sc.write_scores(tmp_path / "s.csv", sm)
    assert sc.read_scores(tmp_path / "s.csv").labels.tolist() == [1]
