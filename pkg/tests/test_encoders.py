import numpy as np
import pytest

from motionbind.encoders import (
    EncoderConfig,
    EncoderSet,
    ImuEncoder,
    PointCloudEncoder,
    ProjectionHead,
    SkeletonEncoder,
    TextEmbedder,
    Vocabulary,
)
from motionbind.tensor import ShapeError, Tensor, finite_diff_grad


def small_cfg(**kw):
    base = dict(e=32, points=16, imu_channels=36, window=None,
                point_mlp=(8, 16), hidden=16, skeleton_mlp=16)
    base.update(kw)
    return EncoderConfig(**base)


@pytest.fixture
def rng():
    return np.random.default_rng(42)


def test_pointcloud_permutation_invariance(rng):
    cfg = small_cfg()
    enc = PointCloudEncoder(cfg, np.random.default_rng(0))
    w = rng.normal(size=(2, 6, cfg.points, 3))
    perm = w.copy()
    for b in range(2):
        for t in range(6):
            perm[b, t] = perm[b, t][rng.permutation(cfg.points)]
    z1 = enc(w).data
    z2 = enc(perm).data
    assert np.array_equal(z1, z2)


def test_pointcloud_distinct_inputs_distinct_embeddings(rng):
    cfg = small_cfg()
    enc = PointCloudEncoder(cfg, np.random.default_rng(0))
    a = enc(rng.normal(size=(1, 6, cfg.points, 3))).data[0]
    b = enc(rng.normal(size=(1, 6, cfg.points, 3))).data[0]
    cos = a @ b / (np.linalg.norm(a) * np.linalg.norm(b))
    assert cos < 1 - 1e-6


def test_pointcloud_full_scale_output_length():
    cfg = EncoderConfig()  # e=512, N=256, T=24
    enc = PointCloudEncoder(cfg, np.random.default_rng(0))
    w = np.random.default_rng(1).normal(size=(1, 24, 256, 3))
    assert enc(w).shape == (1, 512)


def test_pointcloud_shape_contract():
    cfg = small_cfg(window=6)
    enc = PointCloudEncoder(cfg, np.random.default_rng(0))
    with pytest.raises(ShapeError):
        enc(np.zeros((1, 5, cfg.points, 3)))
    with pytest.raises(ShapeError):
        enc(np.zeros((1, 6, cfg.points + 1, 3)))


def test_imu_zero_window_finite(rng):
    cfg = small_cfg()
    enc = ImuEncoder(cfg, np.random.default_rng(0))
    z = enc(np.zeros((1, 6, cfg.imu_channels))).data
    assert np.all(np.isfinite(z))


def test_imu_determinism_and_shape(rng):
    cfg = EncoderConfig(e=512, imu_channels=36, window=None, hidden=32)
    enc = ImuEncoder(cfg, np.random.default_rng(0))
    w = rng.normal(size=(1, 24, 36))
    assert enc(w).shape == (1, 512)
    assert np.array_equal(enc(w).data, enc(w).data)


def test_imu_channel_contract():
    enc = ImuEncoder(small_cfg(), np.random.default_rng(0))
    with pytest.raises(ShapeError):
        enc(np.zeros((1, 6, 7)))


def test_skeleton_determinism_and_joint_contract(rng):
    cfg = small_cfg()
    enc = SkeletonEncoder(cfg, np.random.default_rng(0))
    w = rng.normal(size=(2, 6, 24, 3))
    assert np.array_equal(enc(w).data, enc(w).data)
    with pytest.raises(ShapeError):
        enc(rng.normal(size=(2, 6, 23, 3)))


def test_skeleton_full_scale_output_length():
    cfg = EncoderConfig(window=None, hidden=32, skeleton_mlp=32)
    enc = SkeletonEncoder(cfg, np.random.default_rng(0))
    w = np.random.default_rng(1).normal(size=(1, 24, 24, 3))
    assert enc(w).shape == (1, 512)


def test_encoders_finite_on_large_inputs(rng):
    cfg = small_cfg()
    seed_rng = np.random.default_rng(0)
    pc = PointCloudEncoder(cfg, seed_rng)
    imu = ImuEncoder(cfg, seed_rng)
    sk = SkeletonEncoder(cfg, seed_rng)
    assert np.all(np.isfinite(pc(rng.uniform(-1e3, 1e3, size=(1, 4, cfg.points, 3))).data))
    assert np.all(np.isfinite(imu(rng.uniform(-1e3, 1e3, size=(1, 4, cfg.imu_channels))).data))
    assert np.all(np.isfinite(sk(rng.uniform(-1e3, 1e3, size=(1, 4, 24, 3))).data))


def test_projection_head_zero_bias_zero_input():
    head = ProjectionHead(np.random.default_rng(0), 8, 8)
    head.fc1.b.data[:] = 0
    head.fc2.b.data[:] = 0
    out = head(Tensor(np.zeros((2, 8))))
    assert np.array_equal(out.data, np.zeros((2, 8)))


def test_projection_head_gradient_matches_finite_differences(rng):
    head = ProjectionHead(np.random.default_rng(3), 4, 4)
    x = rng.normal(size=(3, 4))
    params = list(head.params().values())

    def loss():
        return (head(Tensor(x)) ** 2.0).sum()

    loss().backward()
    fd = finite_diff_grad(loss, params, eps=1e-5)
    for p, g in zip(params, fd):
        denom = np.maximum(np.maximum(np.abs(p.grad), np.abs(g)), 1e-8)
        assert np.max(np.abs(p.grad - g) / denom) < 1e-4


# -- text ----------------------------------------------------------------------


@pytest.fixture
def vocab():
    return Vocabulary(["walk", "wave", "squat", "a", "person", "performing"])


def test_text_frozen_determinism(vocab):
    emb = TextEmbedder(vocab, e=32)
    ids = vocab.encode("a person performing walk")
    assert np.array_equal(emb.embed(ids), emb.embed(ids))


def test_text_dummy_constant(vocab):
    emb = TextEmbedder(vocab, e=32)
    d1 = emb.embed([], present=False)
    d2 = emb.embed([0, 1], present=False)
    assert np.array_equal(d1, d2)
    assert np.array_equal(d1, emb.dummy)


def test_text_distinct_classes_not_collinear(vocab):
    emb = TextEmbedder(vocab, e=32)
    for a in ["walk", "wave", "squat"]:
        for b in ["walk", "wave", "squat"]:
            if a == b:
                continue
            za, zb = emb.embed_text(a), emb.embed_text(b)
            cos = za @ zb / (np.linalg.norm(za) * np.linalg.norm(zb))
            assert cos < 0.99


def test_text_out_of_vocabulary(vocab):
    emb = TextEmbedder(vocab, e=32)
    with pytest.raises(KeyError, match="99"):
        emb.embed([99])
    with pytest.raises(KeyError, match="jump"):
        vocab.encode("jump")


def test_encoder_set_build_and_lookup(vocab):
    cfg = small_cfg()
    enc = EncoderSet.build(cfg, {"pointcloud", "imu", "skeleton", "text"}, seed=1, vocab=vocab)
    assert enc.pointcloud is not None and enc.text is not None
    names = set(enc.params())
    assert any(n.startswith("pointcloud.") for n in names)
    assert any(n.startswith("imu.") for n in names)
    with pytest.raises(KeyError):
        EncoderSet.build(cfg, {"imu"}, seed=1).modality("pointcloud")


def test_encoder_set_seed_reproducible(vocab):
    cfg = small_cfg()
    a = EncoderSet.build(cfg, {"imu", "skeleton"}, seed=5)
    b = EncoderSet.build(cfg, {"imu", "skeleton"}, seed=5)
    for k, v in a.params().items():
        assert np.array_equal(v.data, b.params()[k].data)
