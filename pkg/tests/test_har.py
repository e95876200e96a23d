import numpy as np
import pytest

from motionbind.encoders import EncoderConfig, EncoderSet
from motionbind.har import (
    ClassifierHead,
    FinetuneSchedule,
    cross_entropy,
    finetune,
    lr_schedule,
    params_digest,
    probe_train,
    segment_accuracy,
    zero_shot_classify,
)
from motionbind.motionsynth import DEFAULT_CLASSES, build_vocabulary, make_clip
from motionbind.pipeline import WindowSpec, prepare_windows
from motionbind.tensor import Tensor, finite_diff_grad


def small_encoders(modalities={"imu", "skeleton"}, seed=0, with_text=False):
    cfg = EncoderConfig(e=16, points=16, window=None, point_mlp=(8, 12),
                        hidden=12, skeleton_mlp=16)
    vocab = build_vocabulary(DEFAULT_CLASSES) if with_text else None
    mods = set(modalities) | ({"text"} if with_text else set())
    return EncoderSet.build(cfg, mods, seed=seed, vocab=vocab)


def labelled_windows(classes, per_class=2, seed=50, length=36):
    wins = []
    cid = 0
    for cls in classes:
        for r in range(per_class):
            clip = make_clip(cls, clip_id=cid, subject_id=cid, seed=seed + r,
                             length=length, n_raw=48, tm=False)
            wins.extend(prepare_windows([clip], WindowSpec(length=24, stride=12), 16))
            cid += 1
    return wins


# -- schedule ------------------------------------------------------------------


def test_lr_schedule_milestones():
    assert lr_schedule(10) == pytest.approx(0.01)
    assert lr_schedule(25) == pytest.approx(0.001)
    assert lr_schedule(32) == pytest.approx(0.0001)


def test_lr_schedule_warmup_linear():
    s = FinetuneSchedule()
    vals = [lr_schedule(e, s) for e in range(s.warmup_epochs)]
    assert vals[0] == pytest.approx(s.warmup_start)
    diffs = np.diff(vals)
    assert np.allclose(diffs, diffs[0])
    assert lr_schedule(s.warmup_epochs, s) == pytest.approx(s.peak_lr)


def test_lr_schedule_out_of_range():
    with pytest.raises(ValueError):
        lr_schedule(-1)
    with pytest.raises(ValueError):
        lr_schedule(35)


# -- metrics -------------------------------------------------------------------


def test_segment_accuracy_excludes_transition():
    preds = np.array([1, 7, 2])
    labels = np.array([1, 0, 3])  # middle label is the excluded transition class
    assert segment_accuracy(preds, labels) == 0.5


def test_segment_accuracy_all_transition_rejected():
    with pytest.raises(ValueError):
        segment_accuracy(np.array([1, 2]), np.array([0, 0]))


def test_segment_accuracy_perfect():
    labels = np.array([1, 2, 3, 0, 4])
    assert segment_accuracy(labels.copy(), labels) == 1.0


def test_cross_entropy_uniform_logits():
    logits = Tensor(np.zeros((4, 8)))
    loss = cross_entropy(logits, np.array([0, 3, 5, 7]))
    assert loss.item() == pytest.approx(np.log(8), abs=1e-12)


def test_cross_entropy_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    x = Tensor(rng.normal(size=(5, 6)), requires_grad=True, name="logits")
    y = np.array([0, 2, 1, 5, 3])
    loss = cross_entropy(x, y)
    loss.backward()
    num = finite_diff_grad(lambda: cross_entropy(x, y), [x])
    assert np.allclose(x.grad, num[0], atol=1e-6)


# -- heads ---------------------------------------------------------------------


def test_classifier_head_kinds():
    rng = np.random.default_rng(1)
    x = Tensor(rng.normal(size=(3, 12)))
    for kind in ("linear", "mlp"):
        head = ClassifierHead(kind, 12, 8, hidden=16, rng=np.random.default_rng(2))
        assert head(x).data.shape == (3, 8)
    with pytest.raises(ValueError):
        ClassifierHead("conv", 12, 8, hidden=16, rng=rng)


def test_params_digest_detects_change():
    head = ClassifierHead("linear", 4, 3, hidden=8, rng=np.random.default_rng(3))
    d1 = params_digest(head)
    assert d1 == params_digest(head)
    next(iter(head.params().values())).data[0, 0] += 1.0
    assert params_digest(head) != d1


# -- probing -------------------------------------------------------------------


def test_probe_trains_head_and_freezes_encoder():
    classes = DEFAULT_CLASSES[:3]
    wins = labelled_windows(classes, per_class=2)
    enc = small_encoders()
    digest = params_digest(enc.imu)
    sched = FinetuneSchedule(epochs=8)
    res = probe_train(enc.imu, "imu",
                      ClassifierHead("linear", 12, 3, hidden=16, rng=np.random.default_rng(4)),
                      wins, wins, classes, sched=sched, seed=1)
    assert params_digest(enc.imu) == digest
    assert len(res.epoch_metrics) == 8
    assert res.epoch_metrics[-1]["loss"] < res.epoch_metrics[0]["loss"]
    assert 0.0 <= res.test_accuracy <= 1.0


def test_probe_detects_encoder_mutation():
    classes = DEFAULT_CLASSES[:2]
    wins = labelled_windows(classes, per_class=1)
    enc = small_encoders()

    class Sabotaged(type(enc.imu)):
        pass

    bad = enc.imu
    orig = bad.features

    def mutating_features(x):
        next(iter(bad.params().values())).data += 1e-3
        return orig(x)

    bad.features = mutating_features
    with pytest.raises(AssertionError):
        probe_train(bad, "imu",
                    ClassifierHead("linear", 12, 2, hidden=8, rng=np.random.default_rng(5)),
                    wins, wins, classes, sched=FinetuneSchedule(epochs=1))


# -- fine-tuning ---------------------------------------------------------------


def test_finetune_updates_encoder_and_learns():
    classes = DEFAULT_CLASSES[:2]
    wins = labelled_windows(classes, per_class=2)
    enc = small_encoders()
    digest = params_digest(enc.imu)
    res = finetune(enc.imu, "imu",
                   ClassifierHead("linear", 12, 2, hidden=8, rng=np.random.default_rng(6)),
                   wins, wins, classes, sched=FinetuneSchedule(epochs=6), seed=2)
    assert params_digest(enc.imu) != digest
    assert res.epoch_metrics[-1]["loss"] < res.epoch_metrics[0]["loss"]


def test_finetune_deterministic_given_seed():
    classes = DEFAULT_CLASSES[:2]
    wins = labelled_windows(classes, per_class=1)
    accs = []
    for _ in range(2):
        enc = small_encoders(seed=7)
        res = finetune(enc.imu, "imu",
                       ClassifierHead("linear", 12, 2, hidden=8,
                                      rng=np.random.default_rng(8)),
                       wins, wins, classes, sched=FinetuneSchedule(epochs=2), seed=3)
        accs.append((res.train_accuracy, res.epoch_metrics[-1]["loss"]))
    assert accs[0] == accs[1]


# -- zero-shot -----------------------------------------------------------------


def test_zero_shot_requires_text():
    wins = labelled_windows(DEFAULT_CLASSES[:2], per_class=1)
    enc = small_encoders(with_text=False)
    with pytest.raises(ValueError):
        zero_shot_classify(wins, "imu", enc, DEFAULT_CLASSES)


def test_zero_shot_returns_valid_class_ids():
    wins = labelled_windows(DEFAULT_CLASSES[:3], per_class=1)
    enc = small_encoders(with_text=True)
    preds = zero_shot_classify(wins, "imu", enc, list(DEFAULT_CLASSES))
    valid = {c.id for c in DEFAULT_CLASSES}
    assert preds.shape == (len(wins),)
    assert set(preds.tolist()) <= valid
