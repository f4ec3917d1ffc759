import math

import numpy as np
import pytest

from eagps import autodiff as ad
from eagps.attention import ExternalMemory, external_attention, self_attention
from eagps.cli import gradcheck_model
from eagps.config import VARIANTS, HyperConfig
from eagps.data import SequenceRecord
from eagps.errors import ConfigError, NonFiniteError
from eagps.evaluator import param_count
from eagps.numerics import finite_diff_grad_check
from eagps.trainer import Model, PredictionHead, loss, make_training_examples, model_for, predict


def val(x):
    return ad.value_of(x)


def test_predict_zero_head_is_uniform():
    probs = val(predict(np.ones((3, 4)), PredictionHead(np.zeros((4, 5)), np.zeros((1, 5)))))
    np.testing.assert_allclose(probs, 0.2)


def test_predict_matches_loop_reference():
    rng = np.random.default_rng(0)
    h, w, b = rng.normal(size=(2, 6)), rng.normal(size=(6, 4)), rng.normal(size=(1, 4))
    probs = val(predict(h, PredictionHead(w, b)))
    for r in range(2):
        logits = [sum(h[r, k] * w[k, c] for k in range(6)) + b[0, c] for c in range(4)]
        z = sum(math.exp(x) for x in logits)
        np.testing.assert_allclose(probs[r], [math.exp(x) / z for x in logits], atol=1e-12)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)


def test_predict_width_mismatch():
    with pytest.raises(ConfigError):
        predict(np.ones((1, 3)), PredictionHead(np.zeros((4, 2)), np.zeros((1, 2))))


def test_loss_examples():
    assert val(loss(np.eye(3), [0, 1, 2])) == pytest.approx(0.0, abs=1e-11)
    uniform = val(loss(np.full((2, 4), 0.25), [1, 3]))
    assert uniform == pytest.approx(-math.log(0.25 + 1e-12), abs=1e-15)
    assert uniform == pytest.approx(1.3863, abs=1e-4)
    rng = np.random.default_rng(1)
    p = rng.dirichlet(np.ones(5), size=6)
    assert val(loss(p, rng.integers(0, 5, 6))) >= 0


def test_training_examples():
    s = SequenceRecord(0, ("a", "b", "c"))
    assert make_training_examples([s]) == [(SequenceRecord(0, ("a", "b")), "c")]
    t = SequenceRecord(0, ("a", "b", "c", "d"))
    ex = make_training_examples([t], "all-prefixes")
    assert [(p.items, y) for p, y in ex] == [(("a", "b"), "c"), (("a", "b", "c"), "d")]
    assert len(make_training_examples([s, t, s])) == 3
    with pytest.raises(ConfigError):
        make_training_examples([s], "bogus")


def _model(synth_small, **kw):
    return model_for(HyperConfig(d=8, alpha=4, beta=2, epochs=3, **kw), synth_small)


def test_lr_zero_keeps_parameters_and_loss(synth_small):
    model = _model(synth_small, lr=0.0, dropout=0.0, gamma=0.0)
    before = {k: v.copy() for k, v in model.store.values.items()}
    history = model.fit()
    assert all(np.array_equal(before[k], model.store[k]) for k in before)
    assert history[0] == history[1] == history[2]


def test_loss_decreases_on_planted_pattern(synth_small):
    model = _model(synth_small, lr=0.01)
    history = model.fit(50)
    assert history[-1] < history[0]


def test_training_is_bitwise_deterministic(synth_small):
    a, b = _model(synth_small), _model(synth_small)
    assert a.fit() == b.fit()
    assert all(np.array_equal(a.store[k], b.store[k]) for k in a.store.names())


@pytest.mark.parametrize("variant", VARIANTS)
def test_every_variant_learns(synth_small, variant):
    model = _model(synth_small, lr=0.01, variant=variant)
    history = model.fit(50)
    assert history[-1] < history[0]


@pytest.mark.parametrize("variant", VARIANTS)
def test_end_to_end_gradients(variant):
    hyper = HyperConfig(d=8, alpha=4, beta=2, eta=2, gamma=0.4, variant=variant, loss_mode="all-prefixes")
    model = gradcheck_model(hyper)
    examples = model.examples()
    report = finite_diff_grad_check(lambda s: model.objective(examples, training=True), model.store)
    assert report.passed, report.worst
    assert set(report.max_rel_err) == set(model.store.names())


def test_non_finite_loss_aborts(synth_small):
    model = _model(synth_small)
    model.store.values["w6"][...] = np.inf
    with np.errstate(invalid="ignore"), pytest.raises(NonFiniteError, match="epoch 0"):
        model.train_epoch()


def test_unknown_variant():
    with pytest.raises(ConfigError):
        HyperConfig(variant="GPS_XYZ")


def test_basic_variant_is_hand_wired_pipeline(synth_small):
    model = _model(synth_small, variant="GPS_Basic")
    s = model.store
    a = model.graph.normalized.to_dense()
    e = np.vstack([s["item_emb"], s["user_emb"]])
    mean = (e + a @ e + a @ a @ e) / 3
    items, users = mean[:model.m_items], mean[model.m_items:]
    prefixes = [p for p, _ in make_training_examples(synth_small.test)]
    h = np.array([np.concatenate([items[list(p.items)].max(axis=0), users[p.user_index]]) for p in prefixes])
    logits = h @ s["w6"] + s["b6"]
    want = np.exp(logits - logits.max(axis=1, keepdims=True))
    want /= want.sum(axis=1, keepdims=True)
    np.testing.assert_allclose(model.score(prefixes), want, atol=1e-12)


def test_oea_count_delta():
    hyper = HyperConfig(d=16, alpha=16, beta=2)
    full = param_count(hyper, 100, 10, 50)
    oea = param_count(hyper.with_overrides(variant="GPS_OEA"), 100, 10, 50)
    assert full - oea == 2 * 2 * 16 * 8 + 16 * 16 + 2 * 16


def test_attention_map_shapes(synth_small):
    seq = synth_small.train[0]
    n = len(seq.items)
    e = np.ones((n, 8))
    assert val(self_attention(e)[1]).shape == (n, n)
    assert val(external_attention(e, ExternalMemory(np.ones((4, 8)), np.ones((4, 8))))[1]).shape == (n, 4)


def test_max_len_must_cover_training(synth_small):
    with pytest.raises(ConfigError):
        _model(synth_small, max_len=2)


def test_model_epoch_counter(synth_small):
    model = _model(synth_small)
    model.fit(2)
    assert model.epoch == 2 and model.store.step == 2 * math.ceil(len(model.examples()) / 256)
    assert isinstance(model, Model)
