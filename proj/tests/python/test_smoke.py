# Copyright 2026 The Omni-AD Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
# ==============================================================================

import math

import numpy as np
import pytest

import omniad


def naive_mha(q, k, v, wq, wk, wv, wo, heads):
    d = q.shape[1]
    dh = d // heads
    out = []
    for h in range(heads):
        cols = slice(h * dh, (h + 1) * dh)
        qh, kh, vh = q @ wq[:, cols], k @ wk[:, cols], v @ wv[:, cols]
        logits = qh @ kh.T / math.sqrt(dh)
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        out.append(p @ vh)
    return np.concatenate(out, axis=1) @ wo


def test_attention_matches_numpy():
    rng = np.random.default_rng(0)
    q, s = rng.normal(size=(5, 8)), rng.normal(size=(7, 8))
    w = [rng.normal(size=(8, 8)) * 0.5 for _ in range(4)]
    got = omniad.multi_head_attention(q, s, s, *w, heads=2)
    np.testing.assert_allclose(got, naive_mha(q, s, s, *w, 2), atol=1e-12)


def test_matmul_and_softmax():
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
    np.testing.assert_allclose(omniad.matmul(a, b), a @ b, atol=1e-12)
    p = omniad.softmax_rows(a)
    np.testing.assert_allclose(p.sum(axis=1), np.ones(3), atol=1e-12)


def test_metric_examples():
    labels = np.array([0, 0, 1, 1], dtype=np.uint8)
    assert omniad.auroc(labels, np.array([0.1, 0.4, 0.35, 0.8])) == 75.0
    assert omniad.average_precision(np.array([0, 1], dtype=np.uint8), np.array([0.9, 0.1])) == 50.0
    assert omniad.f1_max(np.array([1, 0, 1], dtype=np.uint8), np.array([0.9, 0.8, 0.1])) == pytest.approx(80.0)
    assert omniad.mad([99.0, 99.7, 98.3, 97.9, 56.8, 59.9, 93.4]) == pytest.approx(86.4, abs=0.05)
    with pytest.raises(omniad.UndefinedMetricError):
        omniad.auroc(np.array([1, 1], dtype=np.uint8), np.array([0.2, 0.3]))


def test_aupro_perfect_map():
    mask = np.zeros((6, 6), dtype=np.uint8)
    mask[1:3, 1:3] = 1
    assert omniad.aupro([mask], [mask.astype(float)]) == pytest.approx(100.0)


def test_anomaly_map_pieces():
    rng = np.random.default_rng(2)
    a = rng.normal(size=(4, 4, 3))
    assert np.abs(omniad.cosine_distance_map(a, a)).max() < 1e-12
    np.testing.assert_allclose(omniad.cosine_distance_map(a, -a), np.full((4, 4), 2.0), atol=1e-12)
    flat = np.full((9, 9), 0.7)
    np.testing.assert_allclose(omniad.gaussian_blur(flat, 2.0), flat, atol=1e-12)


def test_tensor_roundtrip(tmp_path):
    x = np.arange(24, dtype=float).reshape(2, 3, 4) / 7.0
    back = omniad.decode_tensor(omniad.encode_tensor(x))
    np.testing.assert_array_equal(back, x.astype(np.float32).astype(float))
    path = tmp_path / "x.omt"
    omniad.write_tensor_file(path, x, version=2)
    np.testing.assert_array_equal(omniad.read_tensor_file(path), x)
    with pytest.raises(omniad.FormatError):
        omniad.decode_tensor(b"OMNI\x01\x00")


def test_config_errors():
    cfg = omniad.RunConfig()
    with pytest.raises(omniad.ConfigError):
        cfg.set("no_such_key", "1")
    assert omniad.RunConfig.parse(cfg.serialize()) == cfg


def test_tiny_training_run(tmp_path):
    cfg = omniad.RunConfig.parse(
        "height = 32\nwidth = 32\nchannels = 4\ndepths = 1,1,1,1\ntoken_count = 4\nheads = 2\n"
        "n_train = 8\nn_test = 4\nsteps = 3\nbatch_size = 4\n"
    )
    out = omniad.train_and_evaluate(cfg, str(tmp_path / "ckpt"))
    assert len(out["losses"]) == 3
    assert all(math.isfinite(v) for v in out["losses"])
    assert out["decoder_parameters"] == omniad.decoder_parameter_count(cfg)
    again = omniad.evaluate_checkpoint(str(tmp_path / "ckpt"))
    assert again["report"] == out["report"]
    assert again["maps"][0].shape == (32, 32)
