import json
import os
import tempfile

import numpy as np
import pytest

import gesturebench as gb

TINY_LSTM = {"input_size": 63, "hidden_sizes": [8], "dense_size": 8, "num_classes": 4, "dropout_rate": 0.0}


def test_lstm_predict_is_a_distribution():
    m = gb.make_model("lstm", TINY_LSTM, seed=3)
    assert m.family == "lstm"
    assert m.num_classes == 4
    p = m.predict(np.zeros((30, 63)))
    assert p.shape == (4,)
    assert abs(p.sum() - 1.0) < 1e-12
    assert (p > 0).all()
    assert gb.descriptor(m)["config"]["hidden_sizes"] == [8]


def test_wrong_width_raises():
    m = gb.make_model("lstm", TINY_LSTM)
    with pytest.raises(gb.DimensionError):
        m.predict(np.zeros((30, 62)))


def test_checkpoint_bytes_round_trip():
    m = gb.make_model("lstm", TINY_LSTM, seed=5)
    blob = gb.encode_checkpoint(m)
    assert blob[:4] == b"GSNC"
    back = gb.decode_checkpoint(blob)
    assert gb.encode_checkpoint(back) == blob
    x = np.random.default_rng(0).normal(size=(12, 63))
    np.testing.assert_array_equal(back.predict(x), m.predict(x))
    with pytest.raises(gb.ParseError, match="offset"):
        gb.decode_checkpoint(blob[:-1])


def test_checkpoint_file_round_trip():
    m = gb.make_model("lstm", TINY_LSTM, seed=6)
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "m.gsnc")
        gb.save_checkpoint(path, m)
        assert gb.encode_checkpoint(gb.load_checkpoint(path)) == gb.encode_checkpoint(m)


def test_cnn_descriptor_and_flops():
    cfg = {"input_dims": [4, 6, 6, 1], "blocks": [{"out_channels": 2, "kernel": [2, 3, 3]}],
           "dense_size": 4, "num_classes": 3}
    m = gb.make_model("cnn3d", cfg, seed=1)
    assert m.family == "cnn3d"
    assert m.nominal_input_shape == [4, 6, 6, 1]
    assert m.param_count > 0 and m.flop_estimate > 0


def test_normalize_landmarks():
    raw = np.random.default_rng(1).normal(size=63)
    f = gb.normalize_landmarks(raw)
    assert f.shape == (63,)
    np.testing.assert_allclose(f[:3], 0.0, atol=1e-12)
    assert np.linalg.norm(f[27:30]) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        gb.normalize_landmarks(np.zeros(63))


def test_generate_dataset_is_deterministic():
    a = gb.generate_dataset(classes=3, samples_per_class=2, frames=10, seed=9, volume_dims=[4, 8, 8, 1])
    b = gb.generate_dataset(classes=3, samples_per_class=2, frames=10, seed=9, volume_dims=[4, 8, 8, 1])
    assert len(a) == 6
    assert [s[1] for s in a] == [0, 1, 2, 0, 1, 2]
    for (fa, _, va), (fb, _, vb) in zip(a, b):
        assert fa.shape == (10, 63)
        np.testing.assert_array_equal(fa, fb)
        assert va.shape == (4, 8, 8, 1)
        assert va.min() >= 0.0 and va.max() <= 1.0


def test_stream_pipeline_needs_a_full_window():
    m = gb.make_model("lstm", TINY_LSTM)
    p = gb.StreamPipeline(m, {"window_len": 30})
    frames = gb.generate_stream([1, 2], classes=4, frames=30, gap=10)
    assert frames.shape == (10 + 2 * 40, 63)
    assert p.run(frames[:29]) == []
    events = p.run(frames[29:])
    assert p.frames_accepted == len(frames)
    assert all(e["kind"] in ("candidate", "emit", "diagnostic") for e in events)


def test_cli_in_process():
    code, out, err = gb.run_cli(["--help"])
    assert code == 0 and "gen-data" in out
    code, out, err = gb.run_cli(["no-such-command"])
    assert code == 2 and err
    with tempfile.TemporaryDirectory() as d:
        code, _, err = gb.run_cli(["gen-data", "--out", d, "--classes", "3", "--samples-per-class", "2",
                                   "--seed", "1"])
        assert code == 0, err
        lines = open(os.path.join(d, "landmarks.jsonl")).read().splitlines()
        assert len(lines) == 6
        assert len(json.loads(lines[0])["frames"]) == 30
