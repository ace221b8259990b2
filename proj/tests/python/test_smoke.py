import json
import math
import struct

import jsonschema
import pytest

import impsy


def test_model_round_trip(tmp_path):
    model = impsy.Model.random(dim=3, layers=1, units=8, mixtures=2, seed=4)
    assert model.shape == {"dim": 3, "layers": 1, "units": 8, "mixtures": 2}
    path = tmp_path / "m.mdrnn"
    model.save(path)
    assert impsy.Model.load(path) == model
    assert impsy.Model.from_bytes(model.to_bytes()) == model


def test_corrupt_weights_raise():
    data = bytearray(impsy.Model.random(dim=1, units=4).to_bytes())
    data[len(data) // 2] ^= 0xFF
    with pytest.raises(ValueError):
        impsy.Model.from_bytes(bytes(data))


def test_predictor_is_seeded_and_bounded():
    model = impsy.Model.random(dim=2, units=16, seed=2)

    def run(seed):
        p = impsy.Predictor(model, seed=seed)
        p.observe([0.2, 0.9], 0.1)
        return [p.predict() for _ in range(50)]

    a = run(7)
    assert a == run(7)
    for values, dt in a:
        assert len(values) == 2
        assert all(0.0 <= v <= 1.0 for v in values)
        assert 0.0 <= dt <= 5.0


def test_nll_matches_gaussian():
    x, mu, s = 0.3, 0.1, 0.5
    expected = 0.5 * ((x - mu) / s) ** 2 + math.log(s * math.sqrt(2 * math.pi))
    assert impsy.nll([1.0], [mu], [s], [x]) == pytest.approx(expected, rel=1e-12)


def test_presets_validate_against_schema():
    schema = json.loads(impsy.api_schema())
    for name in ["volca", "microfreak", "daw", "intelligent"]:
        doc = json.loads(impsy.preset(name, "model.mdrnn"))
        jsonschema.validate(doc, schema["config"])
        assert json.loads(impsy.validate_config(json.dumps(doc))) == doc


def test_config_violations_are_reported():
    doc = json.loads(impsy.preset("daw", "model.mdrnn"))
    doc["interaction"]["switchover_s"] = -1
    doc["extra"] = 1
    with pytest.raises(impsy.ConfigError) as err:
        impsy.validate_config(json.dumps(doc))
    assert "switchover_s" in str(err.value)
    assert "extra" in str(err.value)


def test_midi_and_osc_codecs():
    msgs = impsy.parse_midi(bytes([0x90, 60, 100, 62, 0, 0xF8]))
    assert msgs == [("note_on", bytes([0x90, 60, 100])), ("note_off", bytes([0x80, 62, 0])),
                    ("other", bytes([0xF8]))]
    packet = impsy.osc_encode("/impsy/frame", [0.5, 0.25])
    assert packet[:16] == b"/impsy/frame\0\0\0\0"
    assert packet[16:20] == b",ff\0"
    assert struct.unpack(">ff", packet[20:]) == (0.5, 0.25)


def test_training_reduces_loss(tmp_path):
    log = tmp_path / "20260101T000000.csv"
    lines = ["#impsy-log v1 dims=1"]
    for i in range(400):
        ms = i * 100
        v = 0.5 + 0.4 * math.sin(i / 5)
        lines.append(f"2026-01-01T00:{ms // 60000:02d}:{(ms // 1000) % 60:02d}.{ms % 1000:03d}Z,human,{v}")
    log.write_text("\n".join(lines) + "\n")
    model, history, best = impsy.train([log], dim=1, units=8, layers=1, mixtures=2, epochs=5,
                                       seq_len=20, batch_size=4, learning_rate=5e-3, seed=3)
    assert model.shape["units"] == 8
    assert len(history) == 6
    assert best > 0
    assert history[best][2] < history[0][2]


def test_bench_row():
    row = impsy.bench(units=16, layers=1, dim=2, mixtures=2, iters=100)
    assert row["mean_ms"] > 0
    with pytest.raises(ValueError):
        impsy.bench(iters=10)


def test_feed_and_status_match_schema():
    schema = json.loads(impsy.api_schema())
    frame = json.loads(impsy.feed_frame([0.1, 0.9], 0.25, "ai", 1_700_000_000_500))
    assert frame["t"] == pytest.approx(1_700_000_000.5)
    jsonschema.validate(frame, schema["feed"])
    jsonschema.validate(json.loads(impsy.feed_lead("human", 0)), schema["feed"])
    jsonschema.validate(json.loads(impsy.idle_status()), schema["status"])
