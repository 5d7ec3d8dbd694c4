"""Recording container, .eegb round-trip, montage, feature table CSV."""
import os

import numpy as np
import pytest

from msaf import (
    DuplicateSubject,
    FeatureTable,
    Montage,
    Recording,
    ShapeMismatch,
    UnknownChannel,
    load_feature_table,
    load_recording,
    read_json,
    save_recording,
    standard_1020_montage,
    write_json,
)


def _rec(n_ch=4, n_t=50, fs=100.0, **kw):
    rng = np.random.default_rng(3)
    montage = standard_1020_montage()
    montage = Montage(montage.names[:n_ch], montage.positions[:n_ch])
    data = rng.standard_normal((n_ch, n_t))
    return Recording(montage=montage, fs=fs, data=data,
                     subject_id=kw.pop("subject_id", "s01"), **kw)


def test_standard_montage_unit_positions():
    m = standard_1020_montage()
    assert m.n_channels == 19
    assert np.allclose(np.linalg.norm(m.positions, axis=1), 1.0)
    assert "Cz" in m.names and "O1" in m.names


def test_montage_subset_and_unknown():
    m = standard_1020_montage(["Fp1", "Cz", "O2"])
    assert m.names == ("Fp1", "Cz", "O2")
    with pytest.raises(UnknownChannel):
        standard_1020_montage(["Fp1", "XX9"])
    # modern temporal aliases resolve to the classic positions
    modern = standard_1020_montage(["T7", "P8"])
    classic = standard_1020_montage(["T3", "T6"])
    assert np.allclose(modern.positions, classic.positions)


def test_montage_rejects_non_unit_positions():
    with pytest.raises(ShapeMismatch):
        Montage(("a", "b"), np.array([[0.0, 0.0, 2.0], [0.0, 0.0, 1.0]]))


def test_recording_shape_validation():
    m = standard_1020_montage(["Fp1", "Cz", "O2"])
    with pytest.raises(ShapeMismatch):
        Recording(montage=m, fs=100.0, data=np.zeros((2, 10)), subject_id="x")


def test_eegb_roundtrip_exact(tmp_path):
    rec = _rec(label="NC", provenance=("synth",))
    eegb, sidecar = save_recording(rec, str(tmp_path / "s01.eegb"))
    assert os.path.exists(eegb) and os.path.exists(sidecar)
    back = load_recording(eegb)
    assert back.subject_id == "s01"
    assert back.label == "NC"
    assert back.fs == rec.fs
    assert back.montage.names == rec.montage.names
    # payload is float32 on disk; the narrowing is the only loss
    assert np.array_equal(back.data, rec.data.astype("<f4").astype(np.float64))
    assert np.max(np.abs(back.data - rec.data)) < 1e-6
    assert back.provenance == ("synth",)


def test_eegb_roundtrip_without_label(tmp_path):
    rec = _rec()
    save_recording(rec, str(tmp_path / "anon"))
    back = load_recording(str(tmp_path / "anon.eegb"))
    assert back.label is None


def test_with_data_appends_provenance():
    rec = _rec()
    out = rec.with_data(rec.data * 2.0, note="gain:2")
    assert out.provenance[-1] == "gain:2"
    assert rec.provenance == ()


def test_feature_table_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(9)
    t = FeatureTable(
        subject_ids=("a", "b", "c"),
        y=np.array([0, 1, 0]),
        class_names=("DEM", "NC"),
        feature_names=("f1", "f2"),
        values=rng.standard_normal((3, 2)),
    )
    path = str(tmp_path / "feat.csv")
    t.to_csv(path)
    back = load_feature_table(path)
    assert back.subject_ids == t.subject_ids
    assert back.class_names == t.class_names
    assert np.array_equal(back.values, t.values)  # repr round-trip is exact
    assert np.array_equal(back.y, t.y)


def test_feature_table_duplicate_ids():
    with pytest.raises(DuplicateSubject):
        FeatureTable(
            subject_ids=("a", "a"),
            y=np.array([0, 0]),
            class_names=("x",),
            feature_names=("f",),
            values=np.zeros((2, 1)),
        )


def test_write_json_deterministic(tmp_path):
    p1, p2 = str(tmp_path / "a.json"), str(tmp_path / "b.json")
    write_json(p1, {"b": 1, "a": [1.5, 2]})
    write_json(p2, {"a": [1.5, 2], "b": 1})
    with open(p1, "rb") as f1, open(p2, "rb") as f2:
        assert f1.read() == f2.read()
    assert read_json(p1) == {"a": [1.5, 2], "b": 1}
