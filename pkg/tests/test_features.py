"""Feature extraction against the brute-force oracle, plus identities."""
import math

import numpy as np
import pytest

from msaf import (
    GfpSeries,
    MicrostateMaps,
    Segmentation,
    SynthConfig,
    TooShort,
    build_feature_table,
    extract_features,
    feature_names,
    generate,
)

from oracles import features_brute_force


def _random_segmentation(rng, k=None, fs=None, n=None):
    k = k or int(rng.integers(2, 7))
    fs = fs or float(rng.choice([100.0, 128.0, 250.0]))
    n = n or int(rng.integers(int(fs), int(5 * fs)))
    n_ch = int(rng.integers(4, 20))
    maps = rng.standard_normal((k, n_ch))
    maps -= maps.mean(axis=1, keepdims=True)
    maps /= np.linalg.norm(maps, axis=1, keepdims=True)
    mm = MicrostateMaps(
        channels=tuple(f"c{i}" for i in range(n_ch)),
        maps=maps,
        labels=tuple(chr(ord("A") + i) for i in range(k)),
    )
    states = rng.integers(0, k, size=n)
    corr = rng.random(n)
    gfp_vals = rng.random(n) * 5.0
    return Segmentation(
        states=states,
        corr=corr,
        gfp=GfpSeries(values=gfp_vals, fs=fs),
        fs=fs,
        maps=mm,
    )


def _oracle_dict(seg, **kw):
    return features_brute_force(
        seg.states, seg.corr, seg.gfp.values, seg.fs, seg.maps.k,
        seg.maps.labels, **kw,
    )


def test_matches_oracle_bit_for_bit_100_seeds():
    mismatches = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        seg = _random_segmentation(rng)
        got = extract_features(seg).to_dict()
        want = _oracle_dict(seg)
        assert got.keys() == want.keys()
        for key in want:
            if got[key] != want[key]:  # exact float equality intended
                mismatches += 1
    assert mismatches == 0


def test_matches_oracle_median_aggregate():
    rng = np.random.default_rng(1234)
    seg = _random_segmentation(rng)
    got = extract_features(seg, gfp_aggregate="median").to_dict()
    want = _oracle_dict(seg, gfp_aggregate="median")
    assert got == want


def test_matches_oracle_with_trimmed_edges():
    for seed in (7, 21, 63):
        rng = np.random.default_rng(seed)
        seg = _random_segmentation(rng)
        got = extract_features(seg, trim_edge_runs=True).to_dict()
        want = _oracle_dict(seg, trim_edge_runs=True)
        assert got == want


def test_coverage_sums_to_one():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        seg = _random_segmentation(rng)
        fv = extract_features(seg)
        assert math.fsum(fv.timecov) == pytest.approx(1.0, abs=1e-9)


def test_occurrence_times_duration_equals_coverage():
    for seed in range(20):
        rng = np.random.default_rng(1000 + seed)
        seg = _random_segmentation(rng)
        fv = extract_features(seg)
        for occ, dur, cov in zip(fv.occurrence, fv.meandur, fv.timecov):
            assert occ * dur / 1000.0 == pytest.approx(cov, abs=1e-9)


def test_absent_state_gets_zeros():
    rng = np.random.default_rng(77)
    seg = _random_segmentation(rng, k=5)
    # rebuild with state 4 never used
    states = np.where(seg.states == 4, 0, seg.states)
    seg2 = Segmentation(states=states, corr=seg.corr, gfp=seg.gfp,
                        fs=seg.fs, maps=seg.maps)
    fv = extract_features(seg2)
    i = 4
    assert fv.gev[i] == fv.meancorr[i] == fv.occurrence[i] == 0.0
    assert fv.timecov[i] == fv.meandur[i] == 0.0


def test_too_short_raises():
    rng = np.random.default_rng(5)
    with pytest.raises(TooShort):
        seg = _random_segmentation(rng, fs=250.0, n=100)
        extract_features(seg)


def test_feature_names_order():
    names = feature_names(("C", "A", "B"))
    assert names[0:5] == (
        "A_gev", "A_meancorr", "A_occurrence", "A_timecov", "A_meandur"
    )
    assert names[-1] == "gfp"
    assert len(names) == 16


def test_feature_table_column_order_matches_names():
    _, seg, _ = generate(SynthConfig(seed=3, duration=3.0))
    fv = extract_features(seg)
    table = build_feature_table([("s1", "NC", fv), ("s2", "DEM", fv)])
    assert table.feature_names == feature_names(fv.state_labels)
    d = fv.to_dict()
    for j, name in enumerate(table.feature_names):
        assert table.values[0, j] == d[name]


def test_synthetic_segmentation_against_oracle():
    _, seg, _ = generate(SynthConfig(seed=11, duration=4.0))
    got = extract_features(seg).to_dict()
    want = _oracle_dict(seg)
    assert got == want
