import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from amcvad.data import EventInterval
from amcvad.errors import DataError
from amcvad.evaluation import (
    detect_events,
    event_report,
    frame_report,
    match_events,
    maxima_persistence,
    pr_ap,
    roc_auc,
    write_report,
)
from amcvad.scoring import ScoreRecord

from oracles import ap_sweep, auc_pairs, detect_oracle, local_maxima, persistence_oracle


# --------------------------------------------------------------------------
# frame level
# --------------------------------------------------------------------------


def test_auc_examples():
    assert roc_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1])[0] == 1.0
    assert roc_auc([0.5] * 6, [0, 1, 0, 1, 1, 0])[0] == 0.5
    auc, pts = roc_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1])
    assert pts[0] == (0.0, 0.0) and pts[-1] == (1.0, 1.0)
    with pytest.raises(ValueError):
        roc_auc([0.1, 0.2], [1, 1])
    with pytest.raises(ValueError):
        roc_auc([0.1, 0.2], [0, 2])


def test_ap_examples():
    assert pr_ap([0.9, 0.1], [1, 0])[0] == 1.0
    assert pr_ap([0.9, 0.1], [0, 1])[0] == 0.5
    with pytest.raises(ValueError):
        pr_ap([0.9, 0.1], [0, 0])


def test_metrics_match_oracles_random():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = int(rng.integers(2, 200))
        s = np.round(rng.random(n), int(rng.integers(1, 4)))  # rounding creates ties
        y = rng.integers(0, 2, n)
        y[0], y[1] = 0, 1
        assert abs(roc_auc(s, y)[0] - auc_pairs(s, y)) < 1e-9
        assert abs(pr_ap(s, y)[0] - ap_sweep(s, y)) < 1e-9


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(-1000, 1000), st.integers(0, 1)), min_size=2, max_size=60))
def test_auc_properties(pairs):
    s = np.array([p[0] / 10 for p in pairs])  # a grid, so transforms cannot merge distinct scores
    y = np.array([p[1] for p in pairs])
    assume(0 < y.sum() < len(y))
    auc = roc_auc(s, y)[0]
    assert 0 <= auc <= 1
    assert roc_auc(2.5 * s - 7, y)[0] == pytest.approx(auc, abs=1e-12)
    assert roc_auc(np.exp(s / 100), y)[0] == pytest.approx(auc, abs=1e-12)
    if len(np.unique(s)) == len(s):
        assert roc_auc(-s, y)[0] == pytest.approx(1 - auc, abs=1e-12)


def _records(vid, values):
    return [ScoreRecord(vid, t, None, None, None, None, v, v) for t, v in enumerate(values)]


def test_frame_report_and_files(tmp_path):
    recs = _records("v", [0.1, 0.2, 0.8, 0.9]) + _records("w", [0.5])
    labels = {"v": {0: 0, 1: 0, 2: 1, 3: 1}}  # w unlabeled and skipped
    rep = frame_report(recs, labels)
    assert rep.value == 1.0 and rep.n_frames == 4
    write_report(tmp_path / "r.txt", rep, curve_path=tmp_path / "c.csv", plot_path=tmp_path / "p.png")
    assert "auc=1.0" in (tmp_path / "r.txt").read_text().splitlines()
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == "fpr,tpr"
    assert (tmp_path / "p.png").stat().st_size > 0
    ap = frame_report(recs, labels, "frame-ap")
    assert ap.value == 1.0 and "ap=1.0" in ap.lines()
    with pytest.raises(DataError):
        frame_report(recs, {"x": {0: 1}})


# --------------------------------------------------------------------------
# event level
# --------------------------------------------------------------------------


def test_detect_examples():
    assert detect_events([0, 1, 0, 2, 0], 0.5, 0) == [1, 3]
    assert detect_events([0, 1, 0, 2, 0], 0.5, 3) == [3]
    assert detect_events([0, 1, 2, 3], 0.0, 0) == [3]
    assert detect_events([0, 1, 0, 2, 0], 1.5, 0) == [3]  # index-1 peak has persistence 1
    assert maxima_persistence([0, 1, 0, 2, 0]) == {1: 1.0, 3: math.inf}
    with pytest.raises(ValueError):
        detect_events([1, 2], -0.1)
    with pytest.raises(ValueError):
        detect_events([], 0.1)


def test_persistence_matches_oracle_random():
    rng = np.random.default_rng(1)
    for _ in range(100):
        n = int(rng.integers(1, 200))
        v = np.round(rng.random(n), 1).tolist()  # coarse values give plateaus
        assert maxima_persistence(v) == pytest.approx(persistence_oracle(v))
        thr, merge = float(rng.choice([0.0, 0.1, 0.3])), int(rng.integers(0, 8))
        assert detect_events(v, thr, merge) == detect_oracle(v, thr, merge)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(0, 1), min_size=1, max_size=80),
    st.floats(0, 1), st.floats(0, 1), st.integers(0, 10),
)
def test_detect_properties(v, t1, t2, merge):
    lo, hi = sorted((t1, t2))
    low, high = detect_events(v, lo, merge), detect_events(v, hi, merge)
    assert set(high) <= set(low)
    assert set(low) <= set(local_maxima(v))
    assert low  # the global maximum always survives
    assert all(b - a >= merge for a, b in zip(low, low[1:]))


def test_match_examples():
    ev = [EventInterval("v", 3, 7)]
    assert match_events([5], ev) == (1, 0)
    assert match_events([5, 6], ev) == (1, 0)
    assert match_events([20], ev) == (0, 1)
    assert match_events([], ev) == (0, 0)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.integers(0, 60), max_size=15),
    st.lists(st.tuples(st.integers(0, 60), st.integers(0, 10)), max_size=5),
)
def test_match_accounting(dets, spans):
    events = [EventInterval("v", s, s + d) for s, d in spans]
    tp, fa = match_events(dets, events)
    missed = sum(1 for e in events if not any(d in e for d in dets))
    assert tp + missed == len(events)
    assert fa == sum(1 for d in dets if not any(d in e for e in events))


def test_event_report():
    recs = _records("v", [0, 0.1, 1.0, 0.1, 0, 0, 0.6, 0, 0, 0]) + _records("w", [0, 1, 0])
    events = [EventInterval("v", 1, 3), EventInterval("v", 8, 9), EventInterval("z", 0, 0)]
    rep = event_report(recs, events, persistence_threshold=0.2, merge_distance=0)
    assert (rep.tp, rep.fa, rep.n_events) == (1, 2, 2)
    assert rep.lines() == ["mode=event", "tp=1", "fa=2", "events=2"]
