"""Smoke test for the instrclass Python module.

Build and install first:
    pip install maturin
    maturin develop --release -m crates/python/Cargo.toml
then run `python python/smoke_test.py`.
"""

import json
import math
import random

import instrclass


def tone(freq, rate=16000, seconds=0.5):
    return [0.5 * math.sin(2 * math.pi * freq * t / rate) for t in range(int(rate * seconds))]


def main():
    names = instrclass.feature_names()
    assert len(names) == instrclass.FEATURE_LEN == 168

    row = instrclass.extract_features(tone(440.0), 16000)
    assert len(row) == 168 and all(math.isfinite(v) for v in row)
    assert instrclass.hpi(tone(440.0), 16000) > 0.9

    cfg = instrclass.StftConfig(frame_len=1024, hop=256, fft_len=1024)
    assert len(instrclass.extract_features(tone(220.0), 16000, cfg)) == 168

    rng = random.Random(0)
    centers = [(0.0, 0.0), (5.0, 5.0), (0.0, 5.0)]
    x, y = [], []
    for label, (cx, cy) in enumerate(centers):
        for _ in range(40):
            x.append([cx + rng.gauss(0, 0.5), cy + rng.gauss(0, 0.5)])
            y.append(label)

    clf = instrclass.Classifier(json.dumps({"model": "random_forest", "n_trees": 25}))
    clf.fit(x, y, seed=1)
    pred = clf.predict(x)
    acc = sum(p == t for p, t in zip(pred, y)) / len(y)
    assert acc >= 0.95, acc
    proba = clf.predict_proba(x[:3])
    assert all(abs(sum(p) - 1.0) < 1e-9 for p in proba)

    restored = instrclass.Classifier.from_json(clf.to_json())
    assert restored.predict(x) == pred

    try:
        import numpy as np
    except ImportError:
        np = None
    if np is not None:
        assert clf.predict(np.asarray(x)) == pred

    cm = instrclass.confusion_matrix(y, pred, 3)
    assert sum(map(sum, cm)) == len(y)
    m = instrclass.metrics(y, pred, 3)
    assert abs(m["accuracy"] - acc) < 1e-12 and len(m["per_class"]) == 3

    a, b, _ = instrclass.power_fit([1.0, 4.0, 16.0], [2.0, 4.0, 8.0])
    assert abs(a - 2.0) < 1e-9 and abs(b - 0.5) < 1e-9

    try:
        instrclass.Classifier(json.dumps({"model": "naive_bayes"})).predict(x)
    except instrclass.InstrclassError:
        pass
    else:
        raise AssertionError("unfitted model predicted")

    print(f"smoke test ok: rf accuracy={acc:.3f}, power fit a={a:.3f} b={b:.3f}")


if __name__ == "__main__":
    main()
