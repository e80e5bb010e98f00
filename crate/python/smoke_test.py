"""Smoke test for the pyeegstage extension module.

Build and install first:
    pip install maturin
    maturin build --release -m crates/py/Cargo.toml -o dist && pip install dist/pyeegstage-*.whl
"""

import math
import tempfile
from pathlib import Path

import pyeegstage as eeg


def main():
    assert "stage3-paper-like" in eeg.presets()

    fs = 512.0
    sine = [math.sin(2 * math.pi * 10 * i / fs) for i in range(9 * 512)]
    powers = dict(eeg.band_powers(sine, hop=8))
    assert powers["alpha"] >= 95.0, powers

    details, approx = eeg.dwt(sine[:4608], family=1, levels=7)
    back = eeg.idwt(details, approx, 4608)
    assert max(abs(a - b) for a, b in zip(sine, back)) < 1e-9

    filtered = eeg.bandpass(sine, 1.0, 55.0)
    assert len(filtered) == len(sine)

    m = eeg.metrics(["2D", "2D", "3D", "3D"], ["2D", "3D", "3D", "3D"])
    assert (m["tp"], m["fp"], m["fn"], m["tn"]) == (1, 1, 0, 2), m

    info, subjects = eeg.synth_preset("stage3-paper-like", seed=7, n_subjects=2, trials=4, hop=8)
    assert [s.id for s in subjects] == info["subjects"] == ["S01", "S02"]

    with tempfile.TemporaryDirectory() as tmp:
        subjects[0].two_d.save(tmp)
        rec = eeg.Recording.load(str(Path(tmp) / "manifest.json"))
        assert rec.condition == "2D" and rec.n_trials == 4 and len(rec.channels) == 20
        assert rec.validate()["errors"] == []
        assert len(rec.trial(0)) == 20

    selection = eeg.select_bands(subjects, stage="III", hop=8)
    assert selection["report"]["selected"] == ["Delta", "Alpha"], selection["report"]["selected"]

    ds = eeg.FeatureDataset.from_subject(subjects[0], {"kind": "dwt"})
    assert ds.n_epochs == 88 and len(ds.train) == len(ds.test) == 44
    assert ds.feature_names == ["min", "max", "mean", "sd"]
    assert len(ds.channel_matrix("T5")) == 88

    result = ds.classify("svm", config={"max_prefix": 4})
    best = result["combinations"][result["best"]]
    print(f"best channels {best['channels']}, test accuracy {best['test']['accuracy']:.3f}")
    assert best["test"]["accuracy"] >= 0.8

    try:
        eeg.synth_preset("no-such-preset")
    except ValueError as e:
        assert "stage1-delta" in str(e)
    else:
        raise AssertionError("unknown preset accepted")

    print("pyeegstage smoke test passed")


if __name__ == "__main__":
    main()
