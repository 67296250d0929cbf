import json

import numpy as np
import pytest

import dvhkit

FEATURES = {
    "ptv60_cc": 100.0,
    "ptv44_cc": 220.0,
    "rectum_cc": 80.0,
    "bladder_cc": 210.0,
    "rectum_overlap_frac": 0.1,
    "bladder_overlap_frac": 0.2,
}


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    d = tmp_path_factory.mktemp("dvh")
    lib = d / "lib.json"
    dvhkit.synth(lib, n=20, seed=42, noise=0.0)
    bundle = d / "model.dvhb"
    fp = dvhkit.train(lib, bundle, algorithms=["LR", "DT"], seed=42)
    return d, lib, bundle, fp


def test_version():
    assert dvhkit.__version__.count(".") == 2


def test_train_is_seeded(trained):
    d, lib, _, fp = trained
    assert len(fp) == 64
    assert dvhkit.train(lib, d / "again.dvhb", algorithms=["LR", "DT"], seed=42) == fp
    assert (d / "model.dvhb.json").exists()


def test_curve_shape_and_monotone(trained):
    _, _, path, _ = trained
    b = dvhkit.Bundle.load(path)
    assert b.algorithms("rectum") == ["LR", "DT"]
    c = b.predict_curve("LR", "rectum", FEATURES)
    assert c.shape == (642,)
    assert np.all(np.diff(c) <= 0)
    assert np.all((c >= 0) & (c <= 100))


def test_predict_matches_curve(trained):
    _, _, path, _ = trained
    b = dvhkit.Bundle.load(path)
    out = dvhkit.predict(b, FEATURES, organ="bladder", algorithms=["DT"])
    assert list(out["curves"]) == ["DT"]
    np.testing.assert_array_equal(out["curves"]["DT"]["values"], b.predict_curve("DT", "bladder", FEATURES))
    assert set(out["point_doses"]["DT"]) == {"5300", "5600", "6000"}


def test_evaluate_and_band(trained):
    d, lib, path, _ = trained
    val = d / "val.json"
    dvhkit.synth(val, n=5, seed=7, prefix="VAL")
    report = json.loads(dvhkit.evaluate(path, val, d / "reports"))
    assert "bladder" in report
    assert (d / "reports" / "report_rectum.csv").exists()
    band = dvhkit.band(lib, "bladder")
    assert np.all(band["lower"] <= band["upper"])


def test_errors_carry_codes(trained):
    _, _, path, _ = trained
    b = dvhkit.Bundle.load(path)
    bad = dict(FEATURES, bladder_overlap_frac=1.5)
    with pytest.raises(dvhkit.DvhkitError) as e:
        b.predict_curve("LR", "bladder", bad)
    assert e.value.code == "InvalidFeatures"
    assert e.value.input_error
    with pytest.raises(dvhkit.DvhkitError) as e:
        b.predict_curve("RF", "bladder", FEATURES)
    assert e.value.code == "UnknownAlgorithm"
