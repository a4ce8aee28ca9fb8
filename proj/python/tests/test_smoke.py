import json
import math

import numpy as np
import pytest

import logshape


def test_version_matches_cli():
    code, out, _ = logshape.run_cli(["--version"])
    assert code == 0
    assert logshape.__version__ in out


def test_scalar_functions():
    assert logshape.logistic_prior(0.0, 0.1) == 0.5
    assert logshape.t_pdf(0.0, 0.0, 1.0, 1.0) == pytest.approx(1.0 / math.pi, rel=1e-14)
    assert logshape.t_pdf(0.0, 0.0, 1.0, 4.0) == pytest.approx(0.375, rel=1e-14)
    assert logshape.expected_posterior(0.0) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        logshape.t_pdf(0.0, 0.0, -1.0, 1.0)


def test_metrics():
    a = np.zeros((4, 10, 10), np.uint8)
    b = np.zeros_like(a)
    a[1:3, 2:8, 2:8] = 1
    b[1:3, 3:8, 2:8] = 1
    assert logshape.dice(a, a) == 1.0
    assert logshape.dice(a, b) == pytest.approx(2 * 60 / (72 + 60))
    assert logshape.hausdorff(a, a, 100.0) == 0.0
    # directed distances 2 mm (a to b) and 0 (b to a), averaged
    assert logshape.hausdorff(a, b, 100.0, spacing=(1.0, 2.0, 1.0)) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        logshape.hausdorff(np.zeros_like(a), b)


def test_shape_field_layout():
    field = logshape.shape_field("circle", [2.0, 1.0, 1.5], (1, 5, 7))
    assert field.shape == (1, 5, 7)
    assert field[0, 1, 2] == pytest.approx(2.25)
    assert field[0, 0, 0] == pytest.approx(2.25 - 4.0 - 1.0)


def test_circle_fit_on_disk():
    rng = np.random.default_rng(5)
    n = 32
    y, x = np.mgrid[0:n, 0:n]
    xs, ys = (x + 0.5) / n, (y + 0.5) / n
    truth = ((xs - 0.55) ** 2 + (ys - 0.45) ** 2 <= 0.25**2).astype(np.uint8)
    image = (100.0 * truth + rng.normal(0.0, 25.0, truth.shape)).astype(np.float32)[None]
    config = {
        "shape": {"kind": "circle", "dimension": 2, "initial": [0.5, 0.5, 0.15]},
        "fit": {"l_ref": 0.03, "l_ref_hard": 0.03, "outer_tolerance": 0.001},
        "intensity": {
            "background": [{"pi": 1.0, "mu": 20.0, "sigma": 50.0, "nu": "inf"}],
            "foreground": [{"pi": 1.0, "mu": 80.0, "sigma": 50.0, "nu": "inf"}],
        },
    }
    result = logshape.fit(image, spacing=(1 / n, 1 / n, 1.0), origin=(0.5 / n, 0.5 / n, 0.0), config=config)
    cx, cy, r = result["theta"]
    assert abs(cx - 0.55) < 0.02 and abs(cy - 0.45) < 0.02 and abs(r - 0.25) < 0.02
    assert result["posterior"].shape == (1, n, n)
    assert logshape.dice(result["ssi"], truth[None]) > 0.9
    assert np.asarray(result["covariance"]).shape == (3, 3)
    assert all(b >= a - 1e-6 for a, b in zip(result["log_joint"], result["log_joint"][1:]))


def test_default_config_round_trip(tmp_path):
    defaults = logshape.default_config()
    code, out, _ = logshape.run_cli(["--json", "config", "--defaults"])
    assert code == 0
    assert json.loads(out) == defaults
