import json
import os
import subprocess
import sys

import numpy as np
import pytest

from levy_window import BACKEND, _kernels, _pykernels
from levy_window.stable import _inversion_rule

ck = pytest.importorskip("levy_window._ckernels", reason="compiled backend not built")


@pytest.fixture(scope="module")
def data():
    rng = np.random.default_rng(0)
    x = np.concatenate(([0.0], np.cumsum(rng.standard_t(1.8, 20_000))))
    return {
        "rule": _inversion_rule(1.3, -0.5, 2, 1e-16),
        "z": np.linspace(-40, 40, 301),
        "v": rng.uniform(-np.pi / 2, np.pi / 2, 50_000),
        "w": rng.standard_exponential(50_000),
        "x": x,
        "h": np.array([1, 2, 3, 5, 8, 13, 21, 34, 55], dtype=np.int64),
    }


def test_default_backend_is_compiled():
    if os.environ.get("LEVY_WINDOW_PURE_PYTHON", "") in ("", "0"):
        assert BACKEND == "cython"


@pytest.mark.parametrize("name", ["cos_sum", "sin_sum"])
def test_trig_sums_agree(data, name):
    u, amp, _, phase = data["rule"]
    a = getattr(ck, name)(u, amp, phase, data["z"])
    b = getattr(_pykernels, name)(u, amp, phase, data["z"])
    np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-15)


@pytest.mark.parametrize("alpha,beta", [(1.5, 0.0), (1.2, 0.7), (1.9, -1.0), (2.0, 0.0)])
def test_cms_agree(data, alpha, beta):
    a = ck.cms_transform(data["v"], data["w"], alpha, beta)
    b = _pykernels.cms_transform(data["v"], data["w"], alpha, beta)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("delta", [0.05, 1.0, 7.5])
def test_central_mass_counts_identical(data, delta):
    ca, ma = ck.central_mass_counts(data["x"], data["h"], delta)
    cb, mb = _pykernels.central_mass_counts(data["x"], data["h"], delta)
    np.testing.assert_array_equal(ca, cb)
    np.testing.assert_array_equal(ma, mb)


def test_horizon_mad_identical(data):
    np.testing.assert_array_equal(ck.horizon_mad(data["x"], data["h"]),
                                  _pykernels.horizon_mad(data["x"], data["h"]))


def test_horizon_mad_even_and_odd_lengths():
    x = np.array([0.0, 1.0, 3.0, 2.0, 6.0, 4.0])
    for h in ([1], [2]):
        h = np.array(h, dtype=np.int64)
        r = x[h[0]:] - x[:-h[0]]
        ref = np.median(np.abs(r - np.median(r)))
        assert ck.horizon_mad(x, h)[0] == ref == _pykernels.horizon_mad(x, h)[0]


def test_dispatch_coerces_inputs():
    x = [0, 1, 3, 2, 6]
    counts, centers = _kernels.central_mass_counts(x, [1, 2], 0.5)
    assert counts.dtype.kind in "iu" and centers.dtype == np.float64


def test_pure_python_selected_by_env():
    code = "import levy_window as lw; print(lw.BACKEND)"
    env = {**os.environ, "LEVY_WINDOW_PURE_PYTHON": "1"}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def _close(a, b):
    if isinstance(a, dict):
        return a.keys() == b.keys() and all(_close(a[k], b[k]) for k in a)
    if isinstance(a, list):
        return len(a) == len(b) and all(_close(x, y) for x, y in zip(a, b))
    if isinstance(a, float) and isinstance(b, float):
        return a == pytest.approx(b, rel=1e-12, abs=1e-300)
    return a == b


def test_pure_python_pipeline_matches(tmp_path):
    # trig sums accumulate in a different order, so agreement is to rounding, not bytes
    sim = [sys.executable, "-m", "levy_window", "simulate", "--n", "3000", "--seed", "4", "--mode", "window"]
    env_py = {**os.environ, "LEVY_WINDOW_PURE_PYTHON": "1"}
    a = subprocess.run(sim, capture_output=True, text=True, check=True).stdout
    b = subprocess.run(sim, capture_output=True, text=True, check=True, env=env_py).stdout
    np.testing.assert_allclose(np.loadtxt(a.splitlines()[1:], delimiter=","),
                               np.loadtxt(b.splitlines()[1:], delimiter=","), rtol=1e-12, atol=1e-15)
    path = tmp_path / "s.csv"
    path.write_text(a)
    est = [sys.executable, "-m", "levy_window", "estimate", "--input", str(path), "--se-method", "sandwich",
           "--tau-hi", "30"]
    ea = json.loads(subprocess.run(est, capture_output=True, text=True).stdout)
    eb = json.loads(subprocess.run(est, capture_output=True, text=True, env=env_py).stdout)
    assert _close(ea, eb)
