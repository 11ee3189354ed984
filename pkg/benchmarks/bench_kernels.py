"""Compare the compiled kernels with the numpy fallback.

Run with ``python3 benchmarks/bench_kernels.py [--repeat N]``.  Each row
reports the best-of-N wall time per call for both backends and checks that
they agree.
"""

import argparse
import timeit

import numpy as np

from levy_window import _pykernels
from levy_window.stable import _inversion_rule

try:
    from levy_window import _ckernels
except ImportError:  # pragma: no cover
    _ckernels = None


def _cases():
    rng = np.random.default_rng(0)
    u, amp, _, phase = _inversion_rule(1.5, 0.5, 2, 1e-16)
    z = np.linspace(-16, 16, 2000)
    v = rng.uniform(-np.pi / 2, np.pi / 2, 1_000_000)
    w = rng.standard_exponential(1_000_000)
    x = np.concatenate(([0.0], np.cumsum(rng.standard_normal(200_000))))
    h = np.array([1, 2, 4, 8, 16, 32, 64, 128], dtype=np.int64)
    return [
        ("cos_sum 2000 z x %d nodes" % len(u), "cos_sum", (u, amp, phase, z)),
        ("sin_sum 2000 z x %d nodes" % len(u), "sin_sum", (u, amp, phase, z)),
        ("cms_transform 1e6 draws", "cms_transform", (v, w, 1.5, 0.5)),
        ("central_mass_counts 2e5 x 8 horizons", "central_mass_counts", (x, h, 0.5)),
        ("horizon_mad 2e5 x 8 horizons", "horizon_mad", (x, h)),
    ]


def _best(fn, args, repeat):
    return min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    opts = ap.parse_args()
    print(f"{'kernel':<40}{'python [s]':>12}{'cython [s]':>12}{'speedup':>10}  agree")
    for label, name, args in _cases():
        py_fn = getattr(_pykernels, name)
        t_py = _best(py_fn, args, opts.repeat)
        if _ckernels is None:
            print(f"{label:<40}{t_py:>12.4f}{'n/a':>12}{'':>10}")
            continue
        c_fn = getattr(_ckernels, name)
        t_c = _best(c_fn, args, opts.repeat)
        a, b = py_fn(*args), c_fn(*args)
        a, b = (np.concatenate([np.ravel(t) for t in r]) if isinstance(r, tuple) else r for r in (a, b))
        agree = np.allclose(a, b, rtol=1e-12, atol=1e-13)
        print(f"{label:<40}{t_py:>12.4f}{t_c:>12.4f}{t_py / t_c:>10.1f}  {agree}")


if __name__ == "__main__":
    main()
