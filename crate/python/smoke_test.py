"""Smoke test for the s5p_ssr Python extension.

Uses an installed module when available (``maturin develop`` in crates/py);
otherwise builds the extension with cargo and loads it from a temp dir.
"""

import importlib
import os
import shutil
import subprocess
import sys
import tempfile

import numpy as np

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def load():
    try:
        return importlib.import_module("s5p_ssr")
    except ImportError:
        pass
    subprocess.run(
        ["cargo", "build", "-p", "s5p-ssr-py", "--features", "extension-module"],
        cwd=ROOT,
        check=True,
    )
    lib = os.path.join(ROOT, "target", "debug", "libs5p_ssr_py.so")
    out = tempfile.mkdtemp()
    shutil.copy(lib, os.path.join(out, "s5p_ssr.so"))
    sys.path.insert(0, out)
    return importlib.import_module("s5p_ssr")


def main():
    m = load()

    spec = m.BandSpec("BD2")
    assert spec.sigma == 7.88e-8 / 239, spec
    assert spec.scale == 4

    n = m.count_params("unet1m", "BD3")
    assert abs(n - 1.07e6) <= 0.05 * 1.07e6, n

    a = m.Degradation.for_band("BD3")
    const = np.full((2, 64, 64), 0.7)
    y = a.apply(const)
    assert y.shape == (2, 16, 16)
    assert np.allclose(y, 0.7, atol=1e-12)

    x = m.synth_scene("BD3", 8, 64, 64, seed=1)
    assert x.shape == (8, 64, 64) and np.all(x > 0)
    cleaned = m.clean(x - 0.005 * (x < 0), threshold=1e-2)
    assert cleaned.min() >= 0.0

    lr = a.apply(x / x.std())
    model = m.Model("dscr_s", "BD3", channels=8, toy=True, seed=3)
    model.randomize(5, 0.2)
    model.zero_residual()
    out = model.predict(lr)
    assert np.array_equal(out, m.bicubic_upsample(lr, 4))
    tiled = model.superresolve(lr)
    assert tiled.shape == (8, 64, 64)

    terms = model.ssl_terms(lr, a, sigma=0.01, probes=2, seed=0)
    assert all(np.isfinite(v) for v in terms.values()), terms

    hr = x / x.std()
    db, capped = m.psnr(out, hr, float(hr.max() - hr.min()))
    assert np.isfinite(db) and not capped
    assert m.psnr(hr, hr, 1.0) == (100.0, True)
    assert abs(m.ssim(hr, hr, 1.0) - 1.0) < 1e-12
    assert 0.0 < m.scc(out, hr) <= 1.0
    assert m.sharpness(np.full((1, 8, 8), 3.0)) == 0.0
    cons, _ = m.consistency(out, lr, a)
    assert np.isfinite(cons)

    try:
        m.Model("resnet", "BD3")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown architecture accepted")

    print("python smoke test passed")


if __name__ == "__main__":
    main()
