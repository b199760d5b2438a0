"""Smoke test for the rfdc_py extension module.

Build and install it first:
    pip install maturin
    pip install --no-build-isolation -e crates/py
"""

import math
import os
import tempfile

import rfdc_py


def gradient_image(h, w):
    data = []
    for c in range(3):
        for y in range(h):
            for x in range(w):
                data.append(0.15 + 0.7 * ((x + 2 * y + 5 * c) % 23) / 23.0)
    return rfdc_py.Image(h, w, data)


def main():
    clear = gradient_image(32, 48)
    assert (clear.height, clear.width) == (32, 48)

    hazy = rfdc_py.degrade(clear, [0.4, 0.1, 0.05], 2.0, [0.1, 0.5, 0.6])
    t = [math.exp(-a * 2.0) for a in (0.4, 0.1, 0.05)]
    back = rfdc_py.restore(hazy, t, [0.1, 0.5, 0.6])
    # 8-bit storage is not involved, so the inversion is exact up to rounding
    assert rfdc_py.psnr(clear, back) > 100.0
    assert rfdc_py.psnr(clear, clear) == math.inf

    pri = rfdc_py.estimate_priors(hazy)
    assert len(pri["A"]) == 3 and len(pri["T"]) == 3 * 32 * 48

    assert abs(rfdc_py.rd_loss([0.5] * 30, [0.6] * 30, 5.0, 128.0, 100) - 1.33) < 1e-9

    anchor = [(0.02, 24.1), (0.035, 25.9), (0.05, 27.0), (0.08, 28.6)]
    doubled = [(2 * b, p) for b, p in anchor]
    r = rfdc_py.bd_metrics(doubled, anchor, bpp_max=1.0)
    assert abs(r["bd_rate_percent"] - 100.0) < 1e-6

    model = rfdc_py.Model.untrained(seed=1)
    data = model.encode(clear)
    info = rfdc_py.inspect(data)
    assert info["dims"] == [32, 48]
    assert info["bits_z"] + info["bits_W"] + info["bits_index"] <= 8 * len(data)
    decoded = model.decode(data)
    assert (decoded.height, decoded.width) == (32, 48)

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "m.ckpt")
        model.save(path)
        again = rfdc_py.Model.load(path)
        assert again.encode(clear) == data

    print("smoke test passed:", info)


if __name__ == "__main__":
    main()
