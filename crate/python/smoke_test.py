"""Smoke test for the rram_baseband_py extension.

Build and install first:
    pip install maturin
    maturin develop -m crates/python/Cargo.toml --release
"""

import cmath
import math

import rram_baseband_py as rb


def close(a, b, tol=1e-9):
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


def main():
    # real mapping carries complex products
    a = [[1 + 2j, 0.5 - 1j], [-0.25j, 3 + 0j]]
    x = [1 - 1j, 2 + 0.5j]
    ax = [sum(a[i][k] * x[k] for k in range(2)) for i in range(2)]
    r = rb.real_map_matrix(a)
    t = rb.real_map_vector(x)
    rt = [sum(r[i][k] * t[k] for k in range(4)) for i in range(4)]
    assert all(close(u, v) for u, v in zip(rt, rb.real_map_vector(ax)))
    assert rb.unmap_vector(t) == x

    assert [rb.gray_encode(n) for n in range(4)] == [0, 1, 3, 2]
    assert all(rb.gray_decode(rb.gray_encode(n)) == n for n in range(1 << 12))
    bits = [1, 0, 1, 1, 0, 0, 1, 0]
    assert rb.qam16_demodulate(rb.qam16_modulate(bits)) == bits

    n = 16
    sig = [cmath.exp(2j * math.pi * 3 * k / n) for k in range(n)]
    spec = rb.dft(sig)
    assert close(abs(spec[3]), math.sqrt(n), 1e-12)
    back = rb.dft(spec, inverse=True)
    assert all(abs(u - v) < 1e-12 for u, v in zip(back, sig))

    h = [[1 + 0.2j, 0.3, 0.1j, 0], [0.2, 0.9 - 0.1j, 0, 0.3], [0, 0.1, 1.1, 0.2j], [0.1j, 0, 0.2, 0.8]]
    y = [0.5 + 0.1j, -0.3j, 0.7, 0.2 - 0.2j]
    ideal = rb.DeviceModel("ta_taox_pt").noiseless()
    d = rb.detect_digital(h, y, 20.0, "lmmse")
    c = rb.detect_crossbar(h, y, 20.0, "lmmse", "exact", ideal)
    assert max(abs(u - v) for u, v in zip(c, d)) < 1e-9

    dev = rb.DeviceModel("fefet")
    assert "ta_taox_pt" in rb.DeviceModel.presets()
    mean, ci = rb.mc_write_latency("with_verification", 4, 4, dev, trials=200)
    assert mean <= rb.latency_bound("with_verification", 4, 4, dev)

    trace = rb.program_trace(0.5)
    assert trace and trace[0][1] in ("plus", "minus")

    lat, en = rb.digital_cost()
    assert round(lat, 4) == 0.0502 and round(en, 4) == 0.0053

    cfg = rb.Config('[frame]\nn_c = 16\nn_t = 2\nn_r = 2\nsymbols = 10\nsnr_db = 25.0\n')
    assert rb.Config(cfg.to_toml()).to_toml() == cfg.to_toml()
    res = rb.run_frame(cfg)
    assert res["bits"] == cfg.capacity_bits()
    assert close(res["throughput_bps"], 10 * 16 * 2 * 4 / res["latency_s"], 1e-12)
    tr = rb.Transceiver(cfg)
    assert tr.run_frame(3)["ber"] == tr.run_frame(3)["ber"]
    rows = rb.sweep_snr(cfg, ["digital"], [10.0, 20.0], 2)
    assert len(rows) == 4

    try:
        rb.Config("[frame]\nn_t = 0\n")
    except ValueError as e:
        assert "n_t" in str(e)
    else:
        raise AssertionError("n_t = 0 accepted")

    print("smoke test ok: MER %.2f dB, BER %.3g, latency %.3g s" % (res["mer_db"], res["ber"], res["latency_s"]))


if __name__ == "__main__":
    main()
