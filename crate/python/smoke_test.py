# SPDX-License-Identifier: MIT OR Apache-2.0
"""Smoke test for the pywisent extension module.

Build and install first:
    pip install maturin
    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/pywisent-*.whl
"""

import os
import tempfile

import pywisent as w


def main():
    assert w.record_checksum(bytes([0x02, 0xAA, 0xDD, 0x00, 0xBB, 0xCC])) == 0xF0
    assert w.crc16(b"123456789") == 0x29B1

    m = w.RecordMatrix.parse(":02AADD00BBCCF0\n:00000001FF\n")
    assert len(m) == 1 and m.total_bytes == 2
    assert m.rows() == [(0xAADD, b"\xbb\xcc")]
    assert w.basic_messages(0xAADD, [0xBB, 0xCC]) == [0xFDAA, 0xFEDD, 0x00BB, 0x01CC]
    try:
        w.RecordMatrix.parse(":02AADD00BBCCF1\n:00000001FF\n")
    except ValueError:
        pass
    else:
        raise AssertionError("bad checksum accepted")

    assert w.build_ladder(16) == [1, 2, 3, 4, 6, 8, 16]
    assert w.derive_r_max(7, -2) == 3
    assert w.blockwrite_throughput(128, 0.2) < w.blockwrite_throughput(256, 0.2)
    psi_t, eta, psi_s, theta = w.model_curves(20.0, 1.0)
    assert abs(psi_t - 148.2112) < 1e-3 and abs(eta - 0.9310) < 1e-4

    r = w.run_session(m, variant="basic", seed=1)
    assert r.completed
    assert r.fram()[0xAADD:0xAADF] == b"\xbb\xcc"
    assert r.log_csv().startswith("round,event,i,j,S_p,result,epc-hex")

    fw = w.RecordMatrix.firmware()
    r = w.run_session(fw, payload=16, seed=1)
    metrics = r.metrics()
    print(f"firmware at 20 cm: {r.seconds:.2f} s, v = {metrics['v']:.3f} msg/s")
    assert r.completed and 48 < r.seconds < 61

    r = w.run_session(fw, oscillate_to_cm=90.0, bootloader=True, seed=2)
    assert r.completed and r.application_valid

    with tempfile.TemporaryDirectory() as tmp:
        cfg = os.path.join(tmp, "s.conf")
        with open(cfg, "w") as f:
            f.write("fixture = random\nrepeat = 2\n")
        summary, code = w.simulate(cfg, out=os.path.join(tmp, "out"))
        assert code == 0
        assert summary.splitlines()[0] == "run,completed,t,m_t,m_r,p_r,mean_S_p,theta"
        assert os.path.exists(os.path.join(tmp, "out", "run_1_fram.bin"))

    print("smoke test ok")


if __name__ == "__main__":
    main()
