"""Smoke test for the inrlab extension module.

Build and install with `maturin develop -m crates/py/Cargo.toml`, or copy the
compiled library next to this script as `inrlab.so`, then run it directly.
"""

import json
import math
import pathlib
import sys
import tempfile

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent))

import inrlab


def main():
    assert "support-check" in inrlab.EXPERIMENTS

    support = inrlab.harmonic_support([[1.0], [3.0]], 2, 2)
    assert [f[0] for f in support] == [0.0, 1.0, 2.0, 3.0, 4.0, 6.0], support

    assert abs(inrlab.bessel_j(0, 0.0) - 1.0) < 1e-15
    assert abs(inrlab.bessel_j(1, 2.0) - 0.5767248077568734) < 1e-12

    pixels = inrlab.test_image(16, 3)
    assert len(pixels) == 256 and 0.0 <= min(pixels) and max(pixels) <= 1.0
    assert math.isinf(inrlab.psnr(pixels, pixels))

    try:
        inrlab.run_command("support", json.dumps({"omega": [[1.0]], "k": 2, "l": 2, "x": 0}), "/tmp/unused")
    except ValueError as err:
        assert "x" in str(err)
    else:
        raise AssertionError("unknown config field accepted")

    with tempfile.TemporaryDirectory() as tmp:
        out, summary = inrlab.run_experiment("support-check", tmp, seed=2)
        metrics = dict(summary)
        assert metrics["max_off_support_energy"] <= 1e-9, metrics
        manifest = pathlib.Path(out, "manifest.csv").read_text().splitlines()
        assert manifest[0] == "file,command,config_hash"

        model_cfg = {
            "model": {
                "kind": "build",
                "seed": 0,
                "mapping": {"kind": "siren-first", "omega0": 30.0, "width": 16, "input_dim": 2},
                "layers": [
                    {"width": 16, "activation": {"kind": "sine", "omega0": 30.0}},
                    {"width": 1, "activation": {"kind": "identity"}},
                ],
            },
            "shape": [8, 8],
        }
        ntk_dir, _ = inrlab.run_command("ntk", json.dumps(model_cfg), str(pathlib.Path(tmp, "ntk")))
        train_cfg = {
            "model": model_cfg["model"],
            "data": {"kind": "test-image", "size": 16, "seed": 1},
            "optimizer": {"optimizer": {"kind": "adam", "lr": 1e-4}, "iterations": 20},
        }
        train_dir, _ = inrlab.run_command("train", json.dumps(train_cfg), str(pathlib.Path(tmp, "train")))
        eig = inrlab.ntk_eigenvalues(str(pathlib.Path(train_dir, "model.txt")), 8, 8)
        assert len(eig) == 64 and all(a >= b for a, b in zip(eig, eig[1:]))
        assert pathlib.Path(ntk_dir, "eigenvalues.csv").exists()

    print("inrlab smoke test passed")


if __name__ == "__main__":
    main()
