"""Smoke test for the everrod Python extension.

Build and install first, e.g.:
    maturin build --release -m crates/python/Cargo.toml -o target/wheels
    pip install target/wheels/everrod-*.whl
"""

import json
import math
import pathlib
import sys
import tempfile

import everrod

ROOT = pathlib.Path(__file__).resolve().parent.parent


def main() -> int:
    mat = everrod.MaterialModel.reference()
    assert math.isclose(mat.effective_modulus(6.9), 25.2e6)

    plain = everrod.RodSpec()
    eq = everrod.solve_point_load(plain, mat, 0.0)
    assert eq.tip == (0.0, 0.0, 0.6), eq.tip
    assert eq.max_orthonormality_error < 1e-9

    banded = plain.with_bands([everrod.BandSpec(0.05, 0.5)])
    assert banded.radius_at(0.55) == 0.01

    eq = everrod.solve_imposed_displacement(banded, mat, 0.02)
    assert abs(eq.displacement - 0.02) < 1e-6

    curve = everrod.sweep(banded, mat, samples=5)
    k = everrod.stiffness_index(curve, 0.02)
    k_plain = everrod.stiffness_index(everrod.sweep(plain, mat, samples=2), 0.02)
    assert 0.0 < k < k_plain, (k, k_plain)
    assert everrod.stiffness_index([(0.0, 0.0), (0.02, 0.2388)], 0.02) == 11.94

    medians = [(0.0, 0.46), (0.1, 0.62), (0.2, 1.16), (0.3, 1.53), (0.4, 3.39), (0.5, 9.01)]
    model = everrod.fit_eversion_pressure(medians)
    assert all(abs(model.predict(r)[0] / p - 1) < 0.35 for r, p in medians)

    battery = dict(everrod.run_battery(mat, check_trends=True, nodes=300))
    assert len(battery) == 16 and battery["r50@50+100"] < battery["r50@50"]

    design = json.loads(everrod.design((ROOT / "scenarios" / "design.json").read_text()))
    assert all(b["reduction_ratio"] < 0.4 for b in design["bands"])

    with tempfile.TemporaryDirectory() as out:
        report = json.loads(everrod.simulate_scenario(str(ROOT / "scenarios" / "reference.json"), out))
        assert report["results"][0]["stiffness_index_n_per_m"] > 0

    try:
        everrod.RodSpec(bands=[everrod.BandSpec(0.7, 0.5)])
    except ValueError:
        pass
    else:
        raise AssertionError("band outside the rod was accepted")

    print(f"everrod {everrod.__version__}: smoke test passed (k = {k:.4f} N/m)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
