"""Smoke test for the spinboson_py extension module."""

import math
import pathlib
import sys
import tempfile

import spinboson_py as sb


def main() -> int:
    modes = sb.ModeSet([1.0], weights=[1.0])
    van_hove = sb.ModelParams(0.0, [0.4, 0.0], [[1.0], [0.0]], modes)
    g = sb.ground_state(van_hove, 20)
    assert abs(g["e_full"] + 0.16) < 1e-8, g["e_full"]
    pt = sb.pull_through(van_hove, 20)
    assert pt["relative"] < 1e-8
    assert abs(pt["moments"][0] - 0.16) < 1e-6

    two = sb.ModeSet([1.0, 1.3], weights=[1.0, 0.8], tags=["essential", "discrete"])
    f4 = [0.2, 0.25]
    quartic = sb.ModelParams(0.3, [0.5, 0.3, 0.0, 0.05], [[0.3, 0.15], f4, f4, f4], two)
    assert all(h["passed"] for h in quartic.hypotheses()["checks"])
    off, defect = sb.parity_decomposition(quartic, 8)
    assert off == 0.0 and defect <= 1e-13
    g = sb.ground_state(quartic, 10)
    assert g["degeneracy"] == 1 and g["leakage"] < 1e-10
    assert 0.0 <= g["e_plus"] - g["e_minus"] <= 0.6 + 1e-9
    low = sb.fiber_spectrum(quartic, 10, -1, 3)
    assert len(low) == 3 and math.isclose(low[0], g["e_minus"], abs_tol=1e-9)
    print(f"hvz threshold {sb.hvz(quartic, 8)['threshold']:.6f}")

    config = pathlib.Path(__file__).resolve().parent.parent / "configs" / "van_hove.cfg"
    report = sb.analyze_config(str(config))
    assert report["status"] == "ok", report["failures"]
    with tempfile.TemporaryDirectory() as out:
        failures = sb.run_sweep(str(config), out, workers=2)
        assert failures == 0
        assert (pathlib.Path(out) / "results.csv").exists()

    try:
        sb.ModeSet([0.0])
    except ValueError as exc:
        print(f"rejected zero energy: {exc}")
    else:
        raise AssertionError("zero mode energy accepted")

    print("smoke test ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
