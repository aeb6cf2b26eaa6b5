"""Smoke test for the Python bindings.

    pip install --no-build-isolation -e crates/py
    python -m pytest python/smoke_test.py
"""

import math

import ionlink_py as il


def test_closed_forms():
    assert math.isclose(il.solid_angle_fraction(0.8), 0.2, abs_tol=1e-12)
    beta = il.beta_from_ratio(0.011)
    assert math.isclose(il.ratio_from_beta(beta), 0.011, rel_tol=1e-10)
    assert math.isclose(il.gate_infidelity(285.0, 200.0), 0.0285, rel_tol=1e-12)
    eta = il.lamb_dicke(435.0, 170.936326, 286.0)
    assert 0.1 < eta < 0.2


def test_polarization():
    assert math.isclose(il.polarization_loss(0.8, "pi-dipole"), 123 / 124, rel_tol=1e-6)
    try:
        il.polarization_loss(0.8, "quadrupole")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown dipole accepted")


def test_clipping_is_seeded():
    a = il.rod_clipping(0.8, 200_000, 7)
    b = il.rod_clipping(0.8, 200_000, 7)
    assert a == b
    assert 0.03 < a["blocked_fraction"] < 0.055


def test_acceptance_table():
    checks = il.acceptance()
    assert [c["id"] for c in checks] == list(range(1, 13))
    failed = {c["id"] for c in checks if not c["passed"]}
    assert failed == {3, 5}
    assert all(c["passed"] for c in il.acceptance(tolerance_scale=3.0))


if __name__ == "__main__":
    for name, f in list(globals().items()):
        if name.startswith("test_"):
            f()
            print(f"ok {name}")
