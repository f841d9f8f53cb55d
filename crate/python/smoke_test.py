"""Smoke test for the chung_lab extension module.

Build with `cargo build --release -p chung-lab-python`, then copy
target/release/libchung_lab.so to chung_lab.so somewhere on PYTHONPATH.
"""

import math

import chung_lab as cl


def close(a, b, tol):
    return abs(a - b) <= tol


def main():
    assert close(cl.bm_smallball(1.0), 0.3707774297995239, 1e-15)
    assert close(cl.heat_kernel(1.0, 0.3), 1.0, 1e-8)
    k = 2
    q = (1 - math.exp(-4 * math.pi**2 * k * k * 0.01)) / (4 * math.pi**2 * k * k)
    assert close(cl.mode_variance(0.01, k), q, 1e-15)
    r = 0.01
    assert close(cl.chung_normalizer(r), r * math.log(math.log(1 / r)) ** (-1 / 6), 1e-15)
    lo, hi = cl.wilson_interval(10, 100)
    assert lo < 0.1 < hi

    sigma = cl.Coefficient.affine(2.0, 1.0)
    assert sigma(1.0) == 3.0 and sigma.sigma0 == 2.0
    window = cl.ParabolicWindow(0.25)
    grid = window.grid(16)
    assert (grid.nx, grid.nt) == (256, 512)

    field = cl.solve(cl.Coefficient.constant(1.0), grid, seed=7, cols=32)
    twice = cl.solve(cl.Coefficient.constant(2.0), grid, seed=7, cols=32)
    assert field.rows == grid.nt + 1 and field.cols == 32
    assert close(twice.window_sup(window), 2 * field.window_sup(window), 1e-12)

    out = cl.run_coupled(sigma, cl.ParabolicWindow(0.125), seed=3)
    assert out["frozen_identity_error"] <= 1e-12
    assert out["fn_failed"] == (out["tau_index"] is not None)

    est = cl.small_ball(cl.Coefficient.constant(1.0), window, [1.0, 2.0, 3.0], trials=200, seed=1)
    hits = [e["hits"] for e in est]
    assert hits == sorted(hits, reverse=True)

    fit = cl.fit_tail([(l, round(1000 * math.exp(0.5 - 2 * l * l)), 1000) for l in (0.5, 0.75, 1.0, 1.25)])
    assert fit["slope"] < 0

    stats = cl.chung_statistics(cl.Coefficient.constant(1.0), 2.0, 3, replicates=4, seed=1)
    assert len(stats) == 4 and all(s > 0 for s in stats)

    try:
        cl.ParabolicWindow(0.5)
    except ValueError:
        pass
    else:
        raise AssertionError("r = 0.5 should be rejected")
    print("smoke test ok")


if __name__ == "__main__":
    main()
