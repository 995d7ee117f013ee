"""Smoke test for the spdelab Python bindings.

Run after building the extension, e.g. ``maturin develop -m crates/python/Cargo.toml``.
"""

import math

import spdelab


def main():
    grid = spdelab.Grid(32)
    assert grid.dealias_cutoff == 8 and grid.padded_n == 48

    u0 = spdelab.Field.cosine(grid, 0.5, (1, 0))
    assert abs(u0.l2_norm() ** 2 - 0.125) < 1e-14
    assert abs(u0.coeff((1, 0)).real - 0.25) < 1e-14
    values = u0.values()
    back = spdelab.Field.from_values(grid, values)
    assert (back - u0).l2_norm() < 1e-14
    # cos² = (1 + cos 2x)/2
    assert abs(u0.square().coeff((0, 0)).real - 0.125) < 1e-14

    spec = spdelab.ModelSpec("ch_ac_homotopy", 0.5, 1.0)
    assert abs(spec.c_eps(cutoff=1) - 8.0 / 3.0) < 1e-12
    assert spec.lambda_(2.0) >= 2.0

    schedule = spdelab.Schedule("log_inverse_sqrt", 1.0)
    assert schedule.regime == "C0 finite"
    est = spdelab.c_zero_estimate("ac_bilaplacian", schedule, [1e-2, 1e-3])
    assert abs(est["c_zero"] - math.pi) < 0.05, est["c_zero"]

    noisy = spdelab.ModelSpec("ch_ac_homotopy", 0.1, 0.2)
    path = spdelab.NoisePath(noisy, grid, 1e-3, master_seed=1)
    path.advance(10)
    assert abs(path.t - 1e-2) < 1e-15 and path.z().l2_norm() > 0.0

    z, v, u_eps = spdelab.solve_coupled(noisy, u0, 1e-3, 0.05, master_seed=1, save_every=10)
    assert len(u_eps) == len(z) == len(v) == 6
    assert ((z[-1] + v[-1]) - u_eps[-1]).l2_norm() < 1e-12
    again = spdelab.solve_coupled(noisy, u0, 1e-3, 0.05, master_seed=1, save_every=10)[2]
    assert (again[-1] - u_eps[-1]).l2_norm() == 0.0

    limit = spdelab.solve_limit(0.0, u0, 1e-3, 0.05, save_every=10)
    assert limit.times()[-1] == u_eps.times()[-1]

    study = spdelab.run_study(
        """
        n = 16
        T = 0.05
        dt = 0.01
        model = "ch_ac_homotopy"
        eps_grid = [0.2, 0.1]
        samples = 2
        sigma_schedule = { kind = "power", amplitude = 0.3, exponent = 1.0 }
        """
    )
    assert len(study["records"]) == 4 and study["c_zero"] == 0.0

    try:
        spdelab.ModelSpec("ch_ac_homotopy", 0.9, 1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("eps outside the model range was accepted")

    assert all(ok for _, ok, _ in spdelab.check())
    print("smoke test passed")


if __name__ == "__main__":
    main()
