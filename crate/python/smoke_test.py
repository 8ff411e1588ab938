"""Quick check that the Python bindings load and agree with themselves.

Build first:  pip install --no-build-isolation -e crates/py
Then:         python python/smoke_test.py
"""

import math
import pathlib
import tempfile

import clockrobust as cr

ROOT = pathlib.Path(__file__).resolve().parent.parent


def close(a, b, tol):
    assert abs(a - b) <= tol, f"{a} vs {b}"


def main():
    system = cr.QuantumSystem.cnot()
    assert (system.dim, system.n_controls, system.n_channels) == (4, 4, 2)

    target = cr.GateTarget.named("cnot", math.pi / 4)
    start = cr.ControlSchedule.random(system, 50, seed=0)

    u = cr.propagate_ideal(system, start)
    for i in range(4):
        for j in range(4):
            s = sum(u[k][i].conjugate() * u[k][j] for k in range(4))
            close(abs(s - (1.0 if i == j else 0.0)), 0.0, 1e-10)

    schedule, trace = cr.grape(system, start, target, max_iters=2000)
    j0 = cr.gate_error(system, schedule, target)
    print(f"grape: J0 = {j0:.3e} after {len(trace['records'])} records")
    assert j0 < 1e-8

    noise = cr.ClockNoiseModel.cnot(jitter=True, seed=0)
    moments = cr.second_moments(noise, system)
    close(moments["ctau"][0][0], 0.0533, 1e-4)
    close(moments["ctau"][0][2], 0.0400, 1e-4)
    close(moments["mu0sq"], 8.33e-4, 1e-6)

    est = cr.estimate_jn(system, schedule, noise, include_turn_on=True)
    mc = cr.test_average_error(system, schedule, target, noise, samples=500, seed=1)
    print(f"J_N = {est['jn_total']:.4e}, MC(500) = {mc['mean']:.4e} ± {mc['standard_error']:.1e}")
    assert abs(est["jn_total"] - mc["mean"]) / mc["mean"] < 0.2

    zero = cr.ClockNoiseModel([(0.0, 0.0), (0.0, 0.0)])
    close(cr.estimate_jn(system, schedule, zero)["jn_total"], 0.0, 1e-15)

    g = cr.grad_jn(system, schedule, noise)
    assert len(g) == 4 and len(g[0]) == 50

    smooth = cr.smoothness(schedule)
    assert len(smooth) == 4 and all(v >= 0 for v in smooth)

    sweep = cr.latency_sweep(system, schedule, target, [0.0, 0.2], [0.0, 0.2])
    close(sweep["errors"][0][0], j0, 1e-15)

    cfg = cr.load_config(ROOT / "configs" / "cnot_paper.cfg")
    assert cfg["run"]["algorithm"] == "homotopic"

    with tempfile.TemporaryDirectory() as out:
        summary = cr.run_experiment(ROOT / "configs" / "cnot_paper.cfg", out, algorithm="estimate")
        assert (pathlib.Path(out) / "manifest.json").exists()
        print(f"estimate run: J_N = {summary['jn']:.4e}")

    print("smoke test passed")


if __name__ == "__main__":
    main()
