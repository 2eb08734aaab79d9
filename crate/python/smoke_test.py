"""Smoke test for the thermomachine_py extension.

Build and install first:  maturin develop -m crates/python/Cargo.toml  (or pip install ./crates/python)
"""

import math

import thermomachine_py as tm


def close(a, b, tol):
    return abs(a - b) <= tol


def main():
    machine = tm.Machine.random(7, d_s=2, d_b=2, coupling=0.8, beta_value=1.0)
    assert (machine.d_s, machine.d_b) == (2, 2)

    omega = machine.gibbs_state()
    at_equilibrium = tm.bound(machine, omega, seed=1, random_starts=2)
    assert close(at_equilibrium["bound"], 0.0, 1e-8), at_equilibrium

    rho = machine.random_state(3)
    report = tm.bound(machine, rho, seed=1, random_starts=4)
    assert report["delta_f_irrev"] <= 1e-12

    protocol = tm.Protocol.optimal(machine, report["minimizer_h_s"], 64, True)
    ledger = tm.run_protocol(machine, protocol, rho)
    assert ledger["total_work"] <= report["bound"] + 1e-9
    assert report["bound"] - ledger["total_work"] < 0.1 * abs(report["bound"]) + 1e-3

    parts = tm.work_decomposition(machine, protocol, rho)
    assert close(parts["total"], ledger["total_work"], 1e-9)

    empty = tm.Protocol(machine, [])
    assert len(empty) == 0
    assert tm.run_protocol(machine, empty, rho)["total_work"] == 0.0

    plus = [[0.5, 0.5], [0.5, 0.5]]
    assert close(tm.von_neumann_entropy(plus), 0.0, 1e-12)
    assert close(tm.von_neumann_entropy([[0.5, 0], [0, 0.5]]), math.log(2), 1e-12)

    checks = tm.quench_checks([[0, 0], [0, 1]], [[0, 0], [0, 0.5]], 0.25, 16)
    assert checks["unitarity_defect"] < 1e-10 and checks["commutes_with_translations"]

    try:
        tm.gibbs_state([[0, 1j], [1j, 0]], 1.0)
    except ValueError as e:
        assert "Hermitian" in str(e)
    else:
        raise AssertionError("non-Hermitian input accepted")

    config = """
seed = 5
[machine]
beta = 1.0
generator = "random"
d_s = 2
d_b = 2
coupling = 1.0
[[experiments]]
id = "bound"
[verify]
criteria = [2, 4]
"""
    csv_text = tm.run_config(config)
    assert csv_text.startswith("schema,experiment,coordinates,observable,value,tolerance")
    assert csv_text == tm.run_config(config)
    results = tm.verify_config(config)
    assert [r["id"] for r in results] == [2, 4] and all(r["passed"] for r in results)

    print("smoke test passed:", repr(machine), "bound", report["bound"], "work(64)", ledger["total_work"])


if __name__ == "__main__":
    main()
