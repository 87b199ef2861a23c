"""Smoke test for the stealth_sampling extension module.

Build and install first, e.g. `pip install maturin && maturin develop -m crates/py/Cargo.toml --release`
(or `maturin build` and pip install the wheel), then run `python python/smoke_test.py`.
"""

import math

import stealth_sampling as ss


def main():
    data = ss.Dataset.synthetic(n=400, seed=1)
    assert len(data) == 400
    assert abs(data.demographic_parity() - 0.2) < 0.1

    counts = ss.target_bin_counts(100, 0.6, [0.5, 0.5])
    assert counts == [20, 30, 20, 30], counts

    plan = ss.stealth_measure(data, counts)
    assert abs(sum(plan.weights) - 100) < 1e-9
    assert all(0.0 <= w <= 1.0 for w in plan.weights)
    assert plan.bin_counts == counts

    picked = plan.draw(data, seed=3)
    assert picked == plan.draw(data, seed=3)
    disclosed = data.subset(picked)
    assert len(disclosed) == 100
    assert disclosed.demographic_parity() < 1e-12

    cc = data.subset(ss.case_control_sample(data, counts, 3))
    wd_stealth = ss.empirical_wd(disclosed, data)
    wd_cc = ss.empirical_wd(cc, data)
    print(f"WD to full data: stealth {wd_stealth:.5f}, case-control {wd_cc:.5f}")

    d, p = ss.ks_two_sample([x[0] for x in disclosed.features], [x[0] for x in data.features])
    assert 0.0 <= d <= 1.0 and 0.0 <= p <= 1.0

    bound = ss.theorem1_bound(0.01, 200, tv=0.1)
    assert math.isclose(bound, 0.01 * 200 / math.sqrt(2 / math.pi), rel_tol=1e-12)

    try:
        ss.stealth_measure(data, [1000, 0, 0, 0])
    except ss.InfeasibleError as e:
        print(f"infeasible as expected: {e}")
    else:
        raise AssertionError("expected InfeasibleError")

    report, summary = ss.run_experiment_toml(
        'n = 300\nholdout = 100\nk = 60\nalphas = [0.6]\nrepetitions = 3\nseed = 4\n'
    )
    assert len(report.strip().splitlines()) == 1 + 3 * 3
    print(summary.strip().splitlines()[0])
    print("smoke test passed")


if __name__ == "__main__":
    main()
