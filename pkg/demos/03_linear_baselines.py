"""Tuned linear baselines: kernel ridge, nearest neighbors, Nadaraya-Watson.

Every baseline is linear in the training labels, which is the structural
property the lower-bound theory exploits.  This demo cross-validates each
family on one dataset, prints the tuning tables, and compares the resulting
excess risks with the noisy-gradient sampler on the same data.

Run:  python3 demos/03_linear_baselines.py
"""

import numpy as np

from ngdbench import ScheduleConfig, bump_teacher, excess_risk_mc, run_chain
from ngdbench.data import generate_dataset
from ngdbench.linear import fit_estimator, tune
from ngdbench.ngd import NgdConfig


def main():
    config = ScheduleConfig(d=2, gamma=1.0, alpha1=1.0, alpha2=1.0, s=3)
    teacher = bump_teacher(config, width=3)
    data = generate_dataset(teacher, n=256, noise_bound=0.05, seed=5)

    results = []
    for kind in ("krr-rbf", "knn", "nw"):
        tuned = tune(kind, data, folds=5, seed=0, config=config)
        est = fit_estimator(kind, data, tuned.params, config=config)
        risk = excess_risk_mc(teacher, est, n_test=20000, seed=6)
        results.append((kind, tuned, risk))
        print(f"{kind}: chose {tuned.params}  (cv mse {tuned.score:.3e})")
        worst = max(tuned.table, key=lambda row: row[1])
        print(f"  worst grid point {worst[0]} scored {worst[1]:.3e}")

    ngd = NgdConfig.auto(config, data.n, 0.05, eta=0.25, budget=10.0, seed=5)
    chain = run_chain(config, ngd, data)
    sampler_risk = excess_risk_mc(teacher, chain.averaged_predictor(),
                                  n_test=20000, seed=6)

    print("\nexcess risk on fresh draws from the input law:")
    for kind, _, risk in results:
        print(f"  {kind:<8} {risk.value:.4e}  (stderr {risk.stderr:.1e})")
    print(f"  {'ngd':<8} {sampler_risk.value:.4e}"
          f"  (stderr {sampler_risk.stderr:.1e})")
    print("(this gentle schedule favors the kernels; the sampler pulls ahead"
          " on steep schedules, where the rate sweep in demo 04 points)")

    # The tuned KRR interpolates smoothly; knn is piecewise constant.  Probe
    # both along a segment through the input square.
    ts = np.linspace(0.0, 1.0, 5)
    seg = np.stack([ts, ts], axis=1)
    krr = fit_estimator("krr-rbf", data, results[0][1].params, config=config)
    knn = fit_estimator("knn", data, results[1][1].params, config=config)
    print("\n  t     teacher     krr-rbf     knn")
    for t, fv, kv, nv in zip(ts, teacher(seg), krr(seg), knn(seg)):
        print(f"  {t:.2f}  {fv:>9.5f}  {kv:>9.5f}  {nv:>9.5f}")


if __name__ == "__main__":
    main()
