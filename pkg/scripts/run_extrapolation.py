"""Compare PPL and PowerLaw3 extrapolation error on a synthetic dictionary.

Reports mean E_perf for the power law, the PPL at the ground-truth switch, at
3x and 1/3x of it, and at the meta-model prediction (trained on a disjoint
dictionary).
"""
import argparse
import logging

import numpy as np

from scalelaw.fitting import fit_family
from scalelaw.metamodel import ForestConfig, ground_truth_switch, predict_switch, train_meta
from scalelaw.metrics import mean_prediction_error
from scalelaw.predictors import Family, family_score
from scalelaw.synth import gen_dictionary


def e_perf(curve, family, N=None):
    fit = fit_family(family, curve.fit_points, N=N)
    n = np.array([p.n for p in curve.eval_points], dtype=float)
    return mean_prediction_error(curve.eval_points, family_score(family, fit.params, n, fit.N))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--count", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--train-count", type=int, default=40)
    args = ap.parse_args()
    logging.disable(logging.WARNING)

    d = gen_dictionary(args.count, seed=args.seed)
    meta = train_meta(gen_dictionary(args.train_count, seed=args.seed + 1), ForestConfig(seed=0))
    rows = []
    for c in d:
        ns = ground_truth_switch(c)
        rows.append([e_perf(c, Family.POWER_LAW3), e_perf(c, Family.PPL, ns), e_perf(c, Family.PPL, 3 * ns),
                     e_perf(c, Family.PPL, ns / 3), e_perf(c, Family.PPL, predict_switch(meta, c))])
    r = np.array(rows)
    labels = ["powerlaw3", "ppl N*", "ppl 3N*", "ppl N*/3", "ppl meta"]
    print(f"{'predictor':<10} {'mean':>7} {'sd':>7} {'wins':>5}")
    for j, name in enumerate(labels):
        wins = "" if j == 0 else str(int(np.sum(r[:, j] < r[:, 0])))
        print(f"{name:<10} {r[:, j].mean():7.2f} {r[:, j].std():7.2f} {wins:>5}")


if __name__ == "__main__":
    main()
