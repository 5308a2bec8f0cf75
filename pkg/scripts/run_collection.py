"""Data-collection simulation on plateau scenarios.

Runs a one-step PowerLaw3 policy and a PPL policy with a confidence cap
for each scenario, then summarizes the signed data-estimation errors.
"""
import argparse
import logging

import numpy as np

from scalelaw.collection import CollectionPolicy, check_trace, plateau_ranges, plateau_scenarios, simulate_collection
from scalelaw.metamodel import ForestConfig, train_meta
from scalelaw.predictors import Family
from scalelaw.synth import gen_dictionary


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--count", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--tau", type=float, default=0.05)
    ap.add_argument("--max-steps", type=int, default=5)
    ap.add_argument("--switch", choices=["meta", "true"], default="meta")
    ap.add_argument("--meta-seed", type=int, default=100)
    args = ap.parse_args()
    logging.disable(logging.WARNING)

    meta = train_meta(gen_dictionary(40, plateau_ranges(), seed=args.meta_seed), ForestConfig(seed=0))
    pl, ppl, steps = [], [], []
    for sc in plateau_scenarios(args.count, seed=args.seed):
        a = simulate_collection(sc.oracle, sc.init, sc.v_target, CollectionPolicy(Family.POWER_LAW3, T=1))
        switch = "meta" if args.switch == "meta" else sc.true_switch
        pol = CollectionPolicy(Family.PPL, switch=switch, T=args.max_steps, tau=args.tau, meta_model=meta,
                               classes=sc.classes)
        b = simulate_collection(sc.oracle, sc.init, sc.v_target, pol)
        problems = check_trace(b, args.max_steps)
        if problems:
            raise SystemExit(f"{sc.name}: {problems}")
        pl.append(a.e_data)
        ppl.append(b.e_data)
        steps.append(b.K)
    pl, ppl = np.array(pl), np.array(ppl)
    print(f"scenarios            {len(pl)}")
    print(f"powerlaw3 median e   {np.median(pl):.2f}   share >= 2: {np.mean(pl >= 2):.0%}")
    print(f"ppl median e         {np.median(ppl):.2f}   share |e| <= 0.5: {np.mean(np.abs(ppl) <= 0.5):.0%}")
    print(f"ppl closer           {np.mean(np.abs(ppl) < np.abs(pl)):.0%}")
    print(f"ppl mean steps       {np.mean(steps):.2f}")


if __name__ == "__main__":
    main()
