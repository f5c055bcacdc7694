"""Monte-Carlo check that assessment voting elects the majority choice without second-round turnout."""
import argparse
import json

from assessment_voting.simulator import SimConfig, simulate_av
from assessment_voting.sizing_welfare import ElectionParams, ag_majority_prob


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--p-a", type=float, default=0.575)
    parser.add_argument("--c", type=float, default=0.3)
    parser.add_argument("--n1", type=int, default=293)
    parser.add_argument("--n2", type=float, default=1e4)
    parser.add_argument("--runs", type=int, default=10_000)
    parser.add_argument("--seed", type=int, default=12345)
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--policy", default="NoShowPreferred")
    args = parser.parse_args()

    params = ElectionParams(args.p_a, args.c, args.n1, args.n2)
    summary = simulate_av(SimConfig(params, args.runs, args.seed, args.policy, workers=args.workers))
    out = summary.as_dict()
    out["group_majority_prob"] = ag_majority_prob(args.n1, args.p_a)
    print(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
