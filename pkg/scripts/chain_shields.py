"""How often do weight chains decompose into shielded segments?

For chains of iid uniform weight pairs, count blocking intervals and forced
anchor sites, histogram the interior lengths of the resolved segments, and
demonstrate the shielding property on one draw: re-randomizing everything
outside the flanking intervals leaves a segment's marks untouched.

    python3 scripts/chain_shields.py --sites 2000 --draws 20
"""

from __future__ import annotations

import argparse
import collections

from markopt.core import Configuration, MarkedPoint, WeightPair, rng, sample_weighted_line
from markopt import exact


def survey(sites: int, draws: int, seed: int) -> None:
    anchor_counts = []
    interiors = collections.Counter()
    unresolved = 0
    for draw in range(draws):
        c = sample_weighted_line(sites, seed, draw)
        res = exact.wr_unique_marking(c)
        anchor_counts.append(len(res.anchors))
        for s in res.segments:
            interiors[s.interior_length] += 1
        unresolved += sum(1 for r in res.resolved if not r)

    total_segments = sum(interiors.values())
    mean_anchors = sum(anchor_counts) / len(anchor_counts)
    print(f"{draws} chains of {sites} sites, seed {seed}")
    print(f"anchors per chain: mean {mean_anchors:.1f}, "
          f"min {min(anchor_counts)}, max {max(anchor_counts)}")
    print(f"unresolved boundary sites per chain: {unresolved / draws:.1f}")
    print(f"\nsegment interior lengths ({total_segments} segments):")
    for length in sorted(interiors):
        bar = "#" * max(1, round(60 * interiors[length] / total_segments))
        print(f"  {length:>3} {interiors[length]:>5}  {bar}")


def shield_demo(sites: int, seed: int, trials: int) -> None:
    c = sample_weighted_line(sites, seed, 0)
    res = exact.wr_unique_marking(c)
    segment = max(
        (s for s in res.segments if s.interior_length >= 1),
        key=lambda s: s.interior_length,
    )
    src_left = res.anchor_sources[segment.left_anchor]
    src_right = res.anchor_sources[segment.right_anchor]
    keep_lo, keep_hi = src_left.lo - 1, src_right.hi + 1
    span = slice(segment.left_anchor, segment.right_anchor + 1)
    print(f"\nshield demo: segment [{segment.left_anchor}, {segment.right_anchor}] "
          f"(interior {segment.interior_length}), preserved sites [{keep_lo}, {keep_hi}]")
    print(f"  marks {''.join(res.marks[span])}")
    intact = 0
    for trial in range(trials):
        g = rng(seed, 99, trial)
        points = list(c.points)
        for i in range(sites):
            if keep_lo <= i <= keep_hi:
                continue
            points[i] = MarkedPoint(
                position=i, base=WeightPair(float(g.uniform()), float(g.uniform()))
            )
        rerolled = Configuration(c.window, "wr_line", tuple(points))
        intact += exact.wr_unique_marking(rerolled).marks[span] == res.marks[span]
    print(f"  marks intact after outside re-randomization: {intact}/{trials}")


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sites", type=int, default=2000)
    parser.add_argument("--draws", type=int, default=20)
    parser.add_argument("--trials", type=int, default=25, help="re-randomizations in the demo")
    parser.add_argument("--seed", type=int, default=12345)
    return parser.parse_args(argv)


if __name__ == "__main__":
    args = parse_args()
    survey(args.sites, args.draws, args.seed)
    shield_demo(args.sites, args.seed, args.trials)
