"""Write a synthetic remix corpus (STL files plus manifest.jsonl)."""
import argparse
from dataclasses import dataclass

from remixscape.synth import synthetic_corpus


@dataclass
class CorpusPlan:
    out_dir: str = "corpus"
    n: int = 50
    seed: int = 0
    remix_rate: float = 0.6
    duplicate_every: int = 0


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    d = CorpusPlan()
    p.add_argument("out_dir", nargs="?", default=d.out_dir)
    p.add_argument("-n", type=int, default=d.n, help="number of designs")
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--remix-rate", type=float, default=d.remix_rate,
                   help="chance that a design (after the first two) remixes earlier ones")
    p.add_argument("--duplicate-every", type=int, default=d.duplicate_every,
                   help="every k-th design re-uploads an earlier file verbatim (0 = never)")
    a = p.parse_args(argv)
    plan = CorpusPlan(a.out_dir, a.n, a.seed, a.remix_rate, a.duplicate_every)
    path = synthetic_corpus(plan.out_dir, plan.n, plan.seed, plan.remix_rate, plan.duplicate_every)
    print(path)


if __name__ == "__main__":
    main()
