"""Run ingest -> describe -> novelty -> graph -> stat -> landscape on a manifest.

Every output lands in one directory, plus timings.json with wall-clock
seconds per step.
"""
import argparse
import json
import os
import sys
import time
from dataclasses import asdict, dataclass

from remixscape import cli


@dataclass
class PipelineRun:
    manifest: str
    out_dir: str = "results"
    config: str | None = None
    jobs: int = 1
    smacof: bool = False
    cycle_policy: str = "error"

    def steps(self):
        out = self.out_dir
        work = ["-j", str(self.jobs)]
        landscape = ["landscape", self.manifest, "-o", os.path.join(out, "landscape.csv"), *work]
        if self.smacof:
            landscape.append("--smacof")
        return [
            ("ingest", ["ingest", self.manifest, "-o", os.path.join(out, "ingest.json")]),
            ("describe", ["describe", self.manifest, "-o", os.path.join(out, "describe.json"), *work]),
            ("novelty", ["novelty", self.manifest, "-o", os.path.join(out, "novelty.csv"), *work]),
            ("graph", ["graph", self.manifest, "-o", os.path.join(out, "graph.json"),
                       "--cycle-policy", self.cycle_policy]),
            ("stat", ["stat", "remix-interest", self.manifest, "-o", os.path.join(out, "stat.json"),
                      "--cycle-policy", self.cycle_policy]),
            ("landscape", landscape),
        ]


def run(job: PipelineRun) -> int:
    os.makedirs(job.out_dir, exist_ok=True)
    extra = ["--config", job.config] if job.config else []
    timings, worst = {}, 0
    for name, argv in job.steps():
        start = time.perf_counter()
        code = cli.main(argv + extra + ["-q"])
        timings[name] = round(time.perf_counter() - start, 3)
        print(f"{name:10s} exit {code}  {timings[name]:8.2f}s", file=sys.stderr)
        worst = max(worst, code)
        if code == 1:
            break
    timings["total"] = round(sum(timings.values()), 3)
    with open(os.path.join(job.out_dir, "timings.json"), "w") as f:
        json.dump({"run": asdict(job), "seconds": timings}, f, indent=2)
        f.write("\n")
    return worst


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("manifest")
    p.add_argument("-o", "--out-dir", default=PipelineRun.out_dir)
    p.add_argument("--config")
    p.add_argument("-j", "--jobs", type=int, default=PipelineRun.jobs)
    p.add_argument("--smacof", action="store_true")
    p.add_argument("--cycle-policy", choices=["error", "break"], default=PipelineRun.cycle_policy)
    a = p.parse_args(argv)
    return run(PipelineRun(a.manifest, a.out_dir, a.config, a.jobs, a.smacof, a.cycle_policy))


if __name__ == "__main__":
    sys.exit(main())
