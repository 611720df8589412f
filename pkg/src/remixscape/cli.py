"""Command-line interface.

Every command takes the manifest as its first argument.  Exit status is 0
on success, 1 on a usage or configuration error and 2 when the input data
is bad; per-design failures are listed on stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import corpus as corpus_mod
from .errors import DataError, RemixscapeError, UserError
from .graph import BREAK, ERROR, build_graph, graph_summary, remix_interest_stat
from .landscape import classical_mds, emit_landscape, landscape_csv, sidecar_json, smacof_refine
from .similarity import ALL, PREDECESSORS, distance_matrix, k_nearest, novelty_csv, novelty_report

log = logging.getLogger("remixscape")


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _common(suppress: bool) -> argparse.ArgumentParser:
    # the same flags are accepted before and after the subcommand; the
    # subcommand copies default to SUPPRESS so they never clobber the others
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", default=d(None), help="JSON descriptor parameters")
    p.add_argument("--cache", default=d(None), help="descriptor cache file (default: next to the manifest)")
    p.add_argument("--output", "-o", default=d(None), help="output file (default: stdout)")
    p.add_argument("--quiet", "-q", action="store_true", default=d(False))
    return p


def build_parser() -> Parser:
    parser = Parser(prog="remixscape", parents=[_common(False)], description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=Parser)
    sub.required = True
    common = _common(True)

    work = argparse.ArgumentParser(add_help=False)
    work.add_argument("--jobs", "-j", type=int, default=1, help="descriptor worker processes")
    work.add_argument("--fetch-concurrency", type=int, default=4)
    work.add_argument("--mesh-cache", default=None, help="directory for downloaded meshes")

    def add(name, helptext, *extra):
        p = sub.add_parser(name, parents=[common, *extra], help=helptext)
        p.add_argument("manifest")
        return p

    add("ingest", "validate a manifest and summarize it")
    p = add("fetch", "download remote meshes", work)
    p = add("describe", "compute shape descriptors", work)
    p.add_argument("--export-json", default=None, help="also dump the cache as JSON")
    add("novelty", "novelty of every design (CSV)", work)
    p = add("neighbors", "k nearest designs to one design", work)
    p.add_argument("design_id")
    p.add_argument("-k", type=int, default=5)
    p.add_argument("--all", action="store_true", help="include later designs, not only predecessors")
    p = add("graph", "inheritance network summary (JSON) and edge list (CSV)")
    p.add_argument("--cycle-policy", choices=[ERROR, BREAK], default=ERROR)
    p.add_argument("--edges", default=None, help="edge list CSV (default: beside --output)")
    p = sub.add_parser("stat", parents=[common], help="statistics")
    p.add_argument("name", choices=["remix-interest"])
    p.add_argument("manifest")
    p.add_argument("--method", choices=["auto", "exact", "normal"], default="auto")
    p.add_argument("--cycle-policy", choices=[ERROR, BREAK], default=ERROR)
    p = add("landscape", "2D MDS landscape with popularity elevation", work)
    p.add_argument("--smacof", action="store_true", help="refine the classical embedding")
    p.add_argument("--z-transform", choices=["raw", "log1p"], default=None)
    p.add_argument("--sidecar", default=None, help="metadata JSON (default: beside --output)")
    return parser


# ---------------------------------------------------------------------------


def _beside(output, suffix):
    if output in (None, "-"):
        return None
    stem, _ = os.path.splitext(output)
    return stem + suffix


def _write(path, text: str):
    if path in (None, "-"):
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as f:
        f.write(text)
    os.replace(tmp, path)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


def _report(failures):
    for f in failures:
        print(f.line(), file=sys.stderr)


class Run:
    def __init__(self, args):
        self.args = args
        self.failures = []
        try:
            self.config = corpus_mod.load_config(args.config)
        except FileNotFoundError:
            raise UserError(f"config not found: {args.config}") from None
        if not os.path.isfile(args.manifest):
            raise UserError(f"manifest not found: {args.manifest}")
        self.corpus = corpus_mod.load_manifest(args.manifest)
        self.corpus.config = self.config.descriptor
        log.info("%d designs in %s", len(self.corpus), args.manifest)

    @property
    def base(self):
        return os.path.splitext(os.path.abspath(self.args.manifest))[0]

    def fetch(self):
        a = self.args
        cache_dir = a.mesh_cache or self.base + ".meshes"
        rep = corpus_mod.fetch_meshes(self.corpus, cache_dir, a.fetch_concurrency)
        log.info("fetch: %d downloaded, %d reused, %d failed", rep.downloaded, rep.reused, len(rep.failures))
        self.failures += rep.failures
        return rep

    def describe(self):
        a = self.args
        self.fetch()
        path = a.cache or self.base + ".descriptors.bin"
        rep = corpus_mod.compute_descriptors(self.corpus, path, a.jobs)
        log.info("describe: %d computed, %d cache hits, %d failed", rep.computed, rep.cache_hits,
                 len(rep.failures))
        self.failures += rep.failures
        return rep, path

    def described_ids(self):
        return [i for i in self.corpus.ids() if self.corpus.has_descriptor(i)]


def cmd_ingest(run, a):
    recs = run.corpus.records
    summary = {
        "designs": len(recs),
        "remote": sum(1 for r in recs if corpus_mod.is_url(r.mesh_ref)),
        "with_parents": sum(1 for r in recs if r.parents),
        "first_timestamp": min((r.timestamp for r in recs), default=None),
        "last_timestamp": max((r.timestamp for r in recs), default=None),
    }
    for k in ("first_timestamp", "last_timestamp"):
        if summary[k] is not None:
            summary[k] = corpus_mod.format_timestamp(summary[k])
    missing = [r.id for r in recs if not corpus_mod.is_url(r.mesh_ref)
               and not os.path.isfile(run.corpus.local_paths[r.id])]
    summary["missing_files"] = missing
    _write(a.output, _json(summary))


def cmd_fetch(run, a):
    run.fetch()
    rows = {r.id: run.corpus.local_paths.get(r.id) for r in run.corpus.records}
    _write(a.output, _json({"local_paths": rows}))


def cmd_describe(run, a):
    _, path = run.describe()
    c = run.corpus
    out = {
        "params_hash": c.config.params_hash,
        "cache": os.path.abspath(path),
        "designs": {i: c.content_hashes[i] for i in run.described_ids()},
    }
    if a.export_json:
        from .cache import DescriptorCache
        cfg = c.config
        DescriptorCache(path, cfg.params_hash, cfg.radii, cfg.bands).export_json(a.export_json)
    _write(a.output, _json(out))


def _skipped_warning(run):
    n = len(run.corpus) - len(run.described_ids())
    if n:
        log.warning("%d design(s) without descriptors excluded", n)


def cmd_novelty(run, a):
    run.describe()
    _skipped_warning(run)
    _write(a.output, novelty_csv(novelty_report(run.corpus), run.corpus))


def cmd_neighbors(run, a):
    if a.k < 1:
        raise UserError("-k must be >= 1")
    run.corpus.record(a.design_id)
    run.describe()
    if not run.corpus.has_descriptor(a.design_id):
        raise DataError(f"{a.design_id} has no descriptor")
    rows = k_nearest(run.corpus, a.design_id, a.k, ALL if a.all else PREDECESSORS)
    lines = ["rank,id,distance"] + [f"{n},{i},{d!r}" for n, (i, d) in enumerate(rows, 1)]
    _write(a.output, "\n".join(lines) + "\n")


def cmd_graph(run, a):
    g = build_graph(run.corpus.records, a.cycle_policy)
    summary = graph_summary(g)
    edges = a.edges or _beside(a.output, ".edges.csv")
    if edges is None:
        log.warning("no --output/--edges path; edge list not written")
    else:
        _write(edges, g.edges_csv())
    _write(a.output, _json(summary))


def cmd_stat(run, a):
    g = build_graph(run.corpus.records, a.cycle_policy)
    _write(a.output, _json(remix_interest_stat(g, a.method)))


def cmd_landscape(run, a):
    run.describe()
    _skipped_warning(run)
    dm = distance_matrix(run.corpus, run.described_ids())
    emb = classical_mds(dm)
    if a.smacof:
        emb = smacof_refine(dm, emb)
    z = a.z_transform or run.config.z_transform
    rows = emit_landscape(emb, run.corpus, z)
    sidecar = a.sidecar or _beside(a.output, ".meta.json")
    if sidecar is None:
        log.warning("no --output/--sidecar path; embedding metadata not written")
    else:
        _write(sidecar, sidecar_json(emb, z))
    _write(a.output, landscape_csv(rows))


COMMANDS = {
    "ingest": cmd_ingest, "fetch": cmd_fetch, "describe": cmd_describe, "novelty": cmd_novelty,
    "neighbors": cmd_neighbors, "graph": cmd_graph, "stat": cmd_stat, "landscape": cmd_landscape,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO,
                        format="%(levelname)s: %(message)s", stream=sys.stderr, force=True)
    try:
        run = Run(args)
        COMMANDS[args.command](run, args)
    except UserError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        _report(getattr(locals().get("run"), "failures", []))
        return 2
    except RemixscapeError as e:  # pragma: no cover - every error is one of the two
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    if run.failures:
        print(f"{len(run.failures)} design(s) failed:", file=sys.stderr)
        _report(run.failures)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
