"""Command-line pipeline: synth -> train -> vectorize -> index -> query/evaluate.

One executable with subcommands; every randomized step takes an explicit
--seed, and an optional key=value config file supplies defaults that
explicit flags override. Exit codes: 0 success, 1 usage error, 2 data
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import compose, corpus, evaluation, graphs, index as index_mod, training
from .errors import DataError, JobspaceError, NumericalError, UsageError


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # noqa: D102 - argparse hook
        raise UsageError(f"{self.prog}: {message}")


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _load_config_file(path: str) -> dict[str, str]:
    cfg: dict[str, str] = {}
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file not found: {path}")
    for line_no, line in enumerate(p.read_text(encoding="utf-8").splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise UsageError(f"{path}:{line_no}: expected key=value")
        key, value = stripped.split("=", 1)
        cfg[key.strip().replace("-", "_")] = value.strip()
    return cfg


def _scan_config(argv: list[str]) -> str | None:
    for i, token in enumerate(argv):
        if token == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if token.startswith("--config="):
            return token.split("=", 1)[1]
    return None


class _Sub:
    """Wraps a subparser and remembers each option's converter for config files."""

    def __init__(self, parser: argparse.ArgumentParser):
        self.parser = parser
        self.types: dict[str, object] = {}
        parser.add_argument("--config", default=None, help="key=value file supplying defaults")

    def add(self, *flags, **kwargs):
        action = self.parser.add_argument(*flags, **kwargs)
        if kwargs.get("action") == "store_true":
            self.types[action.dest] = _parse_bool
        else:
            self.types[action.dest] = kwargs.get("type", str)
        return action

    def apply_config(self, cfg: dict[str, str]) -> None:
        converted = {}
        for key, raw in cfg.items():
            if key == "config":
                continue
            if key not in self.types:
                raise UsageError(f"config key {key!r} is not a flag of this subcommand")
            try:
                converted[key] = self.types[key](raw)
            except (TypeError, ValueError) as exc:
                raise UsageError(f"config key {key!r}: {exc}") from exc
        self.parser.set_defaults(**converted)


def _require_file(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise DataError(f"{what} not found: {path}")
    return p


def _out_dir(path: str) -> Path:
    p = Path(path)
    try:
        p.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {path}: {exc}") from exc
    return p


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def _add_synth(subparsers) -> _Sub:
    sub = _Sub(subparsers.add_parser("synth", help="generate a synthetic corpus"))
    sub.add("--postings", type=int, default=10000)
    sub.add("--tracks", type=int, default=20)
    sub.add("--titles-per-track", type=int, default=5)
    sub.add("--skills-per-track", type=int, default=10)
    sub.add("--skills-per-posting", type=int, default=4)
    sub.add("--metros", type=int, default=3)
    sub.add("--jitter-miles", type=float, default=10.0)
    sub.add("--noise", type=float, default=0.05)
    sub.add("--sequences", type=int, default=None, help="career sequences (default postings/10)")
    sub.add("--seed", type=int, default=0)
    sub.add("--out", type=str, required=True, help="output directory")
    return sub


def cmd_synth(args) -> int:
    try:
        cfg = corpus.SynthConfig(
            num_postings=args.postings,
            num_tracks=args.tracks,
            titles_per_track=args.titles_per_track,
            skills_per_track=args.skills_per_track,
            skills_per_posting=args.skills_per_posting,
            num_metros=args.metros,
            jitter_miles=args.jitter_miles,
            noise=args.noise,
            num_sequences=args.sequences,
        )
        cfg.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    data = corpus.generate_synthetic(cfg, args.seed)
    out = _out_dir(args.out)
    corpus.write_postings(out / "postings.jsonl", data.postings, data.titles, data.skills)
    corpus.write_sequences(out / "sequences.tsv", data.sequences, data.titles)
    corpus.write_curated(out / "curated.tsv", data.curated, data.titles, data.skills)
    corpus.write_truth(out / "truth.tsv", data.truth)
    print(
        f"synth: seed={args.seed} postings={len(data.postings)} sequences={len(data.sequences)} "
        f"titles={len(data.titles)} skills={len(data.skills)} -> {out}"
    )
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def _add_train(subparsers) -> _Sub:
    sub = _Sub(subparsers.add_parser("train", help="train title/skill embeddings"))
    sub.add("--corpus", type=str, required=True, help="postings JSONL file")
    sub.add("--sequences", type=str, required=True, help="career sequences TSV file")
    sub.add("--k", type=int, default=50)
    sub.add("--lambda", dest="lam", type=float, default=0.01)
    sub.add("--lr", type=float, default=0.05)
    sub.add("--epochs", type=int, default=100)
    sub.add("--triplets-per-epoch", type=int, default=None)
    sub.add("--seed", type=int, default=0)
    sub.add("--out-dir", type=str, required=True)
    return sub


def _build_graphs(postings, sequences, titles, skills):
    built = {
        graphs.GraphKind.JOB_JOB: graphs.build_job_job(sequences, len(titles)),
        graphs.GraphKind.SKILL_SKILL: graphs.build_skill_skill(postings, len(skills)),
        graphs.GraphKind.JOB_SKILL: graphs.build_job_skill(postings, len(titles), len(skills)),
    }
    return built


def cmd_train(args) -> int:
    corpus_path = _require_file(args.corpus, "corpus file")
    seq_path = _require_file(args.sequences, "sequence file")
    titles, skills = corpus.Vocabulary(), corpus.Vocabulary()
    postings, _ = corpus.read_postings(corpus_path, titles, skills, strict=True)
    sequences = corpus.read_sequences(seq_path, titles, strict=True)
    if not postings:
        raise DataError("corpus contains no records")
    built = _build_graphs(postings, sequences, titles, skills)
    try:
        cfg = training.TrainConfig(
            k=args.k,
            lam=args.lam,
            learning_rate=args.lr,
            epochs=args.epochs,
            triplets_per_epoch=args.triplets_per_epoch,
            seed=args.seed,
        )
        cfg.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    space, report = training.train(built, cfg)
    out = _out_dir(args.out_dir)
    training.write_embeddings(out / "titles.vec", titles, space.title_vecs)
    training.write_embeddings(out / "skills.vec", skills, space.skill_vecs)
    training.write_loss_csv(out / "loss.csv", report)
    final = report.entries[-1]
    print(
        f"train: seed={args.seed} k={cfg.k} epochs={cfg.epochs} lambda={cfg.lam} lr={cfg.learning_rate} "
        f"final_loss={final.total:.6g} heldout_accuracy={final.heldout_accuracy:.4f} -> {out}"
    )
    return 0


# ---------------------------------------------------------------------------
# vectorize
# ---------------------------------------------------------------------------

def _add_vectorize(subparsers) -> _Sub:
    sub = _Sub(subparsers.add_parser("vectorize", help="compose posting vectors"))
    sub.add("--corpus", type=str, required=True)
    sub.add("--titles", type=str, required=True, help="title embedding file")
    sub.add("--skills", type=str, required=True, help="skill embedding file")
    sub.add("--curated", type=str, default=None, help="curated skill table (optional)")
    sub.add("--w-loc", type=float, default=1.0)
    sub.add("--lenient", action="store_true", help="degrade to title-only when skills are unresolvable")
    sub.add("--out", type=str, required=True, help="binary vector file")
    sub.add("--text-out", type=str, default=None, help="optional text mirror")
    return sub


def _load_space(titles_path, skills_path):
    titles_vocab, title_vecs = training.read_embeddings(_require_file(titles_path, "title embeddings"))
    skills_vocab, skill_vecs = training.read_embeddings(_require_file(skills_path, "skill embeddings"))
    titles_vocab.frozen = True
    skills_vocab.frozen = True
    return titles_vocab, skills_vocab, training.EmbeddingSpace(title_vecs, skill_vecs)


def cmd_vectorize(args) -> int:
    if args.w_loc < 0:
        raise UsageError("--w-loc must be >= 0")
    titles_vocab, skills_vocab, space = _load_space(args.titles, args.skills)
    corpus_path = _require_file(args.corpus, "corpus file")
    postings, _ = corpus.read_postings(corpus_path, titles_vocab, skills_vocab, strict=True)
    table = None
    if args.curated:
        table = corpus.read_curated(_require_file(args.curated, "curated table"), titles_vocab, skills_vocab)
    vectors = compose.vectorize_corpus(
        postings, space, table, w_loc=args.w_loc, lenient=args.lenient
    )
    compose.save_vectors(args.out, vectors)
    if args.text_out:
        compose.write_vectors_text(args.text_out, vectors)
    print(
        f"vectorize: w_loc={args.w_loc} records={len(vectors.ids)} dim={vectors.dim} -> {args.out}"
    )
    return 0


# ---------------------------------------------------------------------------
# index
# ---------------------------------------------------------------------------

def _add_index(subparsers) -> _Sub:
    sub = _Sub(subparsers.add_parser("index", help="build a search index"))
    sub.add("--vectors", type=str, required=True)
    sub.add("--kind", type=str, choices=("flat", "ivfpq"), default="flat")
    sub.add("--nlist", type=int, default=256)
    sub.add("--m", type=int, default=16)
    sub.add("--nprobe-default", type=int, default=16)
    sub.add("--kmeans-iters", type=int, default=25)
    sub.add("--seed", type=int, default=0)
    sub.add("--out", type=str, required=True)
    return sub


def cmd_index(args) -> int:
    vectors = compose.load_vectors(_require_file(args.vectors, "vector file"))
    if args.kind == "flat":
        idx = index_mod.FlatIndex(vectors.ids, vectors.matrix)
    else:
        try:
            params = index_mod.IvfPqParams(
                nlist=args.nlist,
                m=args.m,
                kmeans_iters=args.kmeans_iters,
                nprobe_default=args.nprobe_default,
            )
            params.validate()
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        idx = index_mod.IvfPqIndex.build(vectors.ids, vectors.matrix, params, seed=args.seed)
    index_mod.save_index(args.out, idx)
    print(f"index: kind={args.kind} seed={args.seed} count={len(idx)} dim={idx.dim} -> {args.out}")
    return 0


# ---------------------------------------------------------------------------
# query
# ---------------------------------------------------------------------------

def _add_query(subparsers) -> _Sub:
    sub = _Sub(subparsers.add_parser("query", help="rank neighbors for one record"))
    sub.add("--index", type=str, required=True)
    sub.add("--vectors", type=str, required=True)
    sub.add("--corpus", type=str, required=True)
    sub.add("--id", type=str, default=None, help="query by corpus record id")
    sub.add("--record", type=str, default=None, help="inline JSON record to vectorize")
    sub.add("--titles", type=str, default=None, help="title embeddings (inline records)")
    sub.add("--skills", type=str, default=None, help="skill embeddings (inline records)")
    sub.add("--curated", type=str, default=None)
    sub.add("--w-loc", type=float, default=1.0)
    sub.add("--k", type=int, default=50)
    sub.add("--nprobe", type=int, default=None)
    sub.add("--compare", action="store_true", help="report overlap against the exact flat ranking")
    return sub


def cmd_query(args) -> int:
    if (args.id is None) == (args.record is None):
        raise UsageError("provide exactly one of --id or --record")
    if args.k < 1:
        raise UsageError("--k must be >= 1")
    idx = index_mod.load_index(_require_file(args.index, "index file"))
    vectors = compose.load_vectors(_require_file(args.vectors, "vector file"))
    titles, skills = corpus.Vocabulary(), corpus.Vocabulary()
    postings, _ = corpus.read_postings(_require_file(args.corpus, "corpus file"), titles, skills, strict=True)
    corpus_by_id = {p.id: p for p in postings}

    self_id = None
    if args.id is not None:
        if args.id not in corpus_by_id:
            raise DataError(f"unknown query id {args.id!r}")
        by_id = vectors.by_id()
        if args.id not in by_id:
            raise DataError(f"query id {args.id!r} has no vector")
        query_posting = corpus_by_id[args.id]
        query_vec = by_id[args.id]
        self_id = args.id
    else:
        if not args.titles or not args.skills:
            raise UsageError("--record queries need --titles and --skills")
        titles_vocab, skills_vocab, space = _load_space(args.titles, args.skills)
        parsed, _ = corpus.parse_postings([args.record], titles_vocab, skills_vocab, strict=True)
        if not parsed:
            raise DataError("inline record is empty")
        query_posting = parsed[0]
        table = None
        if args.curated:
            table = corpus.read_curated(
                _require_file(args.curated, "curated table"), titles_vocab, skills_vocab
            )
        query_vec = compose.vectorize_posting(
            query_posting, space, table, w_loc=args.w_loc
        ).full.astype(np.float32)

    fetch = args.k + (1 if self_id else 0)
    if isinstance(idx, index_mod.IvfPqIndex):
        raw = idx.search(query_vec, fetch, nprobe=args.nprobe)
    else:
        raw = idx.search(query_vec, fetch)
    results = [(rid, d) for rid, d in raw if rid != self_id][: args.k]

    print("rank\tid\tdistance\tmiles\ttitle_match")
    for rank, (rid, dist) in enumerate(results, start=1):
        p = corpus_by_id.get(rid)
        if p is None:
            raise DataError(f"index id {rid!r} not present in the corpus")
        miles = evaluation.haversine_miles(
            query_posting.lat_deg, query_posting.lon_deg, p.lat_deg, p.lon_deg
        )
        match = p.title_id == query_posting.title_id
        print(f"{rank}\t{rid}\t{dist:.6f}\t{miles:.2f}\t{str(match).lower()}")

    if args.compare:
        flat = index_mod.FlatIndex(vectors.ids, vectors.matrix)
        exact_raw = flat.search(query_vec, fetch)
        exact = [(rid, d) for rid, d in exact_raw if rid != self_id][: args.k]
        exact_ids = {rid for rid, _ in exact}
        got_ids = {rid for rid, _ in results}
        overlap = len(exact_ids & got_ids)
        denom = max(1, len(exact_ids))
        print(f"# compare: overlap={overlap}/{denom} recall={overlap / denom:.4f}")
    return 0


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------

def _add_evaluate(subparsers) -> _Sub:
    sub = _Sub(subparsers.add_parser("evaluate", help="compute recommendation metrics"))
    sub.add("--index", type=str, required=True)
    sub.add("--vectors", type=str, required=True)
    sub.add("--corpus", type=str, required=True)
    sub.add("--queries", type=int, default=500)
    sub.add("--k", type=int, default=50)
    sub.add("--radius", type=float, default=50.0)
    sub.add("--nprobe", type=int, default=None)
    sub.add("--seed", type=int, default=0)
    sub.add("--label", type=str, default="model")
    sub.add("--out-dir", type=str, required=True)
    return sub


def cmd_evaluate(args) -> int:
    if args.queries < 1 or args.k < 1 or args.radius < 0:
        raise UsageError("--queries and --k must be >= 1 and --radius >= 0")
    idx = index_mod.load_index(_require_file(args.index, "index file"))
    vectors = compose.load_vectors(_require_file(args.vectors, "vector file"))
    titles, skills = corpus.Vocabulary(), corpus.Vocabulary()
    postings, _ = corpus.read_postings(_require_file(args.corpus, "corpus file"), titles, skills, strict=True)
    report, _sets, per_query = evaluation.evaluate_model(
        postings,
        idx,
        vectors.by_id(),
        num_queries=args.queries,
        seed=args.seed,
        k=args.k,
        radius_miles=args.radius,
        nprobe=args.nprobe,
    )
    out = _out_dir(args.out_dir)
    table_text = evaluation.format_report_table(report, label=args.label)
    (out / "report.txt").write_text(table_text, encoding="utf-8")
    evaluation.write_report_kv(out / "report.kv", report)
    evaluation.write_per_query_csv(out / "per_query.csv", per_query)
    print(f"evaluate: seed={args.seed} queries={report.num_queries} k={args.k} radius={args.radius}")
    print(table_text, end="")
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> tuple[_Parser, dict[str, _Sub]]:
    parser = _Parser(prog="jobspace", description=__doc__)
    subparsers = parser.add_subparsers(dest="command", required=True)
    subs = {
        "synth": _add_synth(subparsers),
        "train": _add_train(subparsers),
        "vectorize": _add_vectorize(subparsers),
        "index": _add_index(subparsers),
        "query": _add_query(subparsers),
        "evaluate": _add_evaluate(subparsers),
    }
    return parser, subs


_HANDLERS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "vectorize": cmd_vectorize,
    "index": cmd_index,
    "query": cmd_query,
    "evaluate": cmd_evaluate,
}


def run(argv: list[str]) -> int:
    parser, subs = build_parser()
    config_path = _scan_config(argv)
    if config_path is not None:
        if not argv or argv[0] not in subs:
            raise UsageError("a subcommand must precede --config")
        subs[argv[0]].apply_config(_load_config_file(config_path))
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except JobspaceError:
        raise
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"invalid JSON: {exc}") from exc
    except OSError as exc:
        raise DataError(str(exc)) from exc


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        return run(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return exc.exit_code
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return exc.exit_code
    except JobspaceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
