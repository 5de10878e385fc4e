"""Command-line pipeline driver.

Each subcommand runs one stage against a run directory. Stages are
idempotent: a completed stage is skipped unless --force is given, and the
manifest refuses to mix artifacts from different configs. A lock file keeps
two processes out of the same run directory.

Exit codes: 0 success, 2 bad input or config, 3 stage ordering violation,
4 gateway transport or parse failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from contextlib import contextmanager
from pathlib import Path

from . import __version__
from .ablation import DEFAULT_STRATEGIES, load_instances, run_ablation
from .atomics import AtomicUnit, ValidInformationPool, build_pool, pool_stats
from .config import BACKEND_MOCK, RETRIEVER_IDS, RunConfig, load_config
from .corpus import Chunk, chunk_corpus, ingest
from .e2e import MODE_PARAMETRIC, MODE_WITH_RETRIEVAL, decompose, run_mode
from .errors import ParseError, StageOrderError, TransportError, ValidationError
from .evalkit.bm25 import BM25Index
from .evalkit.dense import EmbeddingIndex, dense_search
from .evalkit.report import (
    METRIC_KEYS,
    GoldSpec,
    RetrievalRun,
    evaluate_run,
    metric_report,
    render_table,
)
from .gateway.core import Gateway
from .gateway.mock import MockBackend
from .gateway.provider import HttpProviderBackend
from .gateway.types import PriceTable
from .manifest import RunManifest
from .qgen import BenchmarkItem, generate_benchmark
from .redundancy import (
    EquivalenceMap,
    build_equivalence_map,
    redundancy_stat,
    similarity_stat,
)
from .util import read_json, read_jsonl, write_json, write_jsonl

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_STAGE_ORDER = 3
EXIT_GATEWAY = 4

LOCK_NAME = ".lock"
EMBED_BATCH = 128

STAGE_HELP = {
    "ingest": "read the corpus and write token-budgeted chunks",
    "atoms": "extract atomic statements, filter validity, rank and select",
    "redundancy": "embed atoms and build the judged equivalence map",
    "stats": "embed chunks and report similarity/redundancy statistics",
    "generate": "sample evidence and generate the benchmark items",
    "retrieve": "run the configured retrievers over the items",
    "evaluate": "score retrieval runs against redundancy-aware gold",
    "e2e": "answer items with and without retrieval and decompose accuracy",
    "ablate": "compare prompting/aggregation ranking strategies",
    "cost": "print the accumulated gateway cost ledger",
}


# -- shared plumbing --------------------------------------------------------


@contextmanager
def run_lock(run_dir: Path):
    """Exclusive per-run-directory lock via O_CREAT|O_EXCL."""
    run_dir.mkdir(parents=True, exist_ok=True)
    lock = run_dir / LOCK_NAME
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ValidationError(
            f"run directory {run_dir} is locked by another process "
            f"(remove {lock} if stale)"
        ) from None
    try:
        os.write(fd, f"{os.getpid()}\n".encode("ascii"))
        yield
    finally:
        os.close(fd)
        try:
            lock.unlink()
        except FileNotFoundError:
            pass


def price_table(cfg: RunConfig) -> PriceTable:
    return PriceTable(
        prompt_per_1k=cfg.prices.prompt_per_1k,
        completion_per_1k=cfg.prices.completion_per_1k,
        embed_per_1k=cfg.prices.embed_per_1k,
    )


def build_gateway(cfg: RunConfig, run_dir: Path, seed: int | None = None) -> Gateway:
    if cfg.backend == BACKEND_MOCK:
        backend = MockBackend(
            seed=cfg.seed if seed is None else seed,
            embed_dim=cfg.mock_embed_dim,
        )
    else:
        backend = HttpProviderBackend(
            endpoint=cfg.provider.endpoint,
            chat_model=cfg.provider.chat_model,
            embed_model=cfg.provider.embed_model,
            api_key_env=cfg.provider.api_key_env,
        )
    transcript = run_dir / "transcripts.jsonl" if cfg.transcripts else None
    return Gateway(
        backend,
        prices=price_table(cfg),
        max_in_flight=cfg.max_in_flight,
        transcript_path=transcript,
    )


def merge_costs(
    run_dir: Path, report_stages: dict, cfg: RunConfig, command: str
) -> list[str]:
    """Fold one command's gateway usage into costs.json.

    Raw integer token counts are stored per command, so re-running a stage
    with --force replaces its contribution instead of double counting. The
    merged per-stage and total costs are recomputed from token totals in
    sorted order, keeping the bytes identical across runs.
    """
    path = run_dir / "costs.json"
    if not report_stages and not path.exists():
        return []
    data = read_json(path) if path.exists() else {}
    by_command = data.get("by_command", {})
    if report_stages:
        by_command[command] = {
            stage: {
                "calls": row["calls"],
                "prompt_tokens": row["prompt_tokens"],
                "completion_tokens": row["completion_tokens"],
            }
            for stage, row in sorted(report_stages.items())
        }
    prices = price_table(cfg)
    stages: dict[str, dict] = {}
    for command_stages in by_command.values():
        for stage, row in command_stages.items():
            merged = stages.setdefault(
                stage, {"calls": 0, "prompt_tokens": 0, "completion_tokens": 0}
            )
            merged["calls"] += row["calls"]
            merged["prompt_tokens"] += row["prompt_tokens"]
            merged["completion_tokens"] += row["completion_tokens"]
    total = {"calls": 0, "prompt_tokens": 0, "completion_tokens": 0, "cost_usd": 0.0}
    for stage in sorted(stages):
        row = stages[stage]
        row["cost_usd"] = prices.cost(
            row["prompt_tokens"], row["completion_tokens"], stage == "embedding"
        )
        total["calls"] += row["calls"]
        total["prompt_tokens"] += row["prompt_tokens"]
        total["completion_tokens"] += row["completion_tokens"]
        total["cost_usd"] += row["cost_usd"]
    write_json(path, {"by_command": by_command, "stages": stages, "total": total})
    return ["costs.json"]


def gateway_costs(
    run_dir: Path, gateway: Gateway, cfg: RunConfig, command: str
) -> list[str]:
    return merge_costs(run_dir, gateway.cost_report()["stages"], cfg, command)


def embed_texts(gateway: Gateway, texts: list[str], batch: int = EMBED_BATCH):
    vectors = []
    for start in range(0, len(texts), batch):
        vectors.extend(gateway.embed(texts[start : start + batch]))
    return vectors


def _chunk_objects(records: list[dict]) -> list[Chunk]:
    return [
        Chunk(
            chunk_id=r["chunk_id"],
            doc_id=r["doc_id"],
            ordinal=r["ordinal"],
            text=r["text"],
            token_count=r["token_count"],
        )
        for r in records
    ]


def _load_atoms(path: Path) -> list[AtomicUnit]:
    return [AtomicUnit.from_record(r) for r in read_jsonl(path)]


def _load_items(path: Path) -> list[BenchmarkItem]:
    return [BenchmarkItem.from_record(r) for r in read_jsonl(path)]


# -- stage handlers ---------------------------------------------------------


def _stage_ingest(cfg: RunConfig, manifest: RunManifest, args) -> str:
    if not cfg.corpus_source:
        raise ValidationError("config has no corpus_source; ingest needs one")
    docs, errors = ingest(cfg.corpus_source, cfg.domain_tag)
    chunks = chunk_corpus(docs, cfg.token_budget)
    domain_of_doc = {d.doc_id: d.domain_tag for d in docs}
    write_jsonl(
        manifest.run_dir / "chunks.jsonl",
        (c.to_record(domain_of_doc[c.doc_id]) for c in chunks),
    )
    names = ["chunks.jsonl"]
    if errors:
        write_jsonl(
            manifest.run_dir / "ingest_errors.jsonl",
            ({"path": e.path, "reason": e.reason} for e in errors),
        )
        names.append("ingest_errors.jsonl")
    manifest.record_stage("ingest", names)
    return (
        f"ingest: {len(docs)} documents -> {len(chunks)} chunks "
        f"({len(errors)} files skipped)"
    )


def _stage_atoms(cfg: RunConfig, manifest: RunManifest, args) -> str:
    chunks = _chunk_objects(read_jsonl(manifest.require_artifact("chunks.jsonl")))
    gateway = build_gateway(cfg, manifest.run_dir)
    pool, all_atoms, skips = build_pool(chunks, gateway, cfg.top_k_atoms)
    write_jsonl(manifest.run_dir / "atoms.jsonl", (a.to_record() for a in all_atoms))
    write_jsonl(manifest.run_dir / "pool.jsonl", (a.to_record() for a in pool.atoms))
    write_json(
        manifest.run_dir / "atomics_stats.json", pool_stats(all_atoms, chunks, skips)
    )
    names = ["atoms.jsonl", "pool.jsonl", "atomics_stats.json"]
    names += gateway_costs(manifest.run_dir, gateway, cfg, "atoms")
    manifest.record_stage("atoms", names)
    valid = sum(1 for a in all_atoms if a.valid)
    return (
        f"atoms: {len(all_atoms)} extracted, {valid} valid, "
        f"pool {len(pool)} ({len(skips)} chunks skipped)"
    )


def _stage_redundancy(cfg: RunConfig, manifest: RunManifest, args) -> str:
    all_atoms = _load_atoms(manifest.require_artifact("atoms.jsonl"))
    targets = _load_atoms(manifest.require_artifact("pool.jsonl"))
    gateway = build_gateway(cfg, manifest.run_dir)
    vectors = embed_texts(gateway, [a.text for a in all_atoms])
    embeddings = {a.atom_id: list(v.values) for a, v in zip(all_atoms, vectors)}
    eqmap, records = build_equivalence_map(
        targets, all_atoms, embeddings, gateway, cfg.tau
    )
    write_jsonl(
        manifest.run_dir / "atom_embeddings.jsonl",
        (
            {"atom_id": a.atom_id, "model_id": v.model_id, "values": list(v.values)}
            for a, v in zip(all_atoms, vectors)
        ),
    )
    write_jsonl(manifest.run_dir / "equivalence.jsonl", records)
    names = ["atom_embeddings.jsonl", "equivalence.jsonl"]
    names += gateway_costs(manifest.run_dir, gateway, cfg, "redundancy")
    manifest.record_stage("redundancy", names)
    redundant = sum(1 for r in records if r["equivalents"])
    return (
        f"redundancy: {len(targets)} targets, {redundant} with equivalents "
        f"(tau={cfg.tau})"
    )


def _stage_stats(cfg: RunConfig, manifest: RunManifest, args) -> str:
    chunk_records = read_jsonl(manifest.require_artifact("chunks.jsonl"))
    eq_records = read_jsonl(manifest.require_artifact("equivalence.jsonl"))
    gateway = build_gateway(cfg, manifest.run_dir)
    vectors = embed_texts(gateway, [r["text"] for r in chunk_records])
    write_jsonl(
        manifest.run_dir / "chunk_embeddings.jsonl",
        (
            {"chunk_id": r["chunk_id"], "model_id": v.model_id, "values": list(v.values)}
            for r, v in zip(chunk_records, vectors)
        ),
    )
    sim = similarity_stat(vectors)
    red = redundancy_stat(EquivalenceMap.from_records(eq_records))
    write_json(
        manifest.run_dir / "overlap_stats.json",
        {
            "similarity": sim,
            "redundancy": red,
            "chunks": len(chunk_records),
            "targets": len(eq_records),
        },
    )
    names = ["chunk_embeddings.jsonl", "overlap_stats.json"]
    names += gateway_costs(manifest.run_dir, gateway, cfg, "stats")
    manifest.record_stage("stats", names)
    return (
        f"stats: similarity {sim:.2f}, redundancy {red:.2f} "
        f"over {len(chunk_records)} chunks"
    )


def _stage_generate(cfg: RunConfig, manifest: RunManifest, args) -> str:
    chunk_records = read_jsonl(manifest.require_artifact("chunks.jsonl"))
    pool = ValidInformationPool(_load_atoms(manifest.require_artifact("pool.jsonl")))
    eqmap = EquivalenceMap.from_records(
        read_jsonl(manifest.require_artifact("equivalence.jsonl"))
    )
    chunk_text_of = {r["chunk_id"]: r["text"] for r in chunk_records}
    domain_of_chunk = {
        r["chunk_id"]: r.get("domain_tag", cfg.domain_tag) for r in chunk_records
    }
    gateway = build_gateway(cfg, manifest.run_dir)
    items, candidates, outcomes, stats = generate_benchmark(
        pool,
        eqmap,
        chunk_text_of,
        gateway,
        cfg.seed,
        hops=tuple(cfg.hops),
        samples_per_hop=cfg.samples_per_hop,
        pool_sample_size=cfg.pool_sample,
        candidates_per_sample=cfg.candidates_per_sample,
        domain_tag=cfg.domain_tag,
        domain_of_chunk=domain_of_chunk,
    )
    write_jsonl(manifest.run_dir / "items.jsonl", (i.to_record() for i in items))
    write_jsonl(
        manifest.run_dir / "candidates.jsonl", (c.to_record() for c in candidates)
    )
    write_jsonl(manifest.run_dir / "samples.jsonl", (o.to_record() for o in outcomes))
    write_json(manifest.run_dir / "genstats.json", stats)
    names = ["items.jsonl", "candidates.jsonl", "samples.jsonl", "genstats.json"]
    names += gateway_costs(manifest.run_dir, gateway, cfg, "generate")
    manifest.record_stage("generate", names)
    rate = stats["overall"]["success_rate"]
    return (
        f"generate: {len(items)} items from {len(outcomes)} samples "
        f"({rate:.1f}% success)"
    )


def _stage_retrieve(cfg: RunConfig, manifest: RunManifest, args) -> str:
    items = _load_items(manifest.require_artifact("items.jsonl"))
    chunk_records = read_jsonl(manifest.require_artifact("chunks.jsonl"))
    retrievers = [args.retriever] if args.retriever else list(cfg.retrievers)
    gateway = None
    new_records: list[dict] = []
    for retriever_id in retrievers:
        if retriever_id == "bm25":
            index = BM25Index(chunk_records, k1=cfg.bm25_k1, b=cfg.bm25_b)
            rankings = {
                item.item_id: [
                    cid for cid, _ in index.search(item.question, cfg.eval_k)
                ]
                for item in items
            }
            parameters = {"k": cfg.eval_k, "k1": cfg.bm25_k1, "b": cfg.bm25_b}
        else:
            emb_records = read_jsonl(
                manifest.require_artifact("chunk_embeddings.jsonl")
            )
            index = EmbeddingIndex(
                [r["chunk_id"] for r in emb_records],
                [r["values"] for r in emb_records],
                model_id=emb_records[0]["model_id"] if emb_records else None,
            )
            if gateway is None:
                gateway = build_gateway(cfg, manifest.run_dir)
            rankings = {
                item.item_id: [
                    cid
                    for cid, _ in dense_search(item.question, index, gateway, cfg.eval_k)
                ]
                for item in items
            }
            parameters = {"k": cfg.eval_k, "model_id": index.model_id}
        run = RetrievalRun(
            retriever_id=retriever_id, rankings=rankings, parameters=parameters
        )
        new_records.extend(run.to_records())
    path = manifest.run_dir / "run.jsonl"
    kept = []
    if path.exists():
        kept = [
            r for r in read_jsonl(path) if r["retriever_id"] not in set(retrievers)
        ]
    write_jsonl(path, kept + new_records)
    names = ["run.jsonl"]
    if gateway is not None:
        names += gateway_costs(manifest.run_dir, gateway, cfg, "retrieve")
    manifest.record_stage("retrieve", names)
    return (
        f"retrieve: {', '.join(retrievers)} over {len(items)} items "
        f"(k={cfg.eval_k})"
    )


def _stage_evaluate(cfg: RunConfig, manifest: RunManifest, args) -> str:
    items = _load_items(manifest.require_artifact("items.jsonl"))
    run_records = read_jsonl(manifest.require_artifact("run.jsonl"))
    gold = GoldSpec.from_items(items)
    runs = RetrievalRun.from_records(run_records)
    report = metric_report(runs, gold, cfg.eval_k)
    item_records = []
    for run in runs:
        item_records.extend(evaluate_run(run, gold, cfg.eval_k))
    write_jsonl(manifest.run_dir / "item_metrics.jsonl", item_records)
    write_json(manifest.run_dir / "metrics.json", report)
    _write_metrics_tsv(manifest.run_dir / "metrics.tsv", report)
    manifest.record_stage(
        "evaluate", ["metrics.json", "metrics.tsv", "item_metrics.jsonl"]
    )
    print(render_table(report))
    parts = [
        f"{row['retriever_id']} coverage {row['coverage_at_k']:.4f}"
        for row in report["overall"]
    ]
    return f"evaluate: k={cfg.eval_k}; " + ", ".join(parts)


def _write_metrics_tsv(path: Path, report: dict) -> None:
    lines = ["\t".join(("retriever", "domain", "hop", "items") + METRIC_KEYS)]
    for row in report["slices"]:
        lines.append(
            "\t".join(
                [row["retriever_id"], row["domain_tag"], str(row["hop"]), str(row["items"])]
                + [f"{row[key]:.6f}" for key in METRIC_KEYS]
            )
        )
    for row in report["overall"]:
        lines.append(
            "\t".join(
                [row["retriever_id"], "ALL", "-", str(row["items"])]
                + [f"{row[key]:.6f}" for key in METRIC_KEYS]
            )
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _stage_e2e(cfg: RunConfig, manifest: RunManifest, args) -> str:
    items = _load_items(manifest.require_artifact("items.jsonl"))
    runs = RetrievalRun.from_records(
        read_jsonl(manifest.require_artifact("run.jsonl"))
    )
    chunk_records = read_jsonl(manifest.require_artifact("chunks.jsonl"))
    item_metric_records = read_jsonl(manifest.require_artifact("item_metrics.jsonl"))
    chunk_lookup = {r["chunk_id"]: (r["doc_id"], r["text"]) for r in chunk_records}
    gateway = build_gateway(cfg, manifest.run_dir)

    parametric = run_mode(items, gateway, MODE_PARAMETRIC)
    parametric_map = {j.item_id: j.correct for j in parametric}
    judgments = list(parametric)
    reports = {}
    for run in runs:
        with_retrieval = run_mode(
            items,
            gateway,
            MODE_WITH_RETRIEVAL,
            retriever_id=run.retriever_id,
            rankings=run.rankings,
            chunk_lookup=chunk_lookup,
            k=cfg.eval_k,
            context_budget=cfg.context_budget,
        )
        judgments.extend(with_retrieval)
        retrieval_map = {j.item_id: j.correct for j in with_retrieval}
        perfrecall = {
            r["item_id"]: int(r["perfrecall_at_k"])
            for r in item_metric_records
            if r["retriever_id"] == run.retriever_id
        }
        reports[run.retriever_id] = decompose(
            retrieval_map, parametric_map, perfrecall
        )
    write_jsonl(
        manifest.run_dir / "e2e_judgments.jsonl", (j.to_record() for j in judgments)
    )
    write_json(
        manifest.run_dir / "e2e_report.json",
        {"k": cfg.eval_k, "retrievers": reports},
    )
    names = ["e2e_judgments.jsonl", "e2e_report.json"]
    names += gateway_costs(manifest.run_dir, gateway, cfg, "e2e")
    manifest.record_stage("e2e", names)
    gains = ", ".join(
        f"{rid} rag_gain {rep['rag_gain']:+.2f}" for rid, rep in sorted(reports.items())
    )
    return f"e2e: {len(items)} items; {gains}"


def _stage_ablate(cfg: RunConfig, manifest: RunManifest, args) -> str:
    dataset = args.dataset or cfg.ablation.dataset
    if not dataset:
        raise ValidationError(
            "ablate needs a dataset (--dataset or ablation.dataset in config)"
        )
    instances = load_instances(read_jsonl(dataset))
    strategies = []
    for entry in cfg.ablation.strategies:
        if len(entry) != 2:
            raise ValidationError(f"bad ablation strategy {entry!r}")
        strategies.append((entry[0], entry[1]))
    if not strategies:
        strategies = list(DEFAULT_STRATEGIES)

    gateways: list[Gateway] = []

    def factory(seed: int) -> Gateway:
        gateway = build_gateway(cfg, manifest.run_dir, seed=seed)
        gateways.append(gateway)
        return gateway

    result = run_ablation(
        instances,
        factory,
        strategies=strategies,
        runs=cfg.ablation.runs,
        seed=cfg.seed,
    )
    write_json(manifest.run_dir / "ablation.json", result)
    combined: dict[str, dict] = {}
    for gateway in gateways:
        for stage, row in gateway.cost_report()["stages"].items():
            merged = combined.setdefault(
                stage, {"calls": 0, "prompt_tokens": 0, "completion_tokens": 0}
            )
            merged["calls"] += row["calls"]
            merged["prompt_tokens"] += row["prompt_tokens"]
            merged["completion_tokens"] += row["completion_tokens"]
    names = ["ablation.json"]
    names += merge_costs(manifest.run_dir, combined, cfg, "ablate")
    manifest.record_stage("ablate", names)
    return (
        f"ablate: {len(strategies)} strategies x {cfg.ablation.runs} runs "
        f"over {result['instances']} instances"
    )


def _render_costs(run_dir: Path) -> str:
    path = run_dir / "costs.json"
    if not path.exists():
        raise StageOrderError(
            f"no costs recorded in {run_dir}; run a gateway stage first",
            missing_artifact="costs.json",
        )
    data = read_json(path)
    rows = [("stage", "calls", "prompt_tok", "completion_tok", "cost_usd")]
    for stage in sorted(data["stages"]):
        row = data["stages"][stage]
        rows.append(
            (
                stage,
                str(row["calls"]),
                str(row["prompt_tokens"]),
                str(row["completion_tokens"]),
                f"{row['cost_usd']:.6f}",
            )
        )
    total = data["total"]
    rows.append(
        (
            "TOTAL",
            str(total["calls"]),
            str(total["prompt_tokens"]),
            str(total["completion_tokens"]),
            f"{total['cost_usd']:.6f}",
        )
    )
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    return "\n".join(
        "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip()
        for row in rows
    )


_HANDLERS = {
    "ingest": _stage_ingest,
    "atoms": _stage_atoms,
    "redundancy": _stage_redundancy,
    "stats": _stage_stats,
    "generate": _stage_generate,
    "retrieve": _stage_retrieve,
    "evaluate": _stage_evaluate,
    "e2e": _stage_e2e,
    "ablate": _stage_ablate,
}


# -- entry point ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="redeval",
        description="Redundancy-aware multi-hop retrieval benchmark pipeline.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="stage", required=True)
    for name, help_text in STAGE_HELP.items():
        stage = sub.add_parser(name, help=help_text)
        stage.add_argument("--config", required=True, help="YAML run config")
        stage.add_argument("--run-dir", default=None, help="override config run_dir")
        stage.add_argument("--seed", type=int, default=None, help="override config seed")
        stage.add_argument(
            "--backend", choices=("mock", "provider"), default=None,
            help="override config backend",
        )
        stage.add_argument(
            "--force", action="store_true",
            help="recompute a completed stage / accept a changed config",
        )
        stage.add_argument("-v", "--verbose", action="store_true")
        if name == "retrieve":
            stage.add_argument(
                "--retriever", choices=RETRIEVER_IDS, default=None,
                help="run only this retriever (default: all configured)",
            )
        if name == "ablate":
            stage.add_argument(
                "--dataset", default=None, help="labeled instances jsonl"
            )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(
            args.config,
            {"run_dir": args.run_dir, "seed": args.seed, "backend": args.backend},
        )
        run_dir = Path(cfg.run_dir)
        if args.stage == "cost":
            print(_render_costs(run_dir))
            return EXIT_OK
        with run_lock(run_dir):
            manifest = RunManifest.open(
                run_dir, cfg.digest(), cfg.seed, cfg.to_dict(), force=args.force
            )
            if manifest.stage_done(args.stage) and not args.force:
                print(
                    f"{args.stage}: already complete in {run_dir} "
                    f"(use --force to recompute)"
                )
                return EXIT_OK
            print(_HANDLERS[args.stage](cfg, manifest, args))
        return EXIT_OK
    except StageOrderError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE_ORDER
    except (TransportError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GATEWAY
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
