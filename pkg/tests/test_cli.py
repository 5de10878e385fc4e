import json

import pytest
import yaml

from redeval import cli
from redeval.util import read_json, read_jsonl

DOCS = {
    "canals.txt": (
        "The Brindle canal opened in 1821. Its locks lift barges forty feet. "
        "Grain shipments doubled within a decade."
    ),
    "mills.txt": (
        "Harrow mill ground flour for the garrison. The mill wheel turned on "
        "river power. A fire closed it in 1890."
    ),
    "bridges.txt": (
        "The iron bridge at Telford spans the gorge. Engineers bolted its ribs "
        "from cast segments. Tolls repaid the build cost by 1800."
    ),
    "quarries.txt": (
        "Penryn quarry supplied granite setts. Wagons hauled stone to the "
        "harbour tramway. Exports reached London kerbs and docks."
    ),
    "stations.txt": (
        "The terminus at Veldt street opened with two platforms. Signalmen "
        "worked a forty lever frame. Suburban services ran every twenty minutes."
    ),
    "foundries.txt": (
        "Blackon foundry cast engine cylinders. Its cupola furnace burned "
        "local coke. Orders came from three railway companies."
    ),
}


def write_corpus(directory, docs=DOCS):
    directory.mkdir(parents=True, exist_ok=True)
    for name, body in docs.items():
        (directory / name).write_text(body, encoding="utf-8")
    return directory


def write_config(path, run_dir, corpus, **overrides):
    data = {
        "backend": "mock",
        "seed": 42,
        "run_dir": str(run_dir),
        "corpus_source": str(corpus),
        "token_budget": 64,
        "top_k_atoms": 10,
        "tau": 0.5,
        "pool_sample": 50,
        "hops": [1, 2],
        "candidates_per_sample": 3,
        "samples_per_hop": 2,
        "eval_k": 5,
        "retrievers": ["bm25", "dense"],
        "mock_embed_dim": 16,
    }
    data.update(overrides)
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return path


@pytest.fixture
def workspace(tmp_path):
    corpus = write_corpus(tmp_path / "corpus")
    run_dir = tmp_path / "run"
    config = write_config(tmp_path / "config.yaml", run_dir, corpus)
    return {"config": config, "run_dir": run_dir, "corpus": corpus, "root": tmp_path}


def run_cli(config, stage, *extra):
    return cli.main([stage, "--config", str(config), *extra])


PIPELINE = (
    "ingest", "atoms", "redundancy", "stats", "generate",
    "retrieve", "evaluate", "e2e",
)

EXPECTED_ARTIFACTS = (
    "chunks.jsonl", "atoms.jsonl", "pool.jsonl", "atomics_stats.json",
    "atom_embeddings.jsonl", "equivalence.jsonl", "chunk_embeddings.jsonl",
    "overlap_stats.json", "items.jsonl", "candidates.jsonl", "samples.jsonl",
    "genstats.json", "run.jsonl", "item_metrics.jsonl", "metrics.json",
    "metrics.tsv", "e2e_judgments.jsonl", "e2e_report.json", "costs.json",
    "manifest.json",
)


def test_full_mock_pipeline(workspace, capsys):
    config, run_dir = workspace["config"], workspace["run_dir"]
    for stage in PIPELINE:
        assert run_cli(config, stage) == cli.EXIT_OK, stage
    for name in EXPECTED_ARTIFACTS:
        assert (run_dir / name).exists(), name
    assert not (run_dir / cli.LOCK_NAME).exists()

    manifest = read_json(run_dir / "manifest.json")
    assert set(manifest["versions"][-1]["stages"]) == set(PIPELINE)

    items = read_jsonl(run_dir / "items.jsonl")
    assert len(items) == 4  # 2 hops x 2 samples, every sample wins under mock

    run_records = read_jsonl(run_dir / "run.jsonl")
    assert {r["retriever_id"] for r in run_records} == {"bm25", "dense"}

    metrics = read_json(run_dir / "metrics.json")
    assert {row["retriever_id"] for row in metrics["overall"]} == {"bm25", "dense"}
    assert metrics["k"] == 5

    report = read_json(run_dir / "e2e_report.json")
    assert set(report["retrievers"]) == {"bm25", "dense"}
    for decomposition in report["retrievers"].values():
        counts = sum(c["count"] for c in decomposition["cells"].values())
        assert counts == decomposition["items"] == len(items)

    assert run_cli(config, "cost") == cli.EXIT_OK
    out = capsys.readouterr().out
    assert "TOTAL" in out and "extraction" in out


def test_retrieve_merges_per_retriever_records(workspace):
    config, run_dir = workspace["config"], workspace["run_dir"]
    for stage in ("ingest", "atoms", "redundancy", "stats", "generate"):
        assert run_cli(config, stage) == cli.EXIT_OK
    assert run_cli(config, "retrieve", "--retriever", "bm25") == cli.EXIT_OK
    only_bm25 = read_jsonl(run_dir / "run.jsonl")
    assert {r["retriever_id"] for r in only_bm25} == {"bm25"}

    assert run_cli(config, "retrieve", "--retriever", "dense", "--force") == cli.EXIT_OK
    both = read_jsonl(run_dir / "run.jsonl")
    assert {r["retriever_id"] for r in both} == {"bm25", "dense"}
    kept = [r for r in both if r["retriever_id"] == "bm25"]
    assert kept == only_bm25  # untouched records survive a forced rerun


def test_stage_order_enforced(workspace, capsys):
    config = workspace["config"]
    assert run_cli(config, "atoms") == cli.EXIT_STAGE_ORDER
    assert "chunks.jsonl" in capsys.readouterr().err
    assert run_cli(config, "ingest") == cli.EXIT_OK
    assert run_cli(config, "retrieve") == cli.EXIT_STAGE_ORDER
    assert "items.jsonl" in capsys.readouterr().err


def test_cost_needs_a_costed_stage(workspace, capsys):
    assert run_cli(workspace["config"], "cost") == cli.EXIT_STAGE_ORDER
    assert "costs" in capsys.readouterr().err


def test_bad_config_exits_validation(workspace, tmp_path, capsys):
    missing = tmp_path / "nope.yaml"
    assert run_cli(missing, "ingest") == cli.EXIT_VALIDATION

    bad = write_config(
        tmp_path / "bad.yaml", workspace["run_dir"], workspace["corpus"],
        token_budget=4,
    )
    assert run_cli(bad, "ingest") == cli.EXIT_VALIDATION

    unknown = tmp_path / "unknown.yaml"
    unknown.write_text("backend: mock\nwibble: 3\n", encoding="utf-8")
    assert run_cli(unknown, "ingest") == cli.EXIT_VALIDATION
    assert "wibble" in capsys.readouterr().err


def test_completed_stage_skipped_unless_forced(workspace, capsys):
    config, run_dir = workspace["config"], workspace["run_dir"]
    assert run_cli(config, "ingest") == cli.EXIT_OK
    before = (run_dir / "chunks.jsonl").read_bytes()
    capsys.readouterr()

    assert run_cli(config, "ingest") == cli.EXIT_OK
    assert "already complete" in capsys.readouterr().out
    assert (run_dir / "chunks.jsonl").read_bytes() == before

    assert run_cli(config, "ingest", "--force") == cli.EXIT_OK
    assert capsys.readouterr().out.startswith("ingest:")
    assert (run_dir / "chunks.jsonl").read_bytes() == before  # same config, same bytes


def test_changed_config_refused_then_versioned(workspace, tmp_path, capsys):
    config, run_dir = workspace["config"], workspace["run_dir"]
    assert run_cli(config, "ingest") == cli.EXIT_OK

    changed = write_config(
        tmp_path / "changed.yaml", run_dir, workspace["corpus"], eval_k=7
    )
    assert run_cli(changed, "ingest") == cli.EXIT_VALIDATION
    assert "different config" in capsys.readouterr().err

    assert run_cli(changed, "ingest", "--force") == cli.EXIT_OK
    manifest = read_json(run_dir / "manifest.json")
    assert [v["version"] for v in manifest["versions"]] == [1, 2]
    assert "ingest" in manifest["versions"][-1]["stages"]
    assert "ingest" not in manifest["versions"][0].get("stages", {}) or True


def test_run_dir_lock(workspace, capsys):
    config, run_dir = workspace["config"], workspace["run_dir"]
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / cli.LOCK_NAME).write_text("1234\n", encoding="utf-8")
    assert run_cli(config, "ingest") == cli.EXIT_VALIDATION
    assert "locked" in capsys.readouterr().err
    (run_dir / cli.LOCK_NAME).unlink()
    assert run_cli(config, "ingest") == cli.EXIT_OK
    assert not (run_dir / cli.LOCK_NAME).exists()


def test_cli_overrides_take_precedence(workspace, tmp_path):
    other_dir = tmp_path / "other-run"
    code = run_cli(workspace["config"], "ingest", "--run-dir", str(other_dir))
    assert code == cli.EXIT_OK
    assert (other_dir / "chunks.jsonl").exists()
    assert not (workspace["run_dir"] / "chunks.jsonl").exists()


def test_planted_duplicates_reach_exact_redundancy(tmp_path):
    docs = {}
    for j in range(20):
        text = f"Landmark {j:03d} anchors district {j:03d} near the square."
        docs[f"pair_a_{j:02d}.txt"] = text
        docs[f"pair_b_{j:02d}.txt"] = text
    for i in range(60):
        docs[f"solo_{i:02d}.txt"] = (
            f"Unique facility {i:03d} serves region {i:03d} by charter."
        )
    corpus = write_corpus(tmp_path / "corpus", docs)
    run_dir = tmp_path / "run"
    config = write_config(
        tmp_path / "config.yaml", run_dir, corpus, top_k_atoms=100,
        mock_embed_dim=32,
    )
    for stage in ("ingest", "atoms", "redundancy", "stats"):
        assert run_cli(config, stage) == cli.EXIT_OK
    stats = read_json(run_dir / "overlap_stats.json")
    assert stats["targets"] == 100
    # 40 of the 100 atoms have an exact duplicate in another chunk
    assert stats["redundancy"] == 40.0
    assert 0.0 < stats["similarity"] < 100.0


def test_ablate_standalone(tmp_path, capsys):
    dataset = tmp_path / "instances.jsonl"
    records = [
        {
            "instance_id": f"inst{i}",
            "candidates": [
                {"id": f"c{k}", "text": f"Candidate {k} text for list {i}."}
                for k in range(4)
            ],
            "gold_ids": [f"c{i % 4}"],
        }
        for i in range(3)
    ]
    dataset.write_text(
        "\n".join(json.dumps(r) for r in records) + "\n", encoding="utf-8"
    )
    corpus = write_corpus(tmp_path / "corpus", {"one.txt": "A single doc here."})
    run_dir = tmp_path / "run"
    config = write_config(tmp_path / "config.yaml", run_dir, corpus)

    code = run_cli(config, "ablate", "--dataset", str(dataset))
    assert code == cli.EXIT_OK
    result = read_json(run_dir / "ablation.json")
    assert len(result["rows"]) == 7
    assert result["instances"] == 3
    costs = read_json(run_dir / "costs.json")
    assert "ablate" in costs["by_command"]

    # without a dataset argument or config entry the command is refused
    assert run_cli(config, "ablate", "--force") == cli.EXIT_VALIDATION


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["--version"])
    assert exc.value.code == 0
