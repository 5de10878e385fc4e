"""Run manifest: which stages ran, with what config, producing which bytes.

One manifest per run directory. A rerun with the same config digest updates
the current version in place (stages are idempotent unless forced); a
changed config refuses to proceed unless forced, in which case a new
version is appended, never overwritten. Every artifact a stage writes is
recorded with its sha256, so two runs are comparable by digests alone.
"""

from __future__ import annotations

import datetime
from pathlib import Path

from . import __version__
from .errors import StageOrderError, ValidationError
from .util import read_json, sha256_file, write_json

MANIFEST_NAME = "manifest.json"

# Which stage writes each artifact; ordering checks use this to name the
# stage a missing input comes from.
ARTIFACT_PRODUCERS = {
    "chunks.jsonl": "ingest",
    "ingest_errors.jsonl": "ingest",
    "atoms.jsonl": "atoms",
    "pool.jsonl": "atoms",
    "atomics_stats.json": "atoms",
    "atom_embeddings.jsonl": "redundancy",
    "equivalence.jsonl": "redundancy",
    "chunk_embeddings.jsonl": "stats",
    "overlap_stats.json": "stats",
    "candidates.jsonl": "generate",
    "items.jsonl": "generate",
    "genstats.json": "generate",
    "samples.jsonl": "generate",
    "run.jsonl": "retrieve",
    "metrics.json": "evaluate",
    "metrics.tsv": "evaluate",
    "item_metrics.jsonl": "evaluate",
    "e2e_judgments.jsonl": "e2e",
    "e2e_report.json": "e2e",
    "ablation.json": "ablate",
    "costs.json": "cost",
}


class RunManifest:
    def __init__(self, run_dir: str | Path, data: dict):
        self.run_dir = Path(run_dir)
        self.data = data

    # -- construction ------------------------------------------------------

    @classmethod
    def open(
        cls, run_dir: str | Path, config_digest: str, seed: int,
        config: dict, force: bool = False,
    ) -> "RunManifest":
        """Load or create the manifest for run_dir under this config.

        A differing config digest is fatal without force; with force a new
        manifest version starts (prior versions are kept).
        """
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        path = run_dir / MANIFEST_NAME
        version_entry = {
            "version": 1,
            "config_digest": config_digest,
            "seed": seed,
            "config": config,
            "stages": {},
        }
        if not path.exists():
            data = {"tool_version": __version__, "versions": [version_entry]}
            manifest = cls(run_dir, data)
            manifest.save()
            return manifest
        data = read_json(path)
        current = data["versions"][-1]
        if current["config_digest"] != config_digest:
            if not force:
                raise ValidationError(
                    f"run directory {run_dir} was built with a different config "
                    f"(digest {current['config_digest'][:12]}... vs "
                    f"{config_digest[:12]}...); rerun with --force to start a "
                    f"new manifest version"
                )
            version_entry["version"] = current["version"] + 1
            data["versions"].append(version_entry)
        manifest = cls(run_dir, data)
        manifest.save()
        return manifest

    @classmethod
    def load(cls, run_dir: str | Path) -> "RunManifest":
        path = Path(run_dir) / MANIFEST_NAME
        if not path.exists():
            raise StageOrderError(
                f"no manifest in {run_dir}; run `ingest` first",
                missing_artifact=MANIFEST_NAME,
            )
        return cls(run_dir, read_json(path))

    # -- accessors -----------------------------------------------------------

    @property
    def current(self) -> dict:
        return self.data["versions"][-1]

    def save(self) -> None:
        write_json(self.run_dir / MANIFEST_NAME, self.data)

    def stage_done(self, stage: str) -> bool:
        return stage in self.current["stages"]

    def artifacts(self) -> dict[str, str]:
        merged: dict[str, str] = {}
        for stage in self.current["stages"].values():
            merged.update(stage["artifacts"])
        return merged

    def record_stage(self, stage: str, artifact_names: list[str]) -> None:
        """Digest the named files and record the stage completion."""
        artifacts = {}
        for name in artifact_names:
            path = self.run_dir / name
            if not path.exists():
                raise ValidationError(f"stage {stage} claims missing artifact {name}")
            artifacts[name] = sha256_file(path)
        self.current["stages"][stage] = {
            "artifacts": artifacts,
            "completed_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        }
        self.save()

    def require_artifact(self, name: str) -> Path:
        """Path of an upstream artifact, or a typed ordering error naming the
        stage that should have produced it."""
        producer = ARTIFACT_PRODUCERS.get(name)
        path = self.run_dir / name
        recorded = self.artifacts()
        if name not in recorded or not path.exists():
            hint = f"; run the `{producer}` stage first" if producer else ""
            raise StageOrderError(
                f"missing upstream artifact {name}{hint}",
                missing_artifact=name,
            )
        return path
