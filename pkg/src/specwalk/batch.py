"""Batch attack driver shared by the CLI and the acceptance gate."""
from __future__ import annotations

import dataclasses
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable

from .attack import AttackConfig, AttackError, AttackResult, run_attack
from .dataset import DatasetManifest, ManifestEntry, select_targets, write_xyz
from .oracle import BudgetExhaustedError, HardLabelOracle
from .results import JsonlWriter, ResultRecord, config_hash, summarize


def attack_one_source(manifest: DatasetManifest, entry: ManifestEntry,
                      run_seed: int, cfg: AttackConfig,
                      oracle: HardLabelOracle) -> AttackResult:
    """Run the full attack for one manifest entry with a derived seed."""
    source_id = Path(entry.path).stem
    source = manifest.load_cloud(entry)
    run_cfg = dataclasses.replace(cfg, rng_seed=run_seed)
    targets = select_targets(manifest, entry.label, cfg.target_count,
                             run_seed, exclude_id=source_id)
    return run_attack(source, entry.label, targets, oracle, run_cfg)


def run_batch(manifest: DatasetManifest, cfg: AttackConfig,
              oracle_factory: Callable[[], HardLabelOracle],
              out_jsonl: str | Path | None = None,
              adv_dir: str | Path | None = None,
              workers: int = 1,
              ) -> tuple[list[ResultRecord], list[AttackResult | None]]:
    """Attack every manifest entry as a source.

    Each source gets its own oracle instance (hence its own ledger and, for
    remote oracles, its own connection) and the derived seed
    cfg.rng_seed + source_index, so a batch is reproducible run to run.
    Sources the pipeline rejects (misclassified, infeasible, budget out
    before a boundary cloud existed) become failure records instead of
    aborting the batch.

    Returns the records (one per source, in manifest order) and the raw
    AttackResults (None where the run errored).
    """
    if workers < 1:
        raise ValueError("workers must be at least 1")
    cfg_hash = config_hash(cfg)
    writer = JsonlWriter(out_jsonl) if out_jsonl is not None else None
    if adv_dir is not None:
        adv_dir = Path(adv_dir)
        adv_dir.mkdir(parents=True, exist_ok=True)

    def task(idx_entry: tuple[int, ManifestEntry]):
        idx, entry = idx_entry
        source_id = Path(entry.path).stem
        run_seed = cfg.rng_seed + idx
        oracle = oracle_factory()
        try:
            result = attack_one_source(manifest, entry, run_seed, cfg, oracle)
            record = ResultRecord.from_attack(source_id, entry.label, result,
                                              run_seed, cfg_hash)
        except (AttackError, BudgetExhaustedError) as exc:
            result = None
            record = ResultRecord.from_failure(source_id, entry.label, run_seed,
                                               cfg_hash, f"{type(exc).__name__}: {exc}")
        finally:
            close = getattr(oracle, "close", None)
            if close is not None:
                close()
        return record, result

    jobs = list(enumerate(manifest.entries))
    if workers == 1:
        outcomes = [task(job) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(task, jobs))

    records, results = [], []
    for (record, result), (_, entry) in zip(outcomes, jobs):
        records.append(record)
        results.append(result)
        if writer is not None:
            writer.append(record)
        if adv_dir is not None and result is not None:
            write_xyz(adv_dir / f"{record.source_id}_adv.xyz", result.adversarial_cloud)
    return records, results


def batch_summary(records: list[ResultRecord]) -> dict[str, float]:
    return summarize(records)
