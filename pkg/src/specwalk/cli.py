"""Command line interface.

Exit codes: 0 command completed, 1 usage error, 2 data or config error,
3 oracle, protocol, or attack failure, 4 query budget exhausted before a
result existed.  A completed attack whose final cloud failed verification
still exits 0; the emitted record carries success=false.
"""
from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from . import protocol
from .attack import AttackConfig, AttackError, run_attack
from .batch import attack_one_source, run_batch
from .dataset import (
    DatasetManifest,
    ManifestError,
    OffFormatError,
    XyzFormatError,
    class_prototypes,
    gen_synthetic_dataset,
    read_xyz,
    select_targets,
    write_xyz,
)
from .defense import DefenseConfig, defended_oracle
from .geometry import CloudShapeError, DegenerateCloudError
from .oracle import (
    BudgetExhaustedError,
    NearestCentroidOracle,
    OracleError,
    RemoteOracle,
    with_budget,
)
from .results import (
    JsonlWriter,
    ResultRecord,
    config_hash,
    format_summary_table,
    read_jsonl,
    summarize,
    write_summary_csv,
)
from .server import OracleServer

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_ORACLE = 3
EXIT_BUDGET = 4


class ConfigFileError(ValueError):
    """An attack config file does not parse or names unknown fields."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def parse_config_file(path: str | Path) -> AttackConfig:
    """Read a flat 'key = value' config file into an AttackConfig.

    Field names must match AttackConfig exactly; unknown keys are errors so
    typos cannot silently fall back to defaults.
    """
    fields = {f.name: f.type for f in dataclasses.fields(AttackConfig)}
    int_fields = {name for name, t in fields.items() if t in (int, "int")}
    values: dict[str, object] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigFileError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in fields:
            raise ConfigFileError(f"{path}:{lineno}: unknown config field {key!r}")
        try:
            values[key] = int(value) if key in int_fields else float(value)
        except ValueError as exc:
            raise ConfigFileError(f"{path}:{lineno}: {exc}") from exc
    try:
        return AttackConfig(**values)
    except ValueError as exc:
        raise ConfigFileError(f"{path}: {exc}") from exc


def _load_config(args) -> AttackConfig:
    cfg = parse_config_file(args.config) if args.config else AttackConfig()
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, rng_seed=args.seed)
    return cfg


def _oracle_factory(spec: str, manifest: DatasetManifest | None, budget: int | None):
    """Build a fresh-oracle factory from an --oracle spec.

    'centroid' uses class-mean prototypes from the manifest; 'remote:HOST:PORT'
    opens one protocol connection per attack run.
    """
    if spec == "centroid":
        if manifest is None:
            raise ManifestError("centroid oracle needs a dataset manifest")
        prototypes = class_prototypes(manifest)

        def factory():
            oracle = NearestCentroidOracle(prototypes)
            return with_budget(oracle, budget) if budget else oracle
    elif spec.startswith("remote:"):
        parts = spec.split(":")
        if len(parts) != 3:
            raise ConfigFileError(f"remote oracle spec must be remote:HOST:PORT, got {spec!r}")
        host, port_text = parts[1], parts[2]
        try:
            port = int(port_text)
        except ValueError as exc:
            raise ConfigFileError(f"bad port in oracle spec {spec!r}") from exc

        def factory():
            oracle = RemoteOracle(host, port)
            return with_budget(oracle, budget) if budget else oracle
    else:
        raise ConfigFileError(f"unknown oracle spec {spec!r}")
    return factory


def _parse_defense(kind: str, params: str | None) -> DefenseConfig:
    mapping = {
        "sor": {"k": ("sor_k", int), "alpha": ("sor_alpha", float)},
        "srs": {"ratio": ("srs_drop_ratio", float), "seed": ("seed", int)},
    }
    if kind not in mapping:
        raise ConfigFileError(f"unknown defense {kind!r}")
    kwargs: dict[str, object] = {"kind": kind}
    if params:
        for item in params.split(","):
            if "=" not in item:
                raise ConfigFileError(f"defense params must be key=value pairs, got {item!r}")
            key, _, value = item.partition("=")
            key = key.strip()
            if key not in mapping[kind]:
                raise ConfigFileError(f"unknown {kind} parameter {key!r}")
            field, cast = mapping[kind][key]
            try:
                kwargs[field] = cast(value.strip())
            except ValueError as exc:
                raise ConfigFileError(f"bad value for {key}: {value!r}") from exc
    try:
        return DefenseConfig(**kwargs)
    except ValueError as exc:
        raise ConfigFileError(str(exc)) from exc


# --- subcommands -------------------------------------------------------------

def cmd_gen_synthetic(args) -> int:
    manifest = gen_synthetic_dataset(args.out, classes=args.classes,
                                     per_class=args.per_class, n=args.points,
                                     seed=args.seed, jitter=args.jitter)
    print(f"wrote {len(manifest.entries)} clouds across {manifest.class_count} "
          f"classes to {args.out}")
    return EXIT_OK


def cmd_attack(args) -> int:
    manifest = DatasetManifest.load(args.manifest)
    cfg = _load_config(args)
    entry = manifest.find_entry(args.source_id)
    factory = _oracle_factory(args.oracle, manifest, args.budget)
    oracle = factory()
    try:
        result = attack_one_source(manifest, entry, cfg.rng_seed, cfg, oracle)
    finally:
        close = getattr(oracle, "close", None)
        if close is not None:
            close()
    record = ResultRecord.from_attack(args.source_id, entry.label, result,
                                      cfg.rng_seed, config_hash(cfg))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    JsonlWriter(out).append(record)
    adv_path = out.parent / f"{args.source_id}_adv.xyz"
    write_xyz(adv_path, result.adversarial_cloud)
    if not args.no_figures:
        from .reporting import save_trace_figure

        distances = [r.distance for r in result.trace if r.walk_kind == "coordinate"]
        save_trace_figure(distances, out.parent / f"{args.source_id}_trace.png")
    status = "success" if result.success else "FAILED"
    print(f"{args.source_id}: {status} label {entry.label} -> {result.adv_label}  "
          f"D_h={result.metrics['hausdorff']:.4f} D_c={result.metrics['chamfer']:.6f} "
          f"D_norm={result.metrics['l2_norm']:.4f} queries={result.queries_used}")
    print(f"record appended to {out}; adversarial cloud at {adv_path}")
    return EXIT_OK


def cmd_attack_batch(args) -> int:
    manifest = DatasetManifest.load(args.manifest)
    cfg = _load_config(args)
    factory = _oracle_factory(args.oracle, manifest, args.budget)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    records, _ = run_batch(manifest, cfg, factory, out_jsonl=out,
                           adv_dir=out.parent / "adv", workers=args.workers)
    summary = summarize(records)
    print(format_summary_table(summary, title="attack"))
    write_summary_csv(out.parent / "summary.csv", [summary],
                      field_order=list(summary))
    if not args.no_figures:
        from .reporting import save_batch_figure

        save_batch_figure(records, out.parent / "batch_metrics.png")
    return EXIT_OK


def cmd_defend_eval(args) -> int:
    manifest = DatasetManifest.load(args.manifest)
    defense = _parse_defense(args.defense, args.params)
    factory = _oracle_factory(args.oracle, manifest, None)
    oracle = defended_oracle(factory(), defense)
    adv_dir = Path(args.adv_dir)
    rows = []
    try:
        for entry in manifest.entries:
            source_id = Path(entry.path).stem
            adv_path = adv_dir / f"{source_id}_adv.xyz"
            if not adv_path.exists():
                continue
            adv = read_xyz(adv_path)
            label = oracle.classify(adv)
            rows.append({
                "source_id": source_id,
                "y_true": entry.label,
                "defended_label": label,
                "still_adversarial": int(label != entry.label),
            })
    finally:
        close = getattr(oracle, "close", None)
        if close is not None:
            close()
    if not rows:
        raise ManifestError(f"no *_adv.xyz files matching the manifest under {adv_dir}")
    surviving = sum(r["still_adversarial"] for r in rows)
    asr = 100.0 * surviving / len(rows)
    print(f"{'defense':<18}{'clouds':>8}{'surviving':>11}{'ASR (%)':>9}")
    name = defense.kind if defense.kind == "sor" else f"srs {defense.srs_drop_ratio:.0%}"
    print(f"{name:<18}{len(rows):>8}{surviving:>11}{asr:>9.1f}")
    write_summary_csv(Path(args.out), rows,
                      field_order=["source_id", "y_true", "defended_label",
                                   "still_adversarial"])
    print(f"per-cloud rows written to {args.out}")
    return EXIT_OK


_SWEEPS = {
    "rounds": ("rounds", int, [50, 100, 150, 200]),
    "mc-samples": ("mc_samples", int, [10, 30, 50]),
    "alpha": ("alpha_low", float, [0.65, 0.75, 0.85, 0.95]),
}


def cmd_ablate(args) -> int:
    manifest = DatasetManifest.load(args.manifest)
    cfg = _load_config(args)
    field, cast, default_values = _SWEEPS[args.sweep]
    if args.values:
        try:
            values = [cast(v) for v in args.values.split(",")]
        except ValueError as exc:
            raise ConfigFileError(f"bad sweep values {args.values!r}") from exc
    else:
        values = default_values
    factory = _oracle_factory(args.oracle, manifest, None)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for value in values:
        swept = dataclasses.replace(cfg, **{field: value})
        sub = out_dir / f"{field}_{value}"
        sub.mkdir(exist_ok=True)
        records, _ = run_batch(manifest, swept, factory,
                               out_jsonl=sub / "results.jsonl", workers=args.workers)
        succ = [r for r in records if r.success]
        def med(key):
            return float(np.median([getattr(r, key) for r in succ])) if succ else float("nan")
        rows.append({
            field: value,
            "asr": 100.0 * len(succ) / len(records) if records else float("nan"),
            "median_combined": med("combined"),
            "median_d_norm": med("d_norm"),
            "median_d_hausdorff": med("d_hausdorff"),
            "median_queries": med("queries"),
        })
        print(f"{field}={value}: asr={rows[-1]['asr']:.1f}% "
              f"median combined={rows[-1]['median_combined']:.5f}")
    write_summary_csv(out_dir / "sweep.csv", rows, field_order=list(rows[0]))
    if not args.no_figures:
        from .reporting import save_sweep_figure

        save_sweep_figure(rows, field, out_dir / "sweep.png")
    print(f"sweep table written to {out_dir / 'sweep.csv'}")
    return EXIT_OK


def cmd_serve_centroid(args) -> int:
    manifest = DatasetManifest.load(args.manifest)
    oracle = NearestCentroidOracle(class_prototypes(manifest))
    server = OracleServer(oracle, host=args.host, port=args.port)
    print(f"LISTENING {server.server_address[0]}:{server.port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
        server.server_close()
    return EXIT_OK


# --- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="specwalk",
                     description="Hard-label point cloud attacks by spectrum "
                                 "fusion and boundary walking")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="generate a labeled synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--per-class", type=int, default=25)
    p.add_argument("--points", type=int, default=1024)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jitter", type=float, default=0.02)
    p.set_defaults(func=cmd_gen_synthetic)

    def common_attack_args(p):
        p.add_argument("--manifest", required=True)
        p.add_argument("--config", default=None, help="flat key=value config file")
        p.add_argument("--oracle", default="centroid",
                       help="'centroid' or 'remote:HOST:PORT'")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config rng_seed")
        p.add_argument("--budget", type=int, default=None)
        p.add_argument("--no-figures", action="store_true")

    p = sub.add_parser("attack", help="attack a single source cloud")
    common_attack_args(p)
    p.add_argument("--source-id", required=True)
    p.add_argument("--out", required=True, help="results JSONL path")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("attack-batch", help="attack every cloud in the manifest")
    common_attack_args(p)
    p.add_argument("--out", required=True, help="results JSONL path")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_attack_batch)

    p = sub.add_parser("defend-eval",
                       help="re-classify saved adversarial clouds under a defense")
    p.add_argument("--manifest", required=True)
    p.add_argument("--adv-dir", required=True)
    p.add_argument("--defense", required=True, choices=["sor", "srs"])
    p.add_argument("--params", default=None, help="e.g. k=2,alpha=1.1 or ratio=0.3")
    p.add_argument("--oracle", default="centroid")
    p.add_argument("--out", required=True, help="CSV output path")
    p.set_defaults(func=cmd_defend_eval)

    p = sub.add_parser("ablate", help="sweep one attack parameter over a batch")
    common_attack_args(p)
    p.add_argument("--sweep", required=True, choices=sorted(_SWEEPS))
    p.add_argument("--values", default=None, help="comma separated override")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("serve-centroid",
                       help="serve the manifest's centroid oracle over TCP")
    p.add_argument("--manifest", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=0)
    p.set_defaults(func=cmd_serve_centroid)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except BudgetExhaustedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (OracleError, AttackError, protocol.ProtocolViolation) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    except (XyzFormatError, OffFormatError, ManifestError, ConfigFileError,
            CloudShapeError, DegenerateCloudError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
