"""Command line entry point: ``simulate``, ``track``, ``eval`` and ``ablate``.

Exit codes: 0 success, 2 invalid input, 3 I/O failure, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

from .config import ConfigError, TrackerConfig, load_config
from .geometry import GeometryError
from .metrics import (AlignmentError, UndefinedMetricError, aggregate, metric_set, render_table,
                      write_report, zero_velocity_results)
from .pipeline import read_results, run_sequence, write_results
from .synth import (GROUND_TRUTH_FILE, SpecError, generate, load_spec, read_ground_truth,
                    read_sequence, write_scenario)
from .kalman import Detection

log = logging.getLogger("motionpred")

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4

# Row order follows the usual ablation table: detector alone, then modules added.
ABLATION_ROWS = (
    ("Baseline", False, False, False),
    ("Baseline + ASR", False, False, True),
    ("Baseline + MD + ASR", True, False, True),
    ("Baseline + MP", False, True, False),
    ("Baseline + MD + MP", True, True, False),
    ("Baseline + MD + MP + ASR", True, True, True),
)


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class RunManifest:
    config: Path | None
    scenario: Path | None
    replay: Path | None
    out: Path
    seed: int | None
    md: bool = True
    mp: bool = True
    asr: bool = True
    fixed_k: float | None = None

    def __post_init__(self):
        if (self.scenario is None) == (self.replay is None):
            raise ManifestError("exactly one of --scenario or --replay is required")

    def tracker_config(self) -> TrackerConfig:
        cfg = load_config(self.config) if self.config else TrackerConfig()
        cfg = cfg.with_ablation(self.md, self.mp, self.asr)
        if self.seed is not None:
            cfg = dataclasses.replace(cfg, seed=self.seed)
        if self.fixed_k is not None:
            cfg = dataclasses.replace(cfg, fixed_k=self.fixed_k)
        return cfg

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        return {k: (str(v) if isinstance(v, Path) else v) for k, v in d.items()}


def _require(path: Path | None) -> None:
    if path is not None and not path.exists():
        raise FileNotFoundError(f"{path}: no such file or directory")


def load_inputs(manifest: RunManifest):
    """Frames, provider, ground truth and init box for the manifest's input."""
    _require(manifest.config)
    if manifest.scenario is not None:
        _require(manifest.scenario)
        spec = load_spec(manifest.scenario)
        if manifest.seed is not None:
            spec = spec.with_seed(manifest.seed)
        sc = generate(spec)
        return sc.frames, sc.provider(), sc.ground_truth, sc.init_detection()
    _require(manifest.replay)
    frames, provider, gts = read_sequence(manifest.replay)
    if not frames:
        raise ManifestError(f"{manifest.replay}: no frames")
    if gts:
        b = gts[0].box
        init = Detection(b.x, b.y, b.w, b.h, 1.0)
    else:
        recs = provider.records(frames[0].frame_id)
        if not recs:
            raise ManifestError("replay has neither ground truth nor a first-frame detection")
        init = recs[0]
    return frames, provider, gts, init


def cmd_simulate(spec_path, out_dir, seed: int | None = None) -> list[Path]:
    _require(Path(spec_path))
    spec = load_spec(spec_path)
    if seed is not None:
        spec = spec.with_seed(seed)
    paths = write_scenario(generate(spec), out_dir)
    log.info("wrote %d frames to %s", spec.length, out_dir)
    return paths


def cmd_track(manifest: RunManifest) -> Path:
    cfg = manifest.tracker_config()
    frames, provider, gts, init = load_inputs(manifest)
    results = run_sequence(frames, init, cfg, provider, evaluation=bool(gts))
    manifest.out.mkdir(parents=True, exist_ok=True)
    out = manifest.out / "results.jsonl"
    write_results(out, results)
    if manifest.scenario is not None:
        with open(manifest.out / GROUND_TRUTH_FILE, "w", encoding="utf-8") as fh:
            for g in gts:
                fh.write(json.dumps(g.to_record()) + "\n")
    (manifest.out / "run_manifest.json").write_text(
        json.dumps(manifest.as_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return out


def cmd_eval(results_path, gt_path, out_dir, baseline_path=None) -> dict:
    for p in (results_path, gt_path, baseline_path):
        _require(Path(p) if p else None)
    results = read_results(results_path)
    gts = read_ground_truth(gt_path)
    base_results = read_results(baseline_path) if baseline_path else zero_velocity_results(results)
    ours = metric_set(results, gts).as_dict()
    base = metric_set(base_results, gts).as_dict()
    report = {
        "tracker": ours,
        "baseline": base,
        "pos_ratio": 1.0 if base["pos_err"] <= 1e-9 else ours["pos_err"] / base["pos_err"],
    }
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_report(out / "report.json", report)
    (out / "report.txt").write_text(render_table([("Baseline", base), ("Ours", ours)]),
                                    encoding="utf-8")
    return report


def cmd_ablate(spec_path, out_dir, config_path=None, seed: int = 0, seeds: int = 5,
               fixed_k: float | None = None) -> dict:
    _require(Path(spec_path))
    _require(Path(config_path) if config_path else None)
    spec = load_spec(spec_path)
    cfg = load_config(config_path) if config_path else TrackerConfig()
    if fixed_k is not None:
        cfg = dataclasses.replace(cfg, fixed_k=fixed_k)
    per_row = {name: [] for name, *_ in ABLATION_ROWS}
    for s in range(seed, seed + seeds):
        sc = generate(spec.with_seed(s))
        for name, md, mp, asr in ABLATION_ROWS:
            res = run_sequence(sc.frames, sc.init_detection(), cfg.with_ablation(md, mp, asr),
                               sc.provider())
            per_row[name].append(metric_set(res, sc.ground_truth))
    rows = {name: aggregate(sets) for name, sets in per_row.items()}
    report = {
        "seeds": list(range(seed, seed + seeds)),
        "rows": rows,
        "per_seed_pos_err": {name: [m.pos_err for m in sets] for name, sets in per_row.items()},
    }
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_report(out / "ablation.json", report)
    (out / "ablation.txt").write_text(render_table(list(rows.items())), encoding="utf-8")
    return report


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="motionpred", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic sequence")
    p.add_argument("spec", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("track", help="run the tracker on a scenario or replay directory")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario", type=Path)
    src.add_argument("--replay", type=Path)
    p.add_argument("--config", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--md", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--mp", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--asr", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--fixed-k", type=float)

    p = sub.add_parser("eval", help="score a results file against ground truth")
    p.add_argument("results", type=Path)
    p.add_argument("--gt", type=Path, required=True)
    p.add_argument("--baseline", type=Path)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("ablate", help="run the six-row ablation grid over several seeds")
    p.add_argument("spec", type=Path)
    p.add_argument("--config", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--fixed-k", type=float)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "simulate":
            cmd_simulate(args.spec, args.out, args.seed)
        elif args.command == "track":
            cmd_track(RunManifest(args.config, args.scenario, args.replay, args.out, args.seed,
                                  args.md, args.mp, args.asr, args.fixed_k))
        elif args.command == "eval":
            report = cmd_eval(args.results, args.gt, args.out, args.baseline)
            print(render_table([("Baseline", report["baseline"]), ("Ours", report["tracker"])]),
                  end="")
        elif args.command == "ablate":
            report = cmd_ablate(args.spec, args.out, args.config, args.seed, args.seeds,
                                args.fixed_k)
            print(render_table(list(report["rows"].items())), end="")
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (SpecError, ConfigError, ManifestError, AlignmentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (GeometryError, ArithmeticError, UndefinedMetricError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
