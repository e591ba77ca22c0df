"""Single entry point wiring the modules into reproducible pipelines.

    citykit <subcommand> --config config.json [overrides]

Subcommands: import-map | synth | gen-eval | run-eval | navigate |
swft-weights | report. Every subcommand validates its prerequisites,
writes its outputs plus a content-hash manifest into the output
directory, and is byte-deterministic given identical inputs and seed.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 endpoint error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import __version__
from .eval_bench import (
    BenchmarkError,
    BenchmarkSpec,
    export_benchmark,
    generate_benchmark,
    load_benchmark,
)
from .instruction_synth import (
    SynthError,
    export_dataset,
    gen_cityqa,
    gen_cityreasoning,
    gen_citywalk,
    load_dataset,
)
from .llm_harness import (
    EndpointError,
    EvalResult,
    ModelEndpoint,
    run_benchmark,
    run_navigation,
    write_report_csv,
)
from .manifest import write_manifest
from .map_core import MapError, export_map, import_map
from .nav_sim import NavError, gen_nav_suite
from .routing import build_road_graph
from .swft import (
    SwftError,
    compute_weights,
    export_weighted_dataset,
    flag_anomalies,
    load_loss_records,
    write_weights,
)
from .templates import DEFAULT_TEMPLATE_SET, load_templates

log = logging.getLogger("citykit")

DEFAULT_COUNTS = {"cityqa": 48551, "citywalk": 30000, "cityreasoning": 7992}
DEFAULT_BENCHMARK = {
    "city_image": 650,
    "urban_semantics": 300,
    "spatial_reasoning": 1000,
    "choices": 4,
}


class UsageError(Exception):
    pass


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    seed: int
    map_path: Optional[str] = None
    out_dir: str = "out"
    counts: dict = field(default_factory=lambda: dict(DEFAULT_COUNTS))
    two_round_fraction: float = 0.13
    length_window_m: tuple[float, float] = (500.0, 5000.0)
    benchmark: dict = field(default_factory=lambda: dict(DEFAULT_BENCHMARK))
    dedupe_against: list[str] = field(default_factory=list)
    endpoint: Optional[dict] = None
    shots: int = 0
    exemplar_file: Optional[str] = None
    nav_count: int = 21
    losses: Optional[str] = None
    dataset: Optional[str] = None
    templates: Optional[str] = None
    benchmark_file: Optional[str] = None
    results_file: Optional[str] = None

    _KEYS = {
        "seed", "map", "out", "counts", "two_round_fraction", "length_window_m",
        "benchmark", "dedupe_against", "endpoint", "shots", "exemplar_file",
        "navigation", "losses", "dataset", "templates", "benchmark_file",
        "results_file",
    }

    @classmethod
    def load(cls, config_path: Optional[str], overrides: argparse.Namespace) -> "RunConfig":
        raw: dict = {}
        if config_path:
            path = Path(config_path)
            if not path.exists():
                raise ConfigError(f"config file not found: {config_path}")
            try:
                raw = json.loads(path.read_text(encoding="utf-8"))
            except json.JSONDecodeError as e:
                raise ConfigError(f"config: invalid JSON ({e.msg})") from None
            if not isinstance(raw, dict):
                raise ConfigError("config: top level must be a JSON object")
            unknown = set(raw) - cls._KEYS
            if unknown:
                raise ConfigError(f"config: unknown fields {sorted(unknown)}")

        def err(fld, why):
            raise ConfigError(f"config field {fld!r}: {why}")

        seed = raw.get("seed")
        if overrides.seed is not None:
            seed = overrides.seed
        if seed is None:
            err("seed", "is mandatory (wall-clock seeding is not allowed)")
        if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
            err("seed", "must be a non-negative integer")

        cfg = cls(seed=seed)
        cfg.map_path = overrides.map or raw.get("map")
        cfg.out_dir = overrides.out or raw.get("out", "out")

        counts = raw.get("counts", {})
        if not isinstance(counts, dict):
            err("counts", "must be an object")
        for k, v in counts.items():
            if k not in DEFAULT_COUNTS:
                err("counts", f"unknown dataset {k!r}")
            if not isinstance(v, int) or v < 0:
                err("counts", f"{k} must be a non-negative integer")
        cfg.counts.update(counts)

        frac = raw.get("two_round_fraction", cfg.two_round_fraction)
        if not isinstance(frac, (int, float)) or not 0.0 <= frac <= 1.0:
            err("two_round_fraction", "must be in [0, 1]")
        cfg.two_round_fraction = float(frac)

        window = raw.get("length_window_m", list(cfg.length_window_m))
        if (
            not isinstance(window, list) or len(window) != 2
            or not all(isinstance(x, (int, float)) and x > 0 for x in window)
            or window[0] > window[1]
        ):
            err("length_window_m", "must be [lo, hi] with 0 < lo <= hi")
        cfg.length_window_m = (float(window[0]), float(window[1]))

        bench = raw.get("benchmark", {})
        if not isinstance(bench, dict):
            err("benchmark", "must be an object")
        for k, v in bench.items():
            if k not in DEFAULT_BENCHMARK:
                err("benchmark", f"unknown field {k!r}")
            if not isinstance(v, int) or v < 0:
                err("benchmark", f"{k} must be a non-negative integer")
        cfg.benchmark.update(bench)

        dedupe = raw.get("dedupe_against", [])
        if not isinstance(dedupe, list) or not all(isinstance(p, str) for p in dedupe):
            err("dedupe_against", "must be a list of file paths")
        cfg.dedupe_against = dedupe

        endpoint = raw.get("endpoint")
        if endpoint is not None and not isinstance(endpoint, dict):
            err("endpoint", "must be an object")
        cfg.endpoint = dict(endpoint) if endpoint else None
        if overrides.endpoint_url:
            cfg.endpoint = cfg.endpoint or {}
            cfg.endpoint["base_url"] = overrides.endpoint_url
        if overrides.model:
            cfg.endpoint = cfg.endpoint or {}
            cfg.endpoint["model"] = overrides.model
        if overrides.max_in_flight is not None:
            cfg.endpoint = cfg.endpoint or {}
            cfg.endpoint["max_in_flight"] = overrides.max_in_flight

        shots = raw.get("shots", 0)
        if overrides.shots is not None:
            shots = overrides.shots
        if shots not in (0, 1, 5):
            err("shots", "must be one of 0, 1, 5")
        cfg.shots = shots

        nav = raw.get("navigation", {})
        if not isinstance(nav, dict):
            err("navigation", "must be an object")
        cfg.nav_count = nav.get("count", 21)
        if not isinstance(cfg.nav_count, int) or cfg.nav_count < 1:
            err("navigation", "count must be a positive integer")

        for fld in ("exemplar_file", "losses", "dataset", "templates",
                    "benchmark_file", "results_file"):
            val = raw.get(fld)
            if val is not None and not isinstance(val, str):
                err(fld, "must be a file path string")
            setattr(cfg, fld, val)

        # every provided input path must resolve now
        for fld, val in (
            ("map", cfg.map_path), ("exemplar_file", cfg.exemplar_file),
            ("losses", cfg.losses), ("dataset", cfg.dataset),
            ("templates", cfg.templates), ("benchmark_file", cfg.benchmark_file),
            ("results_file", cfg.results_file),
        ):
            if val is not None and not Path(val).exists():
                err(fld, f"path does not exist: {val}")
        for p in cfg.dedupe_against:
            if not Path(p).exists():
                err("dedupe_against", f"path does not exist: {p}")
        return cfg

    def require(self, **fields) -> None:
        for fld, val in fields.items():
            if val is None:
                raise ConfigError(f"this subcommand requires config field {fld!r}")

    def make_endpoint(self) -> ModelEndpoint:
        if not self.endpoint or "base_url" not in self.endpoint or "model" not in self.endpoint:
            raise ConfigError(
                "endpoint config with 'base_url' and 'model' is required"
            )
        known = {
            "base_url", "model", "api_key", "temperature", "max_tokens",
            "repetition_penalty", "max_in_flight", "timeout_s", "retries",
            "backoff_s",
        }
        unknown = set(self.endpoint) - known
        if unknown:
            raise ConfigError(f"endpoint: unknown fields {sorted(unknown)}")
        return ModelEndpoint(**self.endpoint)

    def template_set(self):
        return load_templates(self.templates) if self.templates else DEFAULT_TEMPLATE_SET


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_city(cfg: RunConfig):
    cfg.require(map=cfg.map_path)
    return import_map(cfg.map_path)


def cmd_import_map(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    city = _load_city(cfg)
    target = out / "map.jsonl"
    export_map(city, target)
    log.info(
        "imported %d junctions, %d roads, %d PoIs, %d AoIs",
        len(city.junctions), len(city.roads), len(city.pois), len(city.aois),
    )
    write_manifest(out, "import-map", cfg.seed, [cfg.map_path], [target],
                   {}, __version__)
    return 0


def cmd_synth(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    city = _load_city(cfg)
    graph = build_road_graph(city)
    templates = cfg.template_set()
    outputs = []

    qa = gen_cityqa(city, cfg.counts["cityqa"], cfg.seed, templates)
    path = out / "cityqa.jsonl"
    export_dataset(qa, path)
    outputs.append(path)
    log.info("cityqa: %d samples", len(qa))

    walk = gen_citywalk(
        city, graph, cfg.counts["citywalk"], cfg.seed, templates,
        length_window=cfg.length_window_m,
    )
    path = out / "citywalk.jsonl"
    export_dataset(walk, path)
    outputs.append(path)
    log.info("citywalk: %d samples", len(walk))

    reasoning = gen_cityreasoning(
        graph, cfg.counts["cityreasoning"], cfg.seed, templates,
        two_round_fraction=cfg.two_round_fraction,
        length_window=cfg.length_window_m,
    )
    path = out / "cityreasoning.jsonl"
    export_dataset(reasoning, path)
    outputs.append(path)
    log.info("cityreasoning: %d samples", len(reasoning))

    params = {
        "counts": cfg.counts,
        "two_round_fraction": cfg.two_round_fraction,
        "length_window_m": list(cfg.length_window_m),
    }
    write_manifest(out, "synth", cfg.seed, [cfg.map_path], outputs, params,
                   __version__)
    return 0


def cmd_gen_eval(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    city = _load_city(cfg)
    graph = build_road_graph(city)
    spec = BenchmarkSpec(
        city_image=cfg.benchmark["city_image"],
        urban_semantics=cfg.benchmark["urban_semantics"],
        spatial_reasoning=cfg.benchmark["spatial_reasoning"],
        choices=cfg.benchmark["choices"],
        seed=cfg.seed,
    )
    training = []
    for p in cfg.dedupe_against:
        training.extend(load_dataset(p))
    if training:
        log.info("leakage exclusion against %d training samples", len(training))
    questions = generate_benchmark(city, graph, spec, training or None)
    target = out / "benchmark.jsonl"
    export_benchmark(questions, target)
    log.info("benchmark: %d questions", len(questions))
    params = {"benchmark": cfg.benchmark, "dedupe_against": cfg.dedupe_against}
    write_manifest(out, "gen-eval", cfg.seed,
                   [cfg.map_path] + list(cfg.dedupe_against), [target],
                   params, __version__)
    return 0


def cmd_run_eval(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    bench_path = cfg.benchmark_file or str(Path(cfg.out_dir) / "benchmark.jsonl")
    if not Path(bench_path).exists():
        raise ConfigError(f"benchmark file not found: {bench_path}")
    questions = load_benchmark(bench_path)
    endpoint = cfg.make_endpoint()
    exemplars = None
    if cfg.shots:
        cfg.require(exemplar_file=cfg.exemplar_file)
        exemplars = load_benchmark(cfg.exemplar_file)
    result = run_benchmark(
        questions, endpoint, shots=cfg.shots, exemplar_pool=exemplars,
        seed=cfg.seed,
    )
    results_path = out / "results.json"
    result.write(results_path)
    report_path = out / "report.csv"
    write_report_csv(result, report_path)
    for group, acc in result.group_accuracy.items():
        log.info("%s accuracy: %.4f", group, acc)
    inputs = [bench_path] + ([cfg.exemplar_file] if cfg.shots else [])
    write_manifest(out, "run-eval", cfg.seed, inputs,
                   [results_path, report_path],
                   {"shots": cfg.shots, "endpoint": endpoint.decoding_params()},
                   __version__)
    return 0


def cmd_navigate(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    city = _load_city(cfg)
    graph = build_road_graph(city)
    endpoint = cfg.make_endpoint()
    suite = gen_nav_suite(city, graph, count=cfg.nav_count, seed=cfg.seed)
    suite_path = out / "nav_suite.jsonl"
    with open(suite_path, "w", encoding="utf-8") as fh:
        for t in suite:
            fh.write(
                json.dumps(
                    {
                        "id": t.id, "start": t.start, "dest": t.dest,
                        "min_steps": t.min_steps,
                        "start_junction": t.start_junction,
                        "dest_junction": t.dest_junction,
                        "dest_name": t.dest_name,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
    episodes_path = out / "episodes.jsonl"
    summary = run_navigation(endpoint, suite, city, graph, log_path=episodes_path)
    summary_path = out / "nav_summary.json"
    summary_path.write_text(
        json.dumps(summary, ensure_ascii=False, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    log.info("navigation: success_rate=%.3f mean_steps=%.2f",
             summary["success_rate"], summary["mean_steps"])
    write_manifest(out, "navigate", cfg.seed, [cfg.map_path],
                   [suite_path, episodes_path, summary_path],
                   {"count": cfg.nav_count,
                    "endpoint": endpoint.decoding_params()},
                   __version__)
    return 0


def cmd_swft_weights(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    cfg.require(losses=cfg.losses)
    records = load_loss_records(cfg.losses)
    weights = compute_weights(records)
    weights_path = out / "weights.jsonl"
    write_weights(weights, weights_path)
    outputs = [weights_path]
    log.info("weights: %d samples", len(weights))

    if len(records) >= 10:
        flagged = flag_anomalies(records)
        anomalies_path = out / "anomalies.json"
        anomalies_path.write_text(
            json.dumps({"flagged": flagged}, sort_keys=True, indent=2) + "\n",
            encoding="utf-8",
        )
        outputs.append(anomalies_path)
        log.info("anomalies flagged: %d", len(flagged))

    inputs = [cfg.losses]
    if cfg.dataset:
        samples = [s.to_record() for s in load_dataset(cfg.dataset)]
        weighted_path = out / "weighted_dataset.jsonl"
        export_weighted_dataset(samples, weights, weighted_path)
        outputs.append(weighted_path)
        inputs.append(cfg.dataset)
        log.info("weighted dataset: %d lines", len(samples))
    write_manifest(out, "swft-weights", cfg.seed, inputs, outputs, {}, __version__)
    return 0


def cmd_report(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    results_path = cfg.results_file or str(Path(cfg.out_dir) / "results.json")
    if not Path(results_path).exists():
        raise ConfigError(f"results file not found: {results_path}")
    payload = json.loads(Path(results_path).read_text(encoding="utf-8"))
    result = EvalResult(
        group_accuracy=payload["groups"],
        task_stats=payload["tasks"],
        abstain_count=payload["abstain_count"],
        transcripts=payload.get("transcripts", []),
        config=payload.get("config", {}),
    )
    report_path = out / "report.csv"
    write_report_csv(result, report_path)
    log.info("report written: %s", report_path)
    write_manifest(out, "report", cfg.seed, [results_path], [report_path],
                   {}, __version__)
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

_COMMANDS = {
    "import-map": cmd_import_map,
    "synth": cmd_synth,
    "gen-eval": cmd_gen_eval,
    "run-eval": cmd_run_eval,
    "navigate": cmd_navigate,
    "swft-weights": cmd_swft_weights,
    "report": cmd_report,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors -> exit code 1
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="citykit", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version",
                        version=f"citykit {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--map", help="map JSONL path (overrides config)")
        p.add_argument("--seed", type=int, help="seed (overrides config)")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--endpoint-url", help="endpoint base URL")
        p.add_argument("--model", help="endpoint model name")
        p.add_argument("--shots", type=int, choices=(0, 1, 5),
                       help="few-shot exemplar count")
        p.add_argument("--max-in-flight", type=int,
                       help="max concurrent endpoint requests")
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    logging.basicConfig(
        level=logging.INFO, format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = RunConfig.load(args.config, args)
        return _COMMANDS[args.subcommand](cfg)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except (MapError, SynthError, BenchmarkError, NavError, SwftError,
            FileNotFoundError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2
    except EndpointError as e:
        print(f"endpoint error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
