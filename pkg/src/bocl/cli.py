"""Command-line entry point with bit-stable result emission.

One binary, subcommand style.  Each run writes CSV tables with fixed
column orders plus a JSON summary carrying the full config echo, seeds,
and toolkit version, so a run can be reproduced exactly from its own
output.  Numbers are serialized with shortest round-trip formatting;
identical config and seed produce byte-identical files (the ``timing``
command is the documented exception since it reports wall-clock
measurements).

Exit codes: 0 success, 1 i/o error, 2 usage error, 3 numerical failure,
4 theory-check failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import __version__
from .bench import benchmark_names, get_benchmark
from .core import InvalidInputError, NumericalError
from .diagnostics import SURROGATE_KINDS, run_sdd, run_theory_checks
from .runner import (
    STRATEGIES,
    default_workers,
    final_values,
    mean_batch_diversity,
    run_bo_suite,
    summarize_suite,
    timing_harness,
    wilcoxon_signed_rank,
)

__all__ = ["RunConfig", "parse_config", "execute", "emit_results", "main"]

EXIT_OK = 0
EXIT_IO = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3
EXIT_CHECK_FAILURE = 4

COMMANDS = ("sdd", "bo-run", "lp-compare", "timing", "theory-check", "large-batch")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    benchmark: str = "hartmann6"
    surrogate: str = "gp"
    strategy: str = "cl-min"
    q: int = 3
    budget: int = 50
    n_init: int | None = None
    seeds: list[int] = field(default_factory=lambda: [0])
    noise_scale: float = 0.0
    acquisition: str = "ei"
    output_path: str = "results"
    timing_n: int = 50
    timing_d: int = 6
    repeats: int = 5

    def validate(self) -> "RunConfig":
        if self.command not in COMMANDS:
            raise UsageError(f"unknown command {self.command!r}")
        if self.command in ("sdd", "bo-run", "lp-compare", "large-batch"):
            if self.benchmark not in benchmark_names():
                raise UsageError(f"benchmark: unknown name {self.benchmark!r}")
        if self.surrogate not in SURROGATE_KINDS:
            raise UsageError(f"surrogate: unknown name {self.surrogate!r}")
        if self.strategy not in STRATEGIES:
            raise UsageError(f"strategy: unknown name {self.strategy!r}")
        if self.q < 1:
            raise UsageError("q: must be >= 1")
        if self.budget < 1:
            raise UsageError("budget: must be >= 1")
        if self.n_init is not None and self.n_init < 1:
            raise UsageError("n_init: must be >= 1")
        if not self.seeds:
            raise UsageError("seeds: need at least one seed")
        if self.noise_scale < 0:
            raise UsageError("noise_scale: must be >= 0")
        if self.acquisition not in ("ei", "ucb", "pi"):
            raise UsageError(f"acquisition: unknown name {self.acquisition!r}")
        if self.repeats < 3:
            raise UsageError("repeats: must be >= 3")
        return self


def _parse_seeds(text: str) -> list[int]:
    text = text.strip()
    if ":" in text:
        lo, hi = text.split(":", 1)
        return list(range(int(lo), int(hi)))
    return [int(tok) for tok in text.split(",") if tok.strip() != ""]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bocl",
        description="Batch Bayesian optimization toolkit: pseudo-observation batch "
                    "selection, diversity diagnostics, and experiment harness.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=str, default=None,
                       help="JSON file with flat key/value settings; flags override it")
        p.add_argument("--benchmark", type=str, default=None)
        p.add_argument("--surrogate", type=str, default=None)
        p.add_argument("--strategy", type=str, default=None)
        p.add_argument("--q", type=int, default=None)
        p.add_argument("--budget", type=int, default=None)
        p.add_argument("--n-init", dest="n_init", type=int, default=None)
        p.add_argument("--seed", dest="seeds", type=str, default=None,
                       help="single seed, comma list (0,1,2), or range (0:20)")
        p.add_argument("--seeds", dest="seeds", type=str, default=None)
        p.add_argument("--noise-scale", dest="noise_scale", type=float, default=None)
        p.add_argument("--acquisition", type=str, default=None)
        p.add_argument("--output", dest="output_path", type=str, default=None)
        p.add_argument("--n", dest="timing_n", type=int, default=None)
        p.add_argument("--d", dest="timing_d", type=int, default=None)
        p.add_argument("--repeats", type=int, default=None)
    return parser


def parse_config(argv: list[str]) -> RunConfig:
    """Build a validated config from argv, with optional JSON-file defaults."""
    ns = _build_parser().parse_args(argv)
    cfg = RunConfig(command=ns.command)
    known = {f.name for f in fields(RunConfig)}
    if ns.config is not None:
        try:
            with open(ns.config, "r", encoding="utf-8") as fh:
                file_values = json.load(fh)
        except OSError as exc:
            raise UsageError(f"config: cannot read {ns.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise UsageError(f"config: invalid JSON in {ns.config}: {exc}") from exc
        if not isinstance(file_values, dict):
            raise UsageError("config: file must hold a flat JSON object")
        for key, value in file_values.items():
            if key not in known or key == "command":
                raise UsageError(f"config: unknown key {key!r}")
            if key == "seeds":
                value = _parse_seeds(str(value)) if isinstance(value, str) else [int(v) for v in value]
            setattr(cfg, key, value)
    for key in known - {"command", "seeds"}:
        flag_value = getattr(ns, key, None)
        if flag_value is not None:
            setattr(cfg, key, flag_value)
    if ns.seeds is not None:
        try:
            cfg.seeds = _parse_seeds(ns.seeds)
        except ValueError as exc:
            raise UsageError(f"seeds: cannot parse {ns.seeds!r}") from exc
    return cfg.validate()


# ---------------------------------------------------------------------------
# Result emission
# ---------------------------------------------------------------------------


def _fmt(value) -> str:
    """Shortest round-trip decimal form; deterministic for a given double."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: str, header: list[str], rows: list[list]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def emit_results(records: dict, path: str) -> list[str]:
    """Write every table in ``records`` plus the JSON summary; returns file paths.

    ``records`` maps a table name to ``(header, rows)``; the summary
    payload lives under the reserved key ``"summary"``.
    """
    if not records:
        raise InvalidInputError("no records to emit")
    os.makedirs(path, exist_ok=True)
    written = []
    for name, content in records.items():
        if name == "summary":
            continue
        header, rows = content
        csv_path = os.path.join(path, f"{name}.csv")
        write_csv(csv_path, header, rows)
        written.append(csv_path)
    summary_path = os.path.join(path, "summary.json")
    write_json(summary_path, records.get("summary", {}))
    written.append(summary_path)
    return written


def _summary_base(config: RunConfig) -> dict:
    return {
        "config": asdict(config),
        "version": __version__,
        "seeds": list(config.seeds),
    }


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


# ---------------------------------------------------------------------------
# Command implementations
# ---------------------------------------------------------------------------


def _default_n_init(config: RunConfig) -> int:
    if config.n_init is not None:
        return config.n_init
    if config.command == "sdd":
        return 30
    return 2 * get_benchmark(config.benchmark).dim


def _cmd_sdd(config: RunConfig) -> tuple[dict, int]:
    rows = []
    n_init = _default_n_init(config)
    for seed in config.seeds:
        rep = run_sdd(config.surrogate, config.benchmark, n_init, config.q, seed,
                      acquisition=config.acquisition)
        _log(f"sdd {config.surrogate} seed={seed}: min={rep.min_dist:.4f} "
             f"mean={rep.mean_dist:.4f} diverse={rep.diverse}")
        rows.append([rep.surrogate_name, rep.q, rep.seed, rep.min_dist,
                     rep.mean_dist, rep.diverse])
    summary = _summary_base(config)
    summary["rows"] = [
        {"surrogate": r[0], "q": r[1], "seed": r[2], "min_dist": r[3],
         "mean_dist": r[4], "diverse": bool(r[5])} for r in rows
    ]
    records = {
        "sdd": (["surrogate", "q", "seed", "min_dist", "mean_dist", "diverse"], rows),
        "summary": summary,
    }
    return records, EXIT_OK


def _trace_records(traces, records: dict) -> None:
    for trace in traces:
        rows = [
            [int(trace.iteration_of_eval[i]), i, trace.y_observed[i], trace.best_so_far[i]]
            for i in range(trace.y_observed.size)
        ]
        name = f"bo_{trace.strategy}_q{trace.q}_seed{trace.seed}"
        records[name] = (["iter", "eval_index", "y_raw", "best_so_far"], rows)


def _cmd_bo_run(config: RunConfig) -> tuple[dict, int]:
    n_init = _default_n_init(config)
    traces = run_bo_suite(config.benchmark, config.strategy, config.q, config.budget,
                          n_init, config.noise_scale, config.seeds,
                          acquisition=config.acquisition)
    for t in traces:
        _log(f"bo-run {t.strategy} seed={t.seed}: final={t.final_best:.4f}")
    records: dict = {}
    _trace_records(traces, records)
    summary = _summary_base(config)
    summary["aggregate"] = summarize_suite(traces)
    records["summary"] = summary
    return records, EXIT_OK


def _cmd_lp_compare(config: RunConfig) -> tuple[dict, int]:
    n_init = _default_n_init(config)
    strategies = ("cl-min", "kb", "lp", "random-batch")
    rows = []
    by_strategy = {}
    for strategy in strategies:
        traces = run_bo_suite(config.benchmark, strategy, config.q, config.budget,
                              n_init, config.noise_scale, config.seeds,
                              acquisition=config.acquisition)
        by_strategy[strategy] = traces
        for t in traces:
            rows.append([strategy, t.q, t.seed, t.final_best, mean_batch_diversity(t)])
        _log(f"lp-compare {strategy}: mean final "
             f"{float(np.mean(final_values(traces))):.4f}")
    summary = _summary_base(config)
    summary["aggregate"] = {s: summarize_suite(tr) for s, tr in by_strategy.items()}
    pvals = {}
    for strategy in ("cl-min", "kb", "lp"):
        res = wilcoxon_signed_rank(final_values(by_strategy[strategy]),
                                   final_values(by_strategy["random-batch"]))
        pvals[f"{strategy}_vs_random"] = res.p_value
    summary["wilcoxon_p"] = pvals
    records = {
        "lp_compare": (["strategy", "q", "seed", "final_best", "mean_diversity"], rows),
        "summary": summary,
    }
    return records, EXIT_OK


def _cmd_timing(config: RunConfig) -> tuple[dict, int]:
    table = timing_harness(n=config.timing_n, d=config.timing_d, q=config.q,
                           repeats=config.repeats, seed=config.seeds[0])
    rows = [[mode, entry["median_seconds"]] for mode, entry in table.items()]
    nn_median = table["nn-retrain"]["median_seconds"]
    summary = _summary_base(config)
    summary["timing"] = table
    summary["speedup_vs_nn_retrain"] = {
        mode: nn_median / entry["median_seconds"] if entry["median_seconds"] > 0 else float("inf")
        for mode, entry in table.items()
    }
    records = {"timing": (["mode", "median_seconds"], rows), "summary": summary}
    return records, EXIT_OK


def _cmd_theory_check(config: RunConfig) -> tuple[dict, int]:
    checks = run_theory_checks(seed=config.seeds[0])
    rows = []
    all_passed = True
    for c in checks:
        status = "pass" if c.passed else "FAIL"
        print(f"{status}  {c.name}: {c.detail}")
        rows.append([c.name, c.passed, c.detail.replace(",", ";")])
        all_passed &= c.passed
    summary = _summary_base(config)
    summary["checks"] = [
        {"name": c.name, "passed": bool(c.passed), "detail": c.detail} for c in checks
    ]
    summary["all_passed"] = bool(all_passed)
    records = {"theory_check": (["check", "passed", "detail"], rows), "summary": summary}
    return records, EXIT_OK if all_passed else EXIT_CHECK_FAILURE


def _cmd_large_batch(config: RunConfig) -> tuple[dict, int]:
    n_init = config.n_init if config.n_init is not None else 30
    sdd_rows = []
    for kind in ("gp", "mq-rbf", "nn", "rf"):
        rep = run_sdd(kind, config.benchmark, n_init, config.q, config.seeds[0],
                      acquisition=config.acquisition)
        _log(f"large-batch sdd {kind}: min={rep.min_dist:.4f} diverse={rep.diverse}")
        sdd_rows.append([rep.surrogate_name, rep.q, rep.seed, rep.min_dist,
                         rep.mean_dist, rep.diverse])
    records: dict = {
        "sdd": (["surrogate", "q", "seed", "min_dist", "mean_dist", "diverse"], sdd_rows),
    }
    summary = _summary_base(config)
    by_strategy = {}
    for strategy in ("cl-min", "random-batch"):
        traces = run_bo_suite(config.benchmark, strategy, config.q, config.budget,
                              n_init, config.noise_scale, config.seeds,
                              acquisition=config.acquisition)
        by_strategy[strategy] = traces
        _trace_records(traces, records)
        _log(f"large-batch {strategy}: mean final "
             f"{float(np.mean(final_values(traces))):.4f}")
    summary["aggregate"] = {s: summarize_suite(tr) for s, tr in by_strategy.items()}
    records["summary"] = summary
    return records, EXIT_OK


_COMMANDS = {
    "sdd": _cmd_sdd,
    "bo-run": _cmd_bo_run,
    "lp-compare": _cmd_lp_compare,
    "timing": _cmd_timing,
    "theory-check": _cmd_theory_check,
    "large-batch": _cmd_large_batch,
}


def execute(config: RunConfig) -> int:
    """Dispatch a validated config; write outputs; map failures to exit codes."""
    try:
        records, code = _COMMANDS[config.command](config)
        paths = emit_results(records, config.output_path)
        for p in paths:
            _log(f"wrote {p}")
        summary_path = os.path.join(config.output_path, "summary.json")
        if config.command != "theory-check":
            with open(summary_path, "r", encoding="utf-8") as fh:
                sys.stdout.write(fh.read())
        return code
    except NumericalError as exc:
        _log(f"numerical failure: {exc}")
        return EXIT_NUMERICAL
    except OSError as exc:
        _log(f"i/o error: {exc}")
        return EXIT_IO


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        config = parse_config(argv)
    except UsageError as exc:
        _log(f"usage error: {exc}")
        return EXIT_USAGE
    except InvalidInputError as exc:
        _log(f"usage error: {exc}")
        return EXIT_USAGE
    code = execute(config)
    return code


if __name__ == "__main__":
    sys.exit(main())
