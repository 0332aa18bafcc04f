"""Seeded experiment harness: logged-data ingestion, trace emission, and the
coverage, width, timing, predictor, and gated studies.

Every CSV artifact is a deterministic function of the configuration;
wall-clock figures appear only in the textual report, never in a CSV.
"""
from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Iterable, Iterator

from .baselines import GridCS, HindsightCS, el_asymptotic_ci
from .core import Config, Interval, LogSample
from .engines import (
    DoublyHedgedCS,
    ScalarCS,
    TwoSidedCS,
    control_variate,
)
from .environments import env_suite, sample_stream, synth_env

__all__ = [
    "ConfigError",
    "DataError",
    "ExperimentConfig",
    "Report",
    "TraceRow",
    "emit_trace",
    "ingest_jsonl",
    "load_config",
    "read_trace",
    "run_experiment",
]

EXPERIMENTS = ("coverage", "width", "timing", "predictor", "gated", "ci")

_METHODS_BY_EXPERIMENT = {
    "coverage": ("stream", "scalar", "grid", "hindsight"),
    "width": ("stream", "scalar", "grid", "hindsight", "el"),
    "timing": ("stream", "scalar", "grid", "hindsight"),
    "predictor": ("stream", "predictor", "doubly"),
    "gated": ("gated",),
    "ci": ("stream", "scalar", "grid", "hindsight", "predictor", "doubly"),
}

_DEFAULT_METHODS = {
    "coverage": ("stream", "scalar"),
    "width": ("stream", "scalar", "grid", "hindsight", "el"),
    "timing": ("stream", "scalar", "grid", "hindsight"),
    "predictor": ("stream", "predictor", "doubly"),
    "gated": ("gated",),
    "ci": ("stream",),
}


class ConfigError(ValueError):
    """Bad experiment configuration (unknown key, value, or method)."""


class DataError(ValueError):
    """Malformed or out-of-contract logged data."""


@dataclass
class ExperimentConfig:
    """Flat experiment description; every field has a config-file key of the
    same name and a CLI flag."""

    experiment: str = "coverage"
    alpha: float = 0.05
    w_max: float = 100.0
    seed: int = 0
    n: int = 20_000
    n_envs: int = 200
    n_seeds: int = 10
    methods: tuple[str, ...] = ()
    out: str = "."
    stride: int = 0
    eps: float = 0.005
    input: str = ""
    delta: float = 0.17
    rho: float = 1.0
    p_target: float = 0.5
    budget_s: float = 0.0
    workers: int = 0

    def resolved_methods(self) -> tuple[str, ...]:
        return self.methods or _DEFAULT_METHODS[self.experiment]

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(
                f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENTS}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.w_max < 1.0:
            raise ConfigError(f"w_max must be >= 1, got {self.w_max}")
        for name in ("n", "n_envs", "n_seeds"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.stride < 0:
            raise ConfigError(f"stride must be >= 0, got {self.stride}")
        if not 0.0 < self.eps < 0.5:
            raise ConfigError(f"eps must be in (0, 0.5), got {self.eps}")
        if self.workers < 0:
            raise ConfigError(f"workers must be >= 0, got {self.workers}")
        allowed = _METHODS_BY_EXPERIMENT[self.experiment]
        for m in self.resolved_methods():
            if m not in allowed:
                raise ConfigError(
                    f"unknown method {m!r} for {self.experiment}; "
                    f"expected one of {allowed}")
        if self.experiment == "ci" and not self.input:
            raise ConfigError("ci requires an input path")


def _coerce(name: str, raw: str):
    for f in fields(ExperimentConfig):
        if f.name != name:
            continue
        if f.type in ("float", float):
            try:
                return float(raw)
            except ValueError:
                raise ConfigError(f"{name} expects a number, got {raw!r}") from None
        if f.type in ("int", int):
            try:
                return int(raw)
            except ValueError:
                raise ConfigError(f"{name} expects an integer, got {raw!r}") from None
        if name == "methods":
            return tuple(m.strip() for m in raw.split(",") if m.strip())
        return raw
    raise ConfigError(f"unknown config key {name!r}")


def load_config(path: str, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    """Parse a flat ``key = value`` file ('#' comments allowed), then apply
    command-line overrides on top."""
    values: dict[str, object] = {}
    try:
        lines = open(path).read().splitlines()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    for i, line in enumerate(lines, start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{path} line {i}: expected key = value")
        key, _, raw = body.partition("=")
        values[key.strip()] = _coerce(key.strip(), raw.strip())
    for key, raw in (overrides or {}).items():
        values[key] = _coerce(key, raw)
    cfg = ExperimentConfig(**values)
    cfg.validate()
    return cfg


# --------------------------------------------------------------------------
# logged-data ingestion and trace emission


def ingest_jsonl(path: str, w_max: float | None = None) -> Iterator[LogSample]:
    """One JSON record per line with fields w, r, and optionally either c or
    the pair (q_taken, q_bar); the pair is folded into a control variate.
    Raises DataError naming the first offending line."""
    try:
        fh = open(path)
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from None
    with fh:
        for i, line in enumerate(fh, start=1):
            if not line.strip():
                raise DataError(f"{path} line {i}: blank line")
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataError(f"{path} line {i}: invalid JSON ({e.msg})") from None
            if not isinstance(rec, dict):
                raise DataError(f"{path} line {i}: expected an object")
            try:
                w = float(rec["w"])
                r = float(rec["r"])
            except KeyError as e:
                raise DataError(f"{path} line {i}: missing field {e.args[0]!r}") from None
            except (TypeError, ValueError):
                raise DataError(f"{path} line {i}: w and r must be numbers") from None
            if w < 0.0 or not math.isfinite(w):
                raise DataError(f"{path} line {i}: w={w} is not a nonnegative weight")
            if w_max is not None and w > w_max * (1.0 + 1e-12):
                raise DataError(f"{path} line {i}: w={w} exceeds w_max={w_max}")
            if not 0.0 <= r <= 1.0:
                raise DataError(f"{path} line {i}: r={r} outside [0, 1]")
            has_pair = "q_taken" in rec or "q_bar" in rec
            if "c" in rec and has_pair:
                raise DataError(
                    f"{path} line {i}: give either c or (q_taken, q_bar), not both")
            if has_pair:
                if "q_taken" not in rec or "q_bar" not in rec:
                    raise DataError(
                        f"{path} line {i}: q_taken and q_bar must come together")
                try:
                    c = control_variate(w, float(rec["q_taken"]), float(rec["q_bar"]))
                except (TypeError, ValueError) as e:
                    raise DataError(f"{path} line {i}: {e}") from None
            elif "c" in rec:
                try:
                    c = float(rec["c"])
                except (TypeError, ValueError):
                    raise DataError(f"{path} line {i}: c must be a number") from None
                if not -1.0 <= c <= w:
                    raise DataError(
                        f"{path} line {i}: c={c} outside the achievable [-1, w]")
            else:
                c = None
            yield LogSample(w=w, r=r, c=c)


@dataclass(frozen=True)
class TraceRow:
    t: int
    v_lo: float
    v_hi: float
    v_lo_int: float
    v_hi_int: float
    method: str


_TRACE_HEADER = ("t", "v_lo", "v_hi", "v_lo_int", "v_hi_int", "method")


def emit_trace(
    intervals: Iterable[Interval],
    path: str,
    method: str = "stream",
    stride: int = 1,
) -> int:
    """Write the interval sequence and its running intersection as CSV, one
    row per ``stride`` steps. Returns the number of data rows written."""
    if stride < 1:
        raise ConfigError(f"stride must be >= 1, got {stride}")
    rows = 0
    lo_int = -math.inf
    hi_int = math.inf
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(_TRACE_HEADER)
        for t, iv in enumerate(intervals, start=1):
            lo_int = max(lo_int, iv.lo)
            hi_int = min(hi_int, iv.hi)
            if t % stride == 0:
                out.writerow(
                    (t, repr(iv.lo), repr(iv.hi), repr(lo_int), repr(hi_int), method))
                rows += 1
    return rows


def read_trace(path: str) -> list[TraceRow]:
    """Parse a file written by emit_trace back into rows."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is not None and tuple(header) != _TRACE_HEADER:
            raise DataError(f"{path}: unexpected trace header {header}")
        for rec in reader:
            out.append(TraceRow(
                t=int(rec[0]), v_lo=float(rec[1]), v_hi=float(rec[2]),
                v_lo_int=float(rec[3]), v_hi_int=float(rec[4]), method=rec[5]))
    return out


# --------------------------------------------------------------------------
# experiment plumbing


@dataclass
class Report:
    """Everything run_experiment learned: artifact paths with their data row
    counts, scalar metrics, and the human-readable summary."""

    experiment: str
    csv_paths: dict[str, str] = field(default_factory=dict)
    rows: dict[str, int] = field(default_factory=dict)
    metrics: dict[str, float] = field(default_factory=dict)
    lines: list[str] = field(default_factory=list)

    def render(self) -> str:
        out = [f"experiment: {self.experiment}"]
        for name, path in self.csv_paths.items():
            out.append(f"wrote {path} ({self.rows[name]} rows)")
        out.extend(self.lines)
        return "\n".join(out)


def _worker_count(ecfg: ExperimentConfig) -> int:
    if ecfg.workers > 0:
        return ecfg.workers
    raw = os.environ.get("OPECS_WORKERS", "")
    if not raw:
        return 1
    try:
        got = int(raw)
    except ValueError:
        raise ConfigError(f"OPECS_WORKERS must be an integer, got {raw!r}") from None
    return max(got, 1)


def _fanout(fn, tasks: list, workers: int) -> list:
    """Apply fn to every task, preserving task order in the result list so
    merged output is independent of scheduling."""
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def _write_csv(path: str, header: tuple[str, ...], rows: list[tuple]) -> int:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        for row in rows:
            out.writerow(row)
    return len(rows)


def _fmt(x: float) -> str:
    return repr(float(x))


def _make_engine(method: str, cfg: Config, ecfg: ExperimentConfig, grouped: bool = True):
    if method == "stream":
        return TwoSidedCS(cfg)
    if method == "scalar":
        return ScalarCS(cfg)
    if method == "grid":
        return GridCS(cfg, eps=ecfg.eps)
    if method == "hindsight":
        return HindsightCS(cfg, grouped=grouped)
    if method == "predictor":
        return TwoSidedCS(cfg, "predictor")
    if method == "doubly":
        return DoublyHedgedCS(cfg)
    if method == "gated":
        return TwoSidedCS(cfg, "gated")
    raise ConfigError(f"unknown method {method!r}")


def _auto_stride(ecfg: ExperimentConfig) -> int:
    return ecfg.stride if ecfg.stride > 0 else max(ecfg.n // 20, 1)


# --------------------------------------------------------------------------
# coverage


def _coverage_one(task) -> list[tuple]:
    ecfg, env_idx, dist, truth = task
    cfg = Config(alpha=ecfg.alpha, w_max=ecfg.w_max)
    methods = ecfg.resolved_methods()
    engines = {m: _make_engine(m, cfg, ecfg) for m in methods}
    first_bad = {m: 0 for m in methods}
    stream_seed = ecfg.seed * 1_000_000 + env_idx
    for t, s in enumerate(sample_stream(dist, seed=stream_seed, n=ecfg.n), start=1):
        for m, eng in engines.items():
            if first_bad[m]:
                continue
            iv = eng.update(s)
            if not (iv.lo - 1e-12 <= truth <= iv.hi + 1e-12):
                first_bad[m] = t
    return [
        (env_idx, _fmt(truth), m, int(first_bad[m] == 0), first_bad[m])
        for m in methods
    ]


def run_coverage(ecfg: ExperimentConfig) -> Report:
    envs = env_suite("coverage", seed=ecfg.seed, n_envs=ecfg.n_envs)
    tasks = [(ecfg, i, dist, truth) for i, (dist, truth) in enumerate(envs)]
    results = _fanout(_coverage_one, tasks, _worker_count(ecfg))
    rows = [row for chunk in results for row in chunk]
    path = os.path.join(ecfg.out, "coverage.csv")
    count = _write_csv(
        path, ("env", "truth", "method", "covered", "first_violation_t"), rows)
    rep = Report("coverage", {"coverage": path}, {"coverage": count})
    for m in ecfg.resolved_methods():
        hits = [r[3] for r in rows if r[2] == m]
        frac = sum(hits) / len(hits)
        se = math.sqrt(frac * (1.0 - frac) / len(hits)) if 0.0 < frac < 1.0 else 0.0
        rep.metrics[f"coverage_{m}"] = frac
        rep.lines.append(
            f"{m}: time-uniform coverage {frac:.4f} "
            f"({sum(hits)}/{len(hits)}, binomial se {se:.4f}, target {1 - ecfg.alpha})")
    return rep


# --------------------------------------------------------------------------
# width


def _width_one(task) -> tuple[list[tuple], list[tuple]]:
    ecfg, env_idx, dist, run_seed, checkpoints = task
    cfg = Config(alpha=ecfg.alpha, w_max=ecfg.w_max)
    methods = ecfg.resolved_methods()
    engines = {m: _make_engine(m, cfg, ecfg) for m in methods if m != "el"}
    samples = list(sample_stream(dist, seed=run_seed, n=ecfg.n))
    marks = set(checkpoints)
    curve: list[tuple] = []
    for t, s in enumerate(samples, start=1):
        for m, eng in engines.items():
            eng.update(s)
        if t in marks:
            for m, eng in engines.items():
                iv = eng.interval()
                curve.append((env_idx, run_seed, m, t, iv.width()))
            if "el" in methods:
                iv = el_asymptotic_ci(samples[:t], cfg)
                curve.append((env_idx, run_seed, "el", t, iv.width()))
    final: list[tuple] = []
    for m, eng in engines.items():
        iv = eng.interval()
        final.append((env_idx, run_seed, m, _fmt(iv.lo), _fmt(iv.hi), _fmt(iv.width())))
    if "el" in methods:
        iv = el_asymptotic_ci(samples, cfg)
        final.append((env_idx, run_seed, "el", _fmt(iv.lo), _fmt(iv.hi), _fmt(iv.width())))
    return final, curve


def run_width(ecfg: ExperimentConfig) -> Report:
    envs = env_suite("width", seed=ecfg.seed)
    stride = _auto_stride(ecfg)
    checkpoints = tuple(range(stride, ecfg.n + 1, stride))
    tasks = [
        (ecfg, env_idx, dist, ecfg.seed + 1000 + k, checkpoints)
        for env_idx, (dist, _) in enumerate(envs)
        for k in range(ecfg.n_seeds)
    ]
    results = _fanout(_width_one, tasks, _worker_count(ecfg))
    final_rows = [row for fin, _ in results for row in fin]
    # per-seed curves collapse to a mean width per (env, method, t)
    acc: dict[tuple, list[float]] = {}
    for _, curve in results:
        for env_idx, _seed, m, t, width in curve:
            acc.setdefault((env_idx, m, t), []).append(width)
    curve_rows = [
        (env_idx, m, t, _fmt(sum(ws) / len(ws)), int(m == "el"))
        for (env_idx, m, t), ws in sorted(acc.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2]))
    ]
    out_final = os.path.join(ecfg.out, "width_final.csv")
    out_curve = os.path.join(ecfg.out, "width_curve.csv")
    n_final = _write_csv(
        out_final, ("env", "seed", "method", "lo", "hi", "width"), final_rows)
    n_curve = _write_csv(
        out_curve, ("env", "method", "t", "mean_width", "pointwise_only"), curve_rows)
    rep = Report(
        "width",
        {"width_final": out_final, "width_curve": out_curve},
        {"width_final": n_final, "width_curve": n_curve},
    )
    for m in ecfg.resolved_methods():
        per_env = []
        for env_idx in range(len(envs)):
            ws = [float(r[5]) for r in final_rows if r[0] == env_idx and r[2] == m]
            per_env.append(sum(ws) / len(ws))
        pooled = sum(per_env) / len(per_env)
        rep.metrics[f"width_{m}"] = pooled
        detail = ", ".join(f"env{j}={w:.4f}" for j, w in enumerate(per_env))
        note = " (pointwise CI, not a CS)" if m == "el" else ""
        rep.lines.append(f"{m}: mean final width {pooled:.4f} [{detail}]{note}")
    return rep


# --------------------------------------------------------------------------
# timing


def run_timing(ecfg: ExperimentConfig) -> Report:
    cfg = Config(alpha=ecfg.alpha, w_max=ecfg.w_max)
    # hardest width environment: V=0.05 with E[w2]=50
    dist, _ = env_suite("width", seed=ecfg.seed)[1]
    methods = ecfg.resolved_methods()
    budget = ecfg.budget_s if ecfg.budget_s > 0 else math.inf
    samples = list(sample_stream(dist, seed=ecfg.seed + 1000, n=ecfg.n))
    seconds: dict[str, float] = {}
    steps: dict[str, int] = {}
    for m in methods:
        eng = _make_engine(m, cfg, ecfg, grouped=False)
        done = 0
        t0 = time.perf_counter()
        for s in samples:
            eng.update(s)
            done += 1
            if done % 4096 == 0 and time.perf_counter() - t0 > budget:
                break
        seconds[m] = time.perf_counter() - t0
        steps[m] = done
    # per-sample cost growth check: the same engine over twice the data
    doubled = ""
    if "stream" in methods:
        big = list(sample_stream(dist, seed=ecfg.seed + 1000, n=2 * ecfg.n))
        eng = _make_engine("stream", cfg, ecfg)
        t0 = time.perf_counter()
        for s in big:
            eng.update(s)
        seconds["stream_2n"] = time.perf_counter() - t0
        steps["stream_2n"] = 2 * ecfg.n
        ratio = seconds["stream_2n"] / seconds["stream"]
        doubled = f"stream at 2n: {seconds['stream_2n']:.2f}s ({ratio:.2f}x the n run)"
    path = os.path.join(ecfg.out, "timing.csv")
    count = _write_csv(path, ("method", "n"), [(m, ecfg.n) for m in methods])
    rep = Report("timing", {"timing": path}, {"timing": count})
    for m in methods:
        capped = " (budget-capped)" if steps[m] < ecfg.n else ""
        rep.metrics[f"seconds_{m}"] = seconds[m]
        rep.metrics[f"steps_{m}"] = steps[m]
        rep.lines.append(f"{m}: {seconds[m]:.2f}s for {steps[m]} samples{capped}")
    if doubled:
        rep.metrics["seconds_stream_2n"] = seconds["stream_2n"]
        rep.lines.append(doubled)
    for fast in ("stream", "scalar"):
        for slow in ("grid", "hindsight"):
            if fast in seconds and slow in seconds:
                # a capped slow run still certifies the ratio it reached
                per_fast = seconds[fast] / steps[fast]
                per_slow = seconds[slow] / steps[slow]
                ratio = per_slow / per_fast
                rep.metrics[f"ratio_{slow}_over_{fast}"] = ratio
                rep.lines.append(f"{slow} / {fast} per-sample cost: {ratio:.1f}x")
    return rep


# --------------------------------------------------------------------------
# predictor


def _predictor_one(task) -> tuple[list[tuple], list[tuple]]:
    ecfg, run_seed, checkpoints = task
    cfg = Config(alpha=ecfg.alpha, w_max=1.0 / ecfg.p_target)
    methods = ecfg.resolved_methods()
    engines = {m: _make_engine(m, cfg, ecfg) for m in methods}
    marks = set(checkpoints)
    curve: list[tuple] = []
    stream = synth_env(
        "predictor", seed=run_seed, n=ecfg.n, rho=ecfg.rho, p_target=ecfg.p_target)
    for t, s in enumerate(stream, start=1):
        for m, eng in engines.items():
            eng.update(s)
        if t in marks:
            for m, eng in engines.items():
                curve.append((run_seed, m, t, eng.interval().width()))
    final = []
    for m, eng in engines.items():
        iv = eng.interval()
        final.append((run_seed, m, _fmt(iv.lo), _fmt(iv.hi), _fmt(iv.width())))
    return final, curve


def run_predictor(ecfg: ExperimentConfig) -> Report:
    stride = _auto_stride(ecfg)
    checkpoints = tuple(range(stride, ecfg.n + 1, stride))
    tasks = [
        (ecfg, ecfg.seed + 1000 + k, checkpoints) for k in range(ecfg.n_seeds)
    ]
    results = _fanout(_predictor_one, tasks, _worker_count(ecfg))
    final_rows = [row for fin, _ in results for row in fin]
    acc: dict[tuple, list[float]] = {}
    for _, curve in results:
        for _seed, m, t, width in curve:
            acc.setdefault((m, t), []).append(width)
    curve_rows = [
        (m, t, _fmt(sum(ws) / len(ws)))
        for (m, t), ws in sorted(acc.items())
    ]
    out_final = os.path.join(ecfg.out, "predictor.csv")
    out_curve = os.path.join(ecfg.out, "predictor_curve.csv")
    n_final = _write_csv(out_final, ("seed", "method", "lo", "hi", "width"), final_rows)
    n_curve = _write_csv(out_curve, ("method", "t", "mean_width"), curve_rows)
    rep = Report(
        "predictor",
        {"predictor": out_final, "predictor_curve": out_curve},
        {"predictor": n_final, "predictor_curve": n_curve},
    )
    for m in ecfg.resolved_methods():
        ws = [float(r[4]) for r in final_rows if r[1] == m]
        mean = sum(ws) / len(ws)
        rep.metrics[f"width_{m}"] = mean
        rep.lines.append(f"{m}: mean final width {mean:.4f} (rho={ecfg.rho})")
    return rep


# --------------------------------------------------------------------------
# gated


def _gated_one(task) -> tuple:
    ecfg, run_seed = task
    cfg = Config(alpha=ecfg.alpha, w_max=1.0 / ecfg.p_target)
    eng = _make_engine("gated", cfg, ecfg)
    stream = synth_env(
        "gated", seed=run_seed, n=ecfg.n, delta=ecfg.delta, p_target=ecfg.p_target)
    first_bad = 0
    decision = ""
    decision_t = 0
    for t, s in enumerate(stream, start=1):
        iv = eng.update(s)
        if not first_bad and not (iv.lo - 1e-12 <= ecfg.delta <= iv.hi + 1e-12):
            first_bad = t
        if not decision_t and not iv.empty:
            if iv.lo > 0.0:
                decision, decision_t = "deploy", t
            elif iv.hi < 0.0:
                decision, decision_t = "discard", t
    return (run_seed, int(first_bad == 0), first_bad, decision or "none", decision_t)


def run_gated(ecfg: ExperimentConfig) -> Report:
    tasks = [(ecfg, ecfg.seed + 1000 + k) for k in range(ecfg.n_seeds)]
    results = _fanout(_gated_one, tasks, _worker_count(ecfg))
    path = os.path.join(ecfg.out, "gated.csv")
    count = _write_csv(
        path, ("seed", "covered", "first_violation_t", "decision", "decision_t"),
        results)
    # one representative trace, first seed
    cfg = Config(alpha=ecfg.alpha, w_max=1.0 / ecfg.p_target)
    eng = _make_engine("gated", cfg, ecfg)
    stream = synth_env(
        "gated", seed=ecfg.seed + 1000, n=ecfg.n, delta=ecfg.delta,
        p_target=ecfg.p_target)
    trace_path = os.path.join(ecfg.out, "gated_trace.csv")
    trace_rows = emit_trace(
        (eng.update(s) for s in stream), trace_path, method="gated",
        stride=_auto_stride(ecfg))
    rep = Report(
        "gated",
        {"gated": path, "gated_trace": trace_path},
        {"gated": count, "gated_trace": trace_rows},
    )
    covered = sum(r[1] for r in results)
    deploys = [r[4] for r in results if r[3] == "deploy"]
    rep.metrics["covered"] = covered
    rep.metrics["deploy_count"] = len(deploys)
    rep.lines.append(
        f"difference {ecfg.delta} inside the CS for the whole run: "
        f"{covered}/{len(results)} seeds")
    if deploys:
        rep.lines.append(
            f"deploy decisions: {len(deploys)}/{len(results)} seeds, "
            f"first at t={min(deploys)}, median t={sorted(deploys)[len(deploys) // 2]}")
    else:
        rep.lines.append("deploy decisions: none fired")
    return rep


# --------------------------------------------------------------------------
# logged-data ci


def run_ci(ecfg: ExperimentConfig) -> Report:
    methods = ecfg.resolved_methods()
    cfg = Config(alpha=ecfg.alpha, w_max=ecfg.w_max)
    samples = list(ingest_jsonl(ecfg.input, w_max=ecfg.w_max))
    if not samples:
        raise DataError(f"{ecfg.input}: no samples")
    needs_c = [m for m in methods if m in ("predictor", "doubly")]
    if needs_c and any(s.c is None for s in samples):
        raise DataError(
            f"method {needs_c[0]!r} needs a control variate on every sample")
    stride = ecfg.stride if ecfg.stride > 0 else 1
    rep = Report("ci")
    for method in methods:
        eng = _make_engine(method, cfg, ecfg)
        name = "trace" if len(methods) == 1 else f"trace_{method}"
        path = os.path.join(ecfg.out, f"{name}.csv")
        rows = emit_trace(
            (eng.update(s) for s in samples), path, method=method, stride=stride)
        iv = eng.interval()
        rep.csv_paths[name] = path
        rep.rows[name] = rows
        rep.metrics[f"lo_{method}"] = iv.lo
        rep.metrics[f"hi_{method}"] = iv.hi
        if iv.empty:
            rep.lines.append(
                f"{method}: interval empty after {len(samples)} samples "
                "(every candidate value rejected; check weight calibration)")
        else:
            rep.lines.append(
                f"{method}: final {100 * (1 - ecfg.alpha):g}% interval "
                f"[{iv.lo:.6f}, {iv.hi:.6f}] after {len(samples)} samples")
    return rep


_RUNNERS = {
    "coverage": run_coverage,
    "width": run_width,
    "timing": run_timing,
    "predictor": run_predictor,
    "gated": run_gated,
    "ci": run_ci,
}


def run_experiment(ecfg: ExperimentConfig) -> Report:
    """Dispatch one experiment; CSV artifacts land under ecfg.out."""
    ecfg.validate()
    os.makedirs(ecfg.out, exist_ok=True)
    return _RUNNERS[ecfg.experiment](ecfg)
