"""Aggregate decode traces into step-wise guidance trajectories, per-token
heatmaps, and noise-proxy comparison statistics.

All operations are pure aggregations over immutable trace rows: means are
computed from stored records, so input permutation cannot change output.
CSV artifacts use fixed, headered column orders with floats at 6 significant
digits; heatmaps serialize as JSON.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Mapping

from .errors import PairingError, TraceError

_TRACE_FIELDS = {
    "run_id": str,
    "step": int,
    "position": int,
    "signal": (int, float),
    "noise": (int, float),
    "snr": (int, float),
    "lambda": (int, float),
    "unmasked": bool,
}


@dataclass(frozen=True)
class TraceRow:
    run_id: str
    step: int
    position: int
    signal: float
    noise: float
    snr: float
    lam: float
    unmasked: bool
    token: int | None


def parse_trace_line(line: str, lineno: int) -> TraceRow:
    try:
        raw = json.loads(line)
    except json.JSONDecodeError as exc:
        raise TraceError(f"trace line {lineno}: invalid JSON ({exc.msg})") from exc
    if not isinstance(raw, dict):
        raise TraceError(f"trace line {lineno}: expected an object")
    for key, kinds in _TRACE_FIELDS.items():
        if key not in raw:
            raise TraceError(f"trace line {lineno}: missing field {key!r}")
        value = raw[key]
        # bool is an int subclass; keep the numeric fields strictly numeric.
        valid = isinstance(value, kinds) and (kinds is bool or not isinstance(value, bool))
        if not valid:
            raise TraceError(f"trace line {lineno}: field {key!r} has wrong type")
    token = raw.get("token")
    if raw["unmasked"] and not isinstance(token, int):
        raise TraceError(f"trace line {lineno}: unmasked row lacks an integer token")
    return TraceRow(
        run_id=raw["run_id"],
        step=raw["step"],
        position=raw["position"],
        signal=float(raw["signal"]),
        noise=float(raw["noise"]),
        snr=float(raw["snr"]),
        lam=float(raw["lambda"]),
        unmasked=raw["unmasked"],
        token=token if isinstance(token, int) else None,
    )


def load_trace(path) -> list[TraceRow]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if line:
                rows.append(parse_trace_line(line, lineno))
    return rows


# ---------------------------------------------------------------------------
# Step-wise trajectories
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrajectoryRow:
    group: str
    step: int
    mean_lambda: float
    std_lambda: float
    n: int


@dataclass(frozen=True)
class TrajectoryTable:
    rows: tuple[TrajectoryRow, ...]


def _mean_std(values: list[float]) -> tuple[float, float]:
    # Sorting first makes the reduction independent of input order, so
    # aggregation stays bit-identical under trace permutation.
    values = sorted(values)
    n = len(values)
    mean = sum(values) / n
    var = sum((v - mean) ** 2 for v in values) / n
    return mean, math.sqrt(max(var, 0.0))


def aggregate_trajectories(
    rows: Iterable[TraceRow], grouping: Mapping[str, str] | None = None
) -> TrajectoryTable:
    """Mean/std of the guidance scale per (group, step); empty groups omitted.

    ``grouping`` maps run_id to a group label; unmapped runs keep their
    run_id as the label, and with no grouping every run lands in "all".
    """
    buckets: dict[tuple[str, int], list[float]] = {}
    for row in rows:
        if grouping is None:
            group = "all"
        else:
            group = grouping.get(row.run_id, row.run_id)
        buckets.setdefault((group, row.step), []).append(row.lam)
    table = []
    # Engine steps count down from T, so descending step order reads
    # chronologically in the emitted table.
    for (group, step), lams in sorted(buckets.items(), key=lambda kv: (kv[0][0], -kv[0][1])):
        mean, std = _mean_std(lams)
        table.append(TrajectoryRow(group, step, mean, std, len(lams)))
    return TrajectoryTable(rows=tuple(table))


def write_trajectory_csv(table: TrajectoryTable, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("group,step,mean_lambda,std_lambda,n\n")
        for r in table.rows:
            fh.write(f"{r.group},{r.step},{r.mean_lambda:.6g},{r.std_lambda:.6g},{r.n}\n")


# ---------------------------------------------------------------------------
# Token-position heatmap for a single run
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HeatmapTable:
    """Guidance-scale matrix over (step, position) with unmask markers.

    Steps are listed in execution order (counting down). Cells of positions
    already committed at a step are None; the marker matrix holds exactly
    one True per position, at its commit step.
    """

    run_id: str
    steps: tuple[int, ...]
    positions: tuple[int, ...]
    lam: tuple[tuple[float | None, ...], ...]
    unmasked: tuple[tuple[bool, ...], ...]


def build_heatmap(rows: Iterable[TraceRow]) -> HeatmapTable:
    rows = list(rows)
    if not rows:
        raise TraceError("empty trace")
    run_ids = {r.run_id for r in rows}
    if len(run_ids) != 1:
        raise TraceError(f"heatmap needs a single run, got run_ids {sorted(run_ids)}")
    (run_id,) = run_ids

    total_steps = max(r.step for r in rows)
    positions = tuple(sorted({r.position for r in rows}))
    by_step: dict[int, dict[int, TraceRow]] = {}
    for r in rows:
        by_step.setdefault(r.step, {})[r.position] = r

    committed = 0
    lam_matrix = []
    marker_matrix = []
    steps = tuple(range(total_steps, 0, -1))
    for step in steps:
        at_step = by_step.get(step)
        if at_step is None:
            # Steps after every position committed are legitimately absent.
            if committed != len(positions):
                raise TraceError(f"trace missing step {step}")
            lam_matrix.append(tuple(None for _ in positions))
            marker_matrix.append(tuple(False for _ in positions))
            continue
        lam_matrix.append(tuple(at_step[p].lam if p in at_step else None for p in positions))
        marker_matrix.append(tuple(p in at_step and at_step[p].unmasked for p in positions))
        committed += sum(1 for r in at_step.values() if r.unmasked)

    if committed != len(positions):
        raise TraceError(
            f"trace commits {committed} of {len(positions)} positions; incomplete run"
        )
    return HeatmapTable(
        run_id=run_id,
        steps=steps,
        positions=positions,
        lam=tuple(lam_matrix),
        unmasked=tuple(marker_matrix),
    )


def unmask_order(table: HeatmapTable) -> list[tuple[int, int]]:
    """Commit events as (step, position), in execution order then position."""
    events = []
    for step, markers in zip(table.steps, table.unmasked):
        for position, hit in zip(table.positions, markers):
            if hit:
                events.append((step, position))
    return events


def _round6(x: float | None):
    return None if x is None else float(f"{x:.6g}")


def heatmap_to_dict(table: HeatmapTable) -> dict:
    return {
        "run_id": table.run_id,
        "steps": list(table.steps),
        "positions": list(table.positions),
        "lambda": [[_round6(v) for v in row] for row in table.lam],
        "unmasked": [list(row) for row in table.unmasked],
    }


def write_heatmap_json(table: HeatmapTable, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(heatmap_to_dict(table), fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Noise-proxy comparison over paired runs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProxyRow:
    proxy: str
    group: str
    step: int
    mean_noise: float
    mean_lambda: float
    n: int


@dataclass(frozen=True)
class ProxySeparation:
    """Welch-style separation of the pooled λ means of two groups."""

    proxy: str
    group_a: str
    group_b: str
    lambda_mean_diff: float
    pooled_se: float
    separation_ratio: float


@dataclass(frozen=True)
class ProxyComparison:
    rows: tuple[ProxyRow, ...]
    separations: tuple[ProxySeparation, ...]


def proxy_comparison(
    traces_by_proxy: Mapping[str, Mapping[str, list[TraceRow]]],
    grouping: Mapping[str, str],
) -> ProxyComparison:
    """Compare guidance behavior across noise proxies on paired runs.

    ``traces_by_proxy`` maps proxy name to {pairing key: trace rows}; every
    proxy must cover the same key set (runs paired by seed/scenario), and
    ``grouping`` assigns each pairing key to a scenario group.
    """
    proxies = sorted(traces_by_proxy)
    if len(proxies) < 2:
        raise PairingError("need at least two proxies to compare")
    key_sets = {proxy: set(traces_by_proxy[proxy]) for proxy in proxies}
    reference = key_sets[proxies[0]]
    for proxy in proxies[1:]:
        delta = reference ^ key_sets[proxy]
        if delta:
            raise PairingError(
                f"unpaired runs between {proxies[0]} and {proxy}: {sorted(delta)[:5]}"
            )
    missing = reference - set(grouping)
    if missing:
        raise PairingError(f"runs without a group label: {sorted(missing)[:5]}")

    rows = []
    pooled: dict[tuple[str, str], list[float]] = {}
    for proxy in proxies:
        buckets: dict[tuple[str, int], list[TraceRow]] = {}
        for key, trace_rows in traces_by_proxy[proxy].items():
            group = grouping[key]
            for r in trace_rows:
                buckets.setdefault((group, r.step), []).append(r)
                pooled.setdefault((proxy, group), []).append(r.lam)
        for (group, step), bucket in sorted(buckets.items(), key=lambda kv: (kv[0][0], -kv[0][1])):
            rows.append(
                ProxyRow(
                    proxy=proxy,
                    group=group,
                    step=step,
                    mean_noise=sum(sorted(r.noise for r in bucket)) / len(bucket),
                    mean_lambda=sum(sorted(r.lam for r in bucket)) / len(bucket),
                    n=len(bucket),
                )
            )

    separations = []
    for proxy in proxies:
        groups = sorted(g for (p, g) in pooled if p == proxy)
        for group_a, group_b in combinations(groups, 2):
            a, b = pooled[(proxy, group_a)], pooled[(proxy, group_b)]
            mean_a, std_a = _mean_std(a)
            mean_b, std_b = _mean_std(b)
            diff = mean_a - mean_b
            se = math.sqrt(std_a**2 / len(a) + std_b**2 / len(b))
            if se > 0:
                ratio = diff / se
            else:
                ratio = math.inf if diff > 0 else (-math.inf if diff < 0 else 0.0)
            separations.append(
                ProxySeparation(proxy, group_a, group_b, diff, se, ratio)
            )
    return ProxyComparison(rows=tuple(rows), separations=tuple(separations))


def write_proxy_csv(comparison: ProxyComparison, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("proxy,group,step,mean_noise,mean_lambda,n\n")
        for r in comparison.rows:
            fh.write(
                f"{r.proxy},{r.group},{r.step},{r.mean_noise:.6g},{r.mean_lambda:.6g},{r.n}\n"
            )


def write_separation_csv(comparison: ProxyComparison, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("proxy,group_a,group_b,lambda_mean_diff,pooled_se,separation_ratio\n")
        for s in comparison.separations:
            fh.write(
                f"{s.proxy},{s.group_a},{s.group_b},"
                f"{s.lambda_mean_diff:.6g},{s.pooled_se:.6g},{s.separation_ratio:.6g}\n"
            )
