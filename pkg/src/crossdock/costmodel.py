"""Strong-scaling, throughput, fee and instance-comparison arithmetic.

Operates on an instance catalog (name, cores, peak flops, price per hour)
plus run records (instance, instance count, wall time, docked pairs). The
bundled data files carry the March-2017 Azure catalog and the published
cross-docking runs as historical constants; measured desk runs ingest
through the same TSV shapes the dispatcher emits.

Fees ignore deployment time on purpose: total fee is hourly price times
wall hours times instance count, nothing else. Display rounding is whole
seconds, 0.1 USD and 3 scaling decimals; full precision is kept internally.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import ComparisonError, ParameterError

__all__ = [
    "InstanceSpec",
    "RunRecord",
    "ScalingEntry",
    "Recommendation",
    "AnalysisReport",
    "strong_scaling",
    "speedup",
    "total_fee",
    "throughput_pairs_per_min",
    "compare_instances",
    "load_catalog",
    "load_runs",
    "bundled_catalog_path",
    "bundled_runs_path",
    "build_report",
    "render_report",
]

_RATIO_TIE_TOL = 1e-9


@dataclass(frozen=True)
class InstanceSpec:
    """One cloud instance class from the catalog."""

    name: str
    cpu_model: str
    cores: int
    dp_peak_gflops: float
    gpus: int
    ram_gb: float
    rdma: bool
    price_usd_per_hour: float

    def __post_init__(self):
        if self.cores <= 0:
            raise ParameterError(f"{self.name}: cores must be > 0")
        if self.price_usd_per_hour <= 0:
            raise ParameterError(f"{self.name}: price must be > 0")
        if self.gpus < 0:
            raise ParameterError(f"{self.name}: gpus must be >= 0")


@dataclass(frozen=True)
class RunRecord:
    """One measured (or published) batch run."""

    instance_name: str
    n_instances: int
    wall_time_s: float
    n_pairs: int

    def __post_init__(self):
        if self.n_instances <= 0 or self.wall_time_s <= 0 or self.n_pairs <= 0:
            raise ParameterError(f"run record fields must be positive: {self}")


@dataclass(frozen=True)
class ScalingEntry:
    instance_name: str
    base: RunRecord
    scaled: RunRecord
    speedup: float
    strong_scaling: float
    superlinear: bool


@dataclass(frozen=True)
class Recommendation:
    """Outcome of a speed-ratio vs price-ratio comparison."""

    recommended: str
    other: str
    speed_ratio: float  # time_b / time_a; > 1 means a is faster
    price_ratio: float  # price_a / price_b
    fee_a: float
    fee_b: float
    tie: bool


def _require_comparable(base: RunRecord, scaled: RunRecord) -> None:
    if base.instance_name != scaled.instance_name:
        raise ComparisonError(
            f"different instances: {base.instance_name} vs {scaled.instance_name}"
        )
    if base.n_pairs != scaled.n_pairs:
        raise ComparisonError(
            f"different workloads: {base.n_pairs} vs {scaled.n_pairs} pairs"
        )
    if scaled.n_instances <= base.n_instances:
        raise ComparisonError(
            f"scaled run must use more instances than base "
            f"({scaled.n_instances} <= {base.n_instances})"
        )


def speedup(base: RunRecord, scaled: RunRecord) -> float:
    """Wall-time ratio T_base / T_scaled for the same workload."""
    _require_comparable(base, scaled)
    return base.wall_time_s / scaled.wall_time_s


def strong_scaling(base: RunRecord, scaled: RunRecord) -> float:
    """Parallel efficiency: (T_base/T_scaled) / (n_scaled/n_base).

    1.0 is ideal; values above 1 are superlinear, reported as-is.
    """
    _require_comparable(base, scaled)
    return speedup(base, scaled) / (scaled.n_instances / base.n_instances)


def total_fee(spec: InstanceSpec, wall_time_s: float, n_instances: int) -> float:
    """Price x time (h) x instance count; deployment time is ignored."""
    if wall_time_s <= 0 or n_instances <= 0:
        raise ParameterError("wall_time_s and n_instances must be positive")
    return spec.price_usd_per_hour * (wall_time_s / 3600.0) * n_instances


def throughput_pairs_per_min(n_pairs: int, wall_time_s: float) -> float:
    if n_pairs <= 0 or wall_time_s <= 0:
        raise ParameterError("n_pairs and wall_time_s must be positive")
    return n_pairs / (wall_time_s / 60.0)


def compare_instances(
    a: tuple[InstanceSpec, RunRecord],
    b: tuple[InstanceSpec, RunRecord],
) -> Recommendation:
    """Recommend a over b iff its speed advantage beats its price premium.

    Requires runs of the same workload on the same instance count; exact
    ratio ties go to the cheaper instance.
    """
    spec_a, run_a = a
    spec_b, run_b = b
    if run_a.n_pairs != run_b.n_pairs:
        raise ComparisonError(
            f"different workloads: {run_a.n_pairs} vs {run_b.n_pairs} pairs"
        )
    if run_a.n_instances != run_b.n_instances:
        raise ComparisonError(
            f"different instance counts: {run_a.n_instances} vs {run_b.n_instances}"
        )
    speed_ratio = run_b.wall_time_s / run_a.wall_time_s
    price_ratio = spec_a.price_usd_per_hour / spec_b.price_usd_per_hour
    fee_a = total_fee(spec_a, run_a.wall_time_s, run_a.n_instances)
    fee_b = total_fee(spec_b, run_b.wall_time_s, run_b.n_instances)
    tie = abs(speed_ratio - price_ratio) <= _RATIO_TIE_TOL
    if tie:
        winner = spec_a.name if spec_a.price_usd_per_hour <= spec_b.price_usd_per_hour else spec_b.name
    else:
        winner = spec_a.name if speed_ratio > price_ratio else spec_b.name
    other = spec_b.name if winner == spec_a.name else spec_a.name
    return Recommendation(
        recommended=winner,
        other=other,
        speed_ratio=speed_ratio,
        price_ratio=price_ratio,
        fee_a=fee_a,
        fee_b=fee_b,
        tie=tie,
    )


# --- catalog and run-record TSV I/O -------------------------------------

def bundled_catalog_path() -> Path:
    return Path(str(resources.files("crossdock").joinpath("data/azure_catalog.tsv")))


def bundled_runs_path() -> Path:
    return Path(str(resources.files("crossdock").joinpath("data/paper_runs.tsv")))


def _data_rows(path: str | Path) -> tuple[list[str], list[list[str]]]:
    header: list[str] | None = None
    rows: list[list[str]] = []
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        cells = [c.strip() for c in line.split("\t")]
        if header is None:
            header = cells
        else:
            rows.append(cells)
    if header is None:
        raise ParameterError(f"{path}: empty table")
    return header, rows


def load_catalog(path: str | Path | None = None) -> dict[str, InstanceSpec]:
    """Instance catalog TSV -> name-keyed specs. None loads the bundled
    March-2017 Azure catalog."""
    path = path or bundled_catalog_path()
    header, rows = _data_rows(path)
    expected = [
        "name", "cpu_model", "cores", "dp_peak_gflops", "gpus", "ram_gb",
        "rdma", "price_usd_per_hour",
    ]
    if header != expected:
        raise ParameterError(f"{path}: expected catalog columns {expected}, got {header}")
    catalog: dict[str, InstanceSpec] = {}
    for cells in rows:
        if len(cells) != len(expected):
            raise ParameterError(f"{path}: malformed catalog row {cells}")
        spec = InstanceSpec(
            name=cells[0],
            cpu_model=cells[1],
            cores=int(cells[2]),
            dp_peak_gflops=float(cells[3]),
            gpus=int(cells[4]),
            ram_gb=float(cells[5]),
            rdma=cells[6].lower() in ("yes", "true", "1"),
            price_usd_per_hour=float(cells[7]),
        )
        if spec.name in catalog:
            raise ParameterError(f"{path}: duplicate instance {spec.name}")
        catalog[spec.name] = spec
    return catalog


def load_runs(path: str | Path | None = None) -> list[RunRecord]:
    """Run-record TSV (the dispatcher's report format) -> records. None
    loads the bundled published runs."""
    path = path or bundled_runs_path()
    header, rows = _data_rows(path)
    expected = ["instance", "n_instances", "wall_time_s", "n_pairs"]
    if header != expected:
        raise ParameterError(f"{path}: expected run columns {expected}, got {header}")
    records = []
    for cells in rows:
        if len(cells) != len(expected):
            raise ParameterError(f"{path}: malformed run row {cells}")
        records.append(
            RunRecord(
                instance_name=cells[0],
                n_instances=int(cells[1]),
                wall_time_s=float(cells[2]),
                n_pairs=int(cells[3]),
            )
        )
    return records


# --- full analysis report ------------------------------------------------

@dataclass(frozen=True)
class _RunRow:
    run: RunRecord
    throughput: float
    fee: float
    cores: int
    gpus: int
    price: float


@dataclass(frozen=True)
class AnalysisReport:
    rows: tuple[_RunRow, ...]
    scalings: tuple[ScalingEntry, ...]
    comparisons: tuple[Recommendation, ...]

    def to_json_dict(self) -> dict:
        return {
            "runs": [
                {
                    "instance": r.run.instance_name,
                    "n_instances": r.run.n_instances,
                    "wall_time_s": r.run.wall_time_s,
                    "n_pairs": r.run.n_pairs,
                    "throughput_pairs_per_min": r.throughput,
                    "total_fee_usd": r.fee,
                }
                for r in self.rows
            ],
            "scaling": [
                {
                    "instance": s.instance_name,
                    "base_instances": s.base.n_instances,
                    "scaled_instances": s.scaled.n_instances,
                    "speedup": s.speedup,
                    "strong_scaling": s.strong_scaling,
                    "superlinear": s.superlinear,
                }
                for s in self.scalings
            ],
            "comparisons": [
                {
                    "recommended": c.recommended,
                    "other": c.other,
                    "speed_ratio": c.speed_ratio,
                    "price_ratio": c.price_ratio,
                    "fee_recommended_side_a_usd": c.fee_a,
                    "fee_side_b_usd": c.fee_b,
                    "tie": c.tie,
                }
                for c in self.comparisons
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)

    def scaling_for(self, instance: str, base_n: int, scaled_n: int) -> ScalingEntry:
        for s in self.scalings:
            if (
                s.instance_name == instance
                and s.base.n_instances == base_n
                and s.scaled.n_instances == scaled_n
            ):
                return s
        raise KeyError(f"no scaling entry {instance} {base_n}->{scaled_n}")


def build_report(catalog: dict[str, InstanceSpec], runs: list[RunRecord]) -> AnalysisReport:
    """Derive every throughput, fee, scaling and comparison figure.

    Scaling compares each instance's smallest-count run against every larger
    one; comparisons pit the fastest instance of each (n_instances, n_pairs)
    group against the others. Unknown instance names are an error.
    """
    for run in runs:
        if run.instance_name not in catalog:
            raise ComparisonError(f"unknown instance name {run.instance_name!r} in runs")

    rows = []
    for run in runs:
        spec = catalog[run.instance_name]
        rows.append(
            _RunRow(
                run=run,
                throughput=throughput_pairs_per_min(run.n_pairs, run.wall_time_s),
                fee=total_fee(spec, run.wall_time_s, run.n_instances),
                cores=spec.cores * run.n_instances,
                gpus=spec.gpus * run.n_instances,
                price=spec.price_usd_per_hour,
            )
        )

    by_instance: dict[tuple[str, int], list[RunRecord]] = {}
    for run in runs:
        by_instance.setdefault((run.instance_name, run.n_pairs), []).append(run)
    scalings = []
    for (name, _pairs), group in sorted(by_instance.items()):
        group = sorted(group, key=lambda r: r.n_instances)
        base = group[0]
        for scaled in group[1:]:
            eff = strong_scaling(base, scaled)
            scalings.append(
                ScalingEntry(
                    instance_name=name,
                    base=base,
                    scaled=scaled,
                    speedup=speedup(base, scaled),
                    strong_scaling=eff,
                    superlinear=eff > 1.0,
                )
            )

    by_shape: dict[tuple[int, int], list[RunRecord]] = {}
    for run in runs:
        by_shape.setdefault((run.n_instances, run.n_pairs), []).append(run)
    comparisons = []
    for _shape, group in sorted(by_shape.items()):
        if len(group) < 2:
            continue
        group = sorted(group, key=lambda r: (r.wall_time_s, r.instance_name))
        fastest = group[0]
        for other in group[1:]:
            comparisons.append(
                compare_instances(
                    (catalog[fastest.instance_name], fastest),
                    (catalog[other.instance_name], other),
                )
            )

    return AnalysisReport(rows=tuple(rows), scalings=tuple(scalings),
                          comparisons=tuple(comparisons))


def render_report(report: AnalysisReport) -> str:
    """Human-readable tables: display rounding only (whole seconds, 0.1 USD,
    3 scaling decimals)."""
    out = []
    out.append("Runs")
    out.append(f"{'instance':<8} {'#inst':>5} {'cores':>6} {'GPUs':>5} "
               f"{'time':>8} {'pairs':>6} {'pairs/min':>9} {'USD/h':>6} {'fee USD':>8}")
    for r in report.rows:
        out.append(
            f"{r.run.instance_name:<8} {r.run.n_instances:>5} {r.cores:>6} "
            f"{r.gpus if r.gpus else '-':>5} {round(r.run.wall_time_s):>6} s "
            f"{r.run.n_pairs:>6} {round(r.throughput):>9} {r.price:>6.2f} {r.fee:>8.1f}"
        )
    if report.scalings:
        out.append("")
        out.append("Strong scaling")
        for s in report.scalings:
            flag = "  (superlinear)" if s.superlinear else ""
            out.append(
                f"{s.instance_name:<8} {s.base.n_instances:>3} -> {s.scaled.n_instances:<3} "
                f"instances  speedup {s.speedup:5.2f}x  scaling {s.strong_scaling:.3f}{flag}"
            )
    if report.comparisons:
        out.append("")
        out.append("Instance comparisons (speed ratio vs price ratio)")
        for c in report.comparisons:
            how = "tie broken by price" if c.tie else (
                f"speed ratio {c.speed_ratio:.2f} vs price ratio {c.price_ratio:.2f}"
            )
            out.append(
                f"recommend {c.recommended} over {c.other}: {how} "
                f"(fees {c.fee_a:.1f} vs {c.fee_b:.1f} USD)"
            )
    return "\n".join(out) + "\n"
