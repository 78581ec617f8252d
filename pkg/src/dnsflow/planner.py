"""Spark executor sizing and EMR-style runtime cost comparison.

Sizing follows the usual YARN guidance: reserve one vCPU and one GiB per node
for the OS and node manager, give each executor at most five cores, split each
executor's memory budget 90/10 between heap and overhead (floored to whole
GiB), and hold back one executor slot for the driver.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import ValidationError

__all__ = [
    "InstanceType",
    "ExecutorPlan",
    "CostEstimate",
    "Scenario",
    "ComparisonRow",
    "UnknownInstance",
    "plan_executors",
    "parallel_tasks",
    "estimate_cost",
    "compare_scenarios",
    "default_catalog",
    "load_catalog",
    "REFERENCE_SCENARIOS",
    "write_comparison",
]

MAX_EXECUTOR_CORES = 5
HEAP_TENTHS = 9  # heap share of the executor budget, in tenths
MONEY_QUANTUM = Decimal("0.0001")


class UnknownInstance(ValidationError):
    pass


@dataclass(frozen=True)
class InstanceType:
    name: str
    vcpus: int
    ram_gib: int
    hourly_rate_usd: Decimal = Decimal("0")

    def __post_init__(self):
        if self.vcpus < 1 or self.ram_gib < 1:
            raise ValidationError(f"{self.name}: vcpus and ram_gib must be >= 1")
        rate = Decimal(str(self.hourly_rate_usd))
        if rate < 0:
            raise ValidationError(f"{self.name}: hourly rate must be non-negative")
        object.__setattr__(self, "hourly_rate_usd", rate)


@dataclass(frozen=True)
class ExecutorPlan:
    executor_cores: int
    executors_per_node: int
    executor_instances: int
    executor_memory_gib: int
    memory_overhead_gib: int
    parallel_tasks: int
    memory_budget_gib: int
    dynamic_allocation: bool = False

    def spark_conf(self) -> dict[str, str]:
        return {
            "spark.dynamicAllocation.enabled": "false",
            "spark.executor.cores": str(self.executor_cores),
            "spark.executor.memory": f"{self.executor_memory_gib}g",
            "spark.executor.instances": str(self.executor_instances),
            "spark.yarn.executor.memoryOverhead": f"{self.memory_overhead_gib}g",
        }


@dataclass(frozen=True)
class CostEstimate:
    node_count: int
    runtime_minutes: Decimal
    total_cost_usd: Decimal


def plan_executors(instance: InstanceType, core_nodes: int) -> ExecutorPlan:
    if core_nodes < 1:
        raise ValueError("core_nodes must be >= 1")
    usable_cores = instance.vcpus - 1
    cores = min(MAX_EXECUTOR_CORES, max(1, usable_cores))
    per_node = max(1, usable_cores // cores)
    budget = (instance.ram_gib - 1) // per_node
    heap = budget * HEAP_TENTHS // 10
    instances = max(1, per_node * core_nodes - 1)
    return ExecutorPlan(
        executor_cores=cores,
        executors_per_node=per_node,
        executor_instances=instances,
        executor_memory_gib=heap,
        memory_overhead_gib=budget - heap,
        parallel_tasks=cores * instances,
        memory_budget_gib=budget,
    )


def parallel_tasks(plan: ExecutorPlan | None = None, *, cores: int | None = None, instances: int | None = None) -> int:
    """Concurrent task slots: executor cores times executor instances."""
    if plan is not None:
        cores, instances = plan.executor_cores, plan.executor_instances
    if cores is None or instances is None:
        raise TypeError("pass a plan or both cores and instances")
    return cores * instances


def _dec(value) -> Decimal:
    return value if isinstance(value, Decimal) else Decimal(str(value))


def estimate_cost(node_count: int, hourly_rate_usd, runtime_minutes) -> CostEstimate:
    """Cost of ``node_count`` nodes for ``runtime_minutes``, rounded half-up to 4 places."""
    rate = _dec(hourly_rate_usd)
    minutes = _dec(runtime_minutes)
    if node_count < 0 or rate < 0 or minutes < 0:
        raise ValueError("cost inputs must be non-negative")
    total = (Decimal(node_count) * rate * minutes / Decimal(60)).quantize(MONEY_QUANTUM, rounding=ROUND_HALF_UP)
    return CostEstimate(node_count, minutes, total)


@dataclass(frozen=True)
class Scenario:
    instance: str
    core_nodes: int
    runtime_minutes: Decimal


@dataclass(frozen=True)
class ComparisonRow:
    instance: str
    core_nodes: int
    plan: ExecutorPlan
    cost: CostEstimate

    CSV_HEADER = (
        "instance",
        "nodes",
        "executor_cores",
        "executor_instances",
        "executor_memory_gib",
        "memory_overhead_gib",
        "parallel_tasks",
        "runtime_minutes",
        "hourly_rate_usd",
        "total_cost_usd",
    )


# The three 1 + 10 node cases with their measured runtimes.
REFERENCE_SCENARIOS = (
    Scenario("m5.xlarge", 10, Decimal(40)),
    Scenario("m5.2xlarge", 10, Decimal(22)),
    Scenario("r5.4xlarge", 10, Decimal(13)),
)


def compare_scenarios(catalog: Mapping[str, InstanceType], scenarios: Sequence[Scenario]) -> list[ComparisonRow]:
    """One row per scenario, cheapest first; ties keep input order.

    Each cluster is one master plus ``core_nodes`` core nodes of the same type.
    """
    if not scenarios:
        raise ValueError("at least one scenario is required")
    rows = []
    for sc in scenarios:
        inst = catalog.get(sc.instance)
        if inst is None:
            raise UnknownInstance(f"unknown instance type {sc.instance!r}")
        plan = plan_executors(inst, sc.core_nodes)
        cost = estimate_cost(sc.core_nodes + 1, inst.hourly_rate_usd, sc.runtime_minutes)
        rows.append(ComparisonRow(inst.name, sc.core_nodes, plan, cost))
    return sorted(rows, key=lambda r: r.cost.total_cost_usd)


def write_comparison(rows: Iterable[ComparisonRow], catalog: Mapping[str, InstanceType], out) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(ComparisonRow.CSV_HEADER)
    for r in rows:
        writer.writerow(
            [
                r.instance,
                r.core_nodes,
                r.plan.executor_cores,
                r.plan.executor_instances,
                r.plan.executor_memory_gib,
                r.plan.memory_overhead_gib,
                r.plan.parallel_tasks,
                r.cost.runtime_minutes,
                catalog[r.instance].hourly_rate_usd,
                r.cost.total_cost_usd,
            ]
        )


def _parse_catalog(text: str, source: str) -> dict[str, InstanceType]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != ["name", "vcpus", "ram_gib", "hourly_rate_usd"]:
        raise ValidationError(f"{source}: expected header name,vcpus,ram_gib,hourly_rate_usd")
    catalog: dict[str, InstanceType] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 4:
            raise ValidationError(f"{source}:{lineno}: expected 4 fields")
        name = row[0].strip()
        try:
            inst = InstanceType(name, int(row[1]), int(row[2]), Decimal(row[3].strip()))
        except (ValueError, ArithmeticError) as exc:
            raise ValidationError(f"{source}:{lineno}: {exc}") from None
        if name in catalog:
            raise ValidationError(f"{source}:{lineno}: duplicate instance {name!r}")
        catalog[name] = inst
    return catalog


def load_catalog(path: str | Path) -> dict[str, InstanceType]:
    return _parse_catalog(Path(path).read_text(encoding="utf-8"), str(path))


def default_catalog() -> dict[str, InstanceType]:
    text = resources.files("dnsflow").joinpath("data/instances.csv").read_text(encoding="utf-8")
    return _parse_catalog(text, "instances.csv")
