"""In-process task-graph scheduler with a bounded worker pool and an execution trace."""

from __future__ import annotations

import json
import time
from collections import deque
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import asdict, dataclass, field
from typing import Any, Callable

from .errors import CycleDetected

STAGES = ("acquisition", "build", "extraction", "decompilation", "mapping", "export")


@dataclass
class Task:
    task_id: str
    stage: str
    fn: Callable[[dict[str, Any]], Any]
    deps: tuple[str, ...] = ()
    # maps a result to (items, errors) for metrics; default counts the task itself
    count: Callable[[Any], tuple[int, int]] | None = None


class TaskGraph:
    def __init__(self):
        self.tasks: dict[str, Task] = {}

    def add(self, task_id: str, stage: str, fn, deps=(), count=None) -> Task:
        if task_id in self.tasks:
            raise ValueError(f"duplicate task id {task_id!r}")
        task = Task(task_id, stage, fn, tuple(deps), count)
        self.tasks[task_id] = task
        return task

    def topological_order(self) -> list[str]:
        indegree = {tid: 0 for tid in self.tasks}
        children: dict[str, list[str]] = {tid: [] for tid in self.tasks}
        for tid, task in self.tasks.items():
            for dep in task.deps:
                if dep not in self.tasks:
                    raise KeyError(f"{tid} depends on unknown task {dep!r}")
                indegree[tid] += 1
                children[dep].append(tid)
        queue = deque(tid for tid, d in indegree.items() if d == 0)
        order = []
        while queue:
            tid = queue.popleft()
            order.append(tid)
            for child in children[tid]:
                indegree[child] -= 1
                if indegree[child] == 0:
                    queue.append(child)
        if len(order) != len(self.tasks):
            raise CycleDetected(sorted(t for t, d in indegree.items() if d > 0))
        return order


@dataclass
class TraceEntry:
    task_id: str
    stage: str
    start_ns: int
    end_ns: int
    status: str  # "ok" | "error" | "skipped"
    items: int = 0
    errors: int = 0
    error: str | None = None


@dataclass
class ExecutionTrace:
    entries: list[TraceEntry] = field(default_factory=list)
    results: dict[str, Any] = field(default_factory=dict)
    exceptions: dict[str, BaseException] = field(default_factory=dict)

    def entry(self, task_id: str) -> TraceEntry:
        return next(e for e in self.entries if e.task_id == task_id)

    def extend(self, other: "ExecutionTrace") -> None:
        self.entries.extend(other.entries)
        self.results.update(other.results)
        self.exceptions.update(other.exceptions)

    def dump_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for e in self.entries:
                fh.write(json.dumps({"task_id": e.task_id, "stage": e.stage, "start_ns": e.start_ns,
                                     "end_ns": e.end_ns, "status": e.status}) + "\n")


def run_task(task: Task, inputs: dict[str, Any]) -> tuple[TraceEntry, Any, BaseException | None]:
    """Execute one task body and time it; exceptions are captured, not raised."""
    start = time.monotonic_ns()
    try:
        result = task.fn(inputs)
    except Exception as exc:  # noqa: BLE001 - recorded in the trace
        end = time.monotonic_ns()
        return TraceEntry(task.task_id, task.stage, start, end, "error", 0, 1,
                          f"{type(exc).__name__}: {exc}"), None, exc
    end = time.monotonic_ns()
    items, errors = task.count(result) if task.count else (1, 0)
    return TraceEntry(task.task_id, task.stage, start, end, "ok", items, errors), result, None


def schedule(graph: TaskGraph, workers: int) -> ExecutionTrace:
    """Run every task once, after its dependencies, with at most ``workers`` in flight.

    Tasks become ready in graph insertion order. A failed task's dependents are
    recorded as skipped.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    order = graph.topological_order()
    position = {tid: i for i, tid in enumerate(graph.tasks)}
    waiting = {tid: set(graph.tasks[tid].deps) for tid in order}
    dependents: dict[str, list[str]] = {tid: [] for tid in graph.tasks}
    for tid, task in graph.tasks.items():
        for dep in task.deps:
            dependents[dep].append(tid)

    trace = ExecutionTrace()
    ready = sorted((tid for tid, deps in waiting.items() if not deps), key=position.get)
    finished: set[str] = set()

    def settle(tid: str, failed: bool) -> None:
        finished.add(tid)
        newly = []
        for child in dependents[tid]:
            if child in finished:
                continue
            if failed:
                now = time.monotonic_ns()
                trace.entries.append(TraceEntry(child, graph.tasks[child].stage, now, now,
                                                "skipped", error=f"dependency {tid} failed"))
                settle(child, True)
                continue
            waiting[child].discard(tid)
            if not waiting[child]:
                newly.append(child)
        ready.extend(newly)
        ready.sort(key=position.get)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        in_flight = {}
        while ready or in_flight:
            while ready and len(in_flight) < workers:
                tid = ready.pop(0)
                if tid in finished:
                    continue
                task = graph.tasks[tid]
                inputs = {dep: trace.results.get(dep) for dep in task.deps}
                in_flight[pool.submit(run_task, task, inputs)] = tid
            done, _ = wait(in_flight, return_when=FIRST_COMPLETED)
            for fut in sorted(done, key=lambda f: position[in_flight[f]]):
                tid = in_flight.pop(fut)
                entry, result, exc = fut.result()
                trace.entries.append(entry)
                if exc is None:
                    trace.results[tid] = result
                else:
                    trace.exceptions[tid] = exc
                settle(tid, exc is not None)
    return trace


def max_concurrency(entries) -> int:
    """Peak number of overlapping [start, end) intervals among executed entries."""
    events = []
    for e in entries:
        if e.status == "skipped":
            continue
        events.append((e.start_ns, 1))
        events.append((e.end_ns, -1))
    events.sort(key=lambda ev: (ev[0], ev[1]))
    peak = cur = 0
    for _, delta in events:
        cur += delta
        peak = max(peak, cur)
    return peak


@dataclass
class StageStat:
    wall_seconds: float = 0.0
    item_count: int = 0
    error_count: int = 0


@dataclass
class StageMetrics:
    stages: dict[str, StageStat]
    overall: StageStat
    # time inside the overall window during which no task was running
    idle_seconds: float = 0.0

    def __getitem__(self, stage: str) -> StageStat:
        return self.overall if stage == "overall" else self.stages[stage]

    def to_dict(self) -> dict:
        out = {name: asdict(stat) for name, stat in self.stages.items()}
        out["overall"] = asdict(self.overall)
        out["idle_seconds"] = self.idle_seconds
        return out


def _wall(entries) -> float:
    if not entries:
        return 0.0
    return max(0, max(e.end_ns for e in entries) - min(e.start_ns for e in entries)) / 1e9


def idle_time(entries) -> float:
    """Gaps between busy intervals, in seconds."""
    spans = sorted((e.start_ns, e.end_ns) for e in entries)
    gaps = 0
    reach = None
    for start, end in spans:
        if reach is not None and start > reach:
            gaps += start - reach
        reach = end if reach is None else max(reach, end)
    return gaps / 1e9


def collect_metrics(trace: ExecutionTrace | list[TraceEntry]) -> StageMetrics:
    """Per stage: wall time is max(end) - min(start) over its tasks, not the sum."""
    entries = trace.entries if isinstance(trace, ExecutionTrace) else list(trace)
    entries = [e for e in entries if e.status != "skipped"]
    names = list(STAGES) + sorted({e.stage for e in entries} - set(STAGES))
    stages = {}
    for name in names:
        own = [e for e in entries if e.stage == name]
        stages[name] = StageStat(_wall(own), sum(e.items for e in own), sum(e.errors for e in own))
    overall = StageStat(_wall(entries), sum(s.item_count for s in stages.values()),
                        sum(s.error_count for s in stages.values()))
    return StageMetrics(stages, overall, idle_time(entries))
