"""Master-side task dispatch: FIFO queue, failure requeue, exactly-once
results.

All batch-state mutations happen on one event loop fed by connection events,
so state transitions are atomic per message no matter how many workers are
connected. A worker connection closing is worker death: its in-flight tasks
are requeued at the front of the queue (or recorded as permanently failed
once ``max_attempts`` is exhausted). There is no timeout-based straggler
reassignment.

A REQUEST that arrives while the queue is empty but tasks are still in
flight is parked, because any in-flight task may yet fail and need the
requester; parked lanes are answered by the requeued task or, at batch
completion, by the SHUTDOWN broadcast.
"""

from __future__ import annotations

import json
import logging
import queue
import socket
import threading
import time
from collections import deque
from dataclasses import dataclass
from typing import Callable, Sequence

from ..docking import TSV_HEADER, DockingResult
from ..errors import DispatchError, WireError
from . import wire
from .tasks import DockingTask, execute_task

__all__ = [
    "DispatchPolicy",
    "BatchState",
    "BatchReport",
    "master_run",
    "local_pool_run",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DispatchPolicy:
    max_attempts: int = 3
    startup_timeout: float = 60.0

    def __post_init__(self):
        if self.max_attempts < 1:
            raise DispatchError(f"max_attempts must be >= 1, got {self.max_attempts}")


@dataclass
class BatchReport:
    """Outcome of one batch: every task is either completed or failed."""

    task_order: tuple[str, ...]
    completed: dict[str, DockingResult]
    failed: dict[str, int]  # task_id -> attempts spent
    per_worker: dict[str, int]  # worker_id -> completed-task count
    wall_time: float

    @property
    def total(self) -> int:
        return len(self.task_order)

    def to_json_dict(self) -> dict:
        return {
            "tasks": list(self.task_order),
            "results": [
                self.completed[tid].to_dict() for tid in self.task_order if tid in self.completed
            ],
            "failed": [
                {"task_id": tid, "attempts": self.failed[tid]} for tid in sorted(self.failed)
            ],
            "per_worker": dict(sorted(self.per_worker.items())),
            "wall_time_s": self.wall_time,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)

    def results_tsv(self) -> str:
        lines = [TSV_HEADER]
        for tid in self.task_order:
            if tid in self.completed:
                lines.append(self.completed[tid].to_tsv_line())
        return "\n".join(lines) + "\n"

    def score_matrix_tsv(self, receptor_ids: Sequence[str], ligand_ids: Sequence[str]) -> str:
        """Receptors-by-ligands matrix of best scores; failed cells empty."""
        lines = ["\t".join(["receptor"] + list(ligand_ids))]
        for rid in receptor_ids:
            row = [rid]
            for lid in ligand_ids:
                result = self.completed.get(f"{rid}__{lid}")
                row.append(repr(result.best_score) if result is not None else "")
            lines.append("\t".join(row))
        return "\n".join(lines) + "\n"

    def run_record_tsv(self, instance_name: str, n_instances: int) -> str:
        """One run record in the analyzer's ingest format."""
        header = "instance\tn_instances\twall_time_s\tn_pairs"
        row = f"{instance_name}\t{n_instances}\t{self.wall_time:.3f}\t{len(self.completed)}"
        return header + "\n" + row + "\n"


class BatchState:
    """Task bookkeeping. pending, in-flight, completed and permanently
    failed are pairwise disjoint and always partition the batch."""

    def __init__(self, tasks: Sequence[DockingTask], max_attempts: int,
                 transition_hook: Callable[["BatchState"], None] | None = None):
        ids = [t.task_id for t in tasks]
        if len(set(ids)) != len(ids):
            raise DispatchError("task ids are not unique within the batch")
        self.task_order: tuple[str, ...] = tuple(ids)
        self.total = len(tasks)
        self.max_attempts = max_attempts
        self.pending: deque[DockingTask] = deque(tasks)
        self.in_flight: dict[str, tuple[DockingTask, object, str, int]] = {}
        self.completed: dict[str, DockingResult] = {}
        self.failed_attempts: dict[str, int] = {}
        self.permanently_failed: dict[str, int] = {}
        self._assign_seq = 0
        self._hook = transition_hook
        self._check()

    def _check(self) -> None:
        n = len(self.pending) + len(self.in_flight) + len(self.completed) + len(
            self.permanently_failed
        )
        if n != self.total:
            raise DispatchError(
                f"conservation violated: {len(self.pending)} pending + "
                f"{len(self.in_flight)} in flight + {len(self.completed)} completed + "
                f"{len(self.permanently_failed)} failed != {self.total}"
            )
        overlap = (
            (set(self.in_flight) & set(self.completed))
            | (set(self.in_flight) & set(self.permanently_failed))
            | (set(self.completed) & set(self.permanently_failed))
        )
        if overlap:
            raise DispatchError(f"task states overlap: {sorted(overlap)}")
        if self._hook is not None:
            self._hook(self)

    def all_terminal(self) -> bool:
        return len(self.completed) + len(self.permanently_failed) == self.total

    def assign_next(self, conn: object, worker_id: str) -> DockingTask:
        task = self.pending.popleft()
        self._assign_seq += 1
        self.in_flight[task.task_id] = (task, conn, worker_id, self._assign_seq)
        self._check()
        return task

    def record_result(self, task_id: str, result: DockingResult) -> bool:
        """True when newly recorded; duplicates and stale results are
        discarded (and logged by the caller)."""
        if task_id in self.completed or task_id not in self.in_flight:
            return False
        del self.in_flight[task_id]
        self.completed[task_id] = result
        self._check()
        return True

    def worker_lost(self, conn: object) -> tuple[list[DockingTask], list[str]]:
        """Requeue (at the front) or permanently fail every task the lost
        connection held. Returns (requeued, newly_failed_ids)."""
        held = sorted(
            (seq, task)
            for task, c, _w, seq in self.in_flight.values()
            if c is conn
        )
        requeued: list[DockingTask] = []
        newly_failed: list[str] = []
        for _seq, task in reversed(held):  # extendleft order: earliest assigned first
            del self.in_flight[task.task_id]
            attempts = self.failed_attempts.get(task.task_id, 0) + 1
            self.failed_attempts[task.task_id] = attempts
            if attempts >= self.max_attempts:
                self.permanently_failed[task.task_id] = attempts
                newly_failed.append(task.task_id)
            else:
                self.pending.appendleft(task)
                requeued.append(task)
        self._check()
        return requeued, newly_failed


class _MasterCore:
    """Transport-agnostic event loop. Events are ("msg", conn, message) and
    ("closed", conn); conns expose send(msg)."""

    def __init__(self, tasks: Sequence[DockingTask], policy: DispatchPolicy,
                 transition_hook=None):
        if not tasks:
            raise DispatchError("task list is empty")
        self.state = BatchState(tasks, policy.max_attempts, transition_hook)
        self.policy = policy
        self.events: queue.Queue = queue.Queue()
        self.workers: dict[object, str] = {}  # conn -> worker_id
        self.per_worker: dict[str, int] = {}
        self.parked: deque[tuple[object, str]] = deque()
        self.dead: set[object] = set()
        self._idle_since = time.monotonic()

    def _send(self, conn: object, msg) -> bool:
        try:
            conn.send(msg)
            return True
        except OSError:
            if conn not in self.dead:
                self.events.put(("closed", conn, None))
            return False

    def _register(self, conn: object, worker_id: str) -> None:
        self.workers[conn] = worker_id
        self.per_worker.setdefault(worker_id, 0)

    def _serve_parked(self) -> None:
        while self.parked and self.state.pending:
            conn, worker_id = self.parked.popleft()
            if conn in self.dead:
                continue
            task = self.state.assign_next(conn, worker_id)
            if not self._send(conn, wire.Assign(task)):
                # send failure turns into a closed event; task requeues there
                pass

    def _handle_request(self, conn: object, worker_id: str) -> None:
        if self.state.pending:
            task = self.state.assign_next(conn, worker_id)
            self._send(conn, wire.Assign(task))
        elif self.state.all_terminal():
            self._send(conn, wire.NoMoreTasks())
        else:
            self.parked.append((conn, worker_id))

    def _handle_closed(self, conn: object) -> None:
        if conn in self.dead:
            return
        self.dead.add(conn)
        self.parked = deque(p for p in self.parked if p[0] is not conn)
        requeued, newly_failed = self.state.worker_lost(conn)
        if requeued:
            log.info("worker %s lost; requeued %d task(s)", self.workers.get(conn), len(requeued))
        for tid in newly_failed:
            log.warning("task %s permanently failed after %d attempts",
                        tid, self.state.permanently_failed[tid])
        self.workers.pop(conn, None)
        if not self.workers:
            self._idle_since = time.monotonic()
        self._serve_parked()

    def run(self) -> BatchReport:
        t_start = time.monotonic()
        self._idle_since = t_start
        while not self.state.all_terminal():
            timeout = None
            if not self.workers and not self.state.in_flight:
                # No live workers: bounded wait for the first (or a
                # replacement) connection instead of hanging forever.
                remaining = self.policy.startup_timeout - (time.monotonic() - self._idle_since)
                if remaining <= 0:
                    raise DispatchError(
                        f"no worker connected within {self.policy.startup_timeout} s"
                    )
                timeout = remaining
            try:
                kind, conn, msg = self.events.get(timeout=timeout)
            except queue.Empty:
                raise DispatchError(
                    f"no worker connected within {self.policy.startup_timeout} s"
                ) from None

            if kind == "closed":
                self._handle_closed(conn)
                continue
            if conn in self.dead:
                continue
            if isinstance(msg, wire.Hello):
                self._register(conn, msg.worker_id)
            elif isinstance(msg, wire.Request):
                if conn not in self.workers:
                    self._register(conn, msg.worker_id)
                self._handle_request(conn, msg.worker_id)
            elif isinstance(msg, wire.Result):
                if self.state.record_result(msg.task_id, msg.result):
                    worker_id = self.workers.get(conn, "unknown")
                    self.per_worker[worker_id] = self.per_worker.get(worker_id, 0) + 1
                else:
                    log.info("discarding duplicate/stale result for %s", msg.task_id)
            else:
                log.warning("ignoring unexpected message %r", msg)

        for conn in list(self.workers):
            self._send(conn, wire.Shutdown())
        return BatchReport(
            task_order=self.state.task_order,
            completed=dict(self.state.completed),
            failed=dict(self.state.permanently_failed),
            per_worker=dict(self.per_worker),
            wall_time=time.monotonic() - t_start,
        )


class _TcpConn:
    """One accepted worker connection; sends are serialized by a lock."""

    def __init__(self, sock: socket.socket, peer: str):
        self.sock = sock
        self.peer = peer
        self._lock = threading.Lock()

    def send(self, msg) -> None:
        with self._lock:
            wire.send_message(self.sock, msg)

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


def _reader(conn: _TcpConn, events: queue.Queue) -> None:
    try:
        while True:
            msg = wire.recv_message(conn.sock)
            if msg is None:
                break
            events.put(("msg", conn, msg))
    except (OSError, WireError):
        pass
    events.put(("closed", conn, None))


def master_run(
    tasks: Sequence[DockingTask],
    listen: tuple[str, int],
    policy: DispatchPolicy | None = None,
    transition_hook=None,
) -> BatchReport:
    """Serve a batch to TCP workers; returns when every task is terminal.

    Raises DispatchError when the endpoint cannot be bound or no worker
    connects within ``policy.startup_timeout``.
    """
    policy = policy or DispatchPolicy()
    core = _MasterCore(tasks, policy, transition_hook)
    try:
        server = socket.create_server(listen)
    except OSError as exc:
        raise DispatchError(f"cannot bind {listen[0]}:{listen[1]}: {exc}") from exc

    conns: list[_TcpConn] = []
    accepting = threading.Event()
    accepting.set()
    server.settimeout(0.25)  # lets the acceptor notice shutdown promptly

    def acceptor() -> None:
        while accepting.is_set():
            try:
                sock, addr = server.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            conn = _TcpConn(sock, f"{addr[0]}:{addr[1]}")
            conns.append(conn)
            threading.Thread(target=_reader, args=(conn, core.events), daemon=True).start()

    accept_thread = threading.Thread(target=acceptor, daemon=True)
    accept_thread.start()
    try:
        report = core.run()
    finally:
        accepting.clear()
        server.close()
        accept_thread.join(timeout=5)
        for conn in conns:
            conn.close()
    return report


class _LocalConn:
    """In-memory stand-in for a worker connection."""

    def __init__(self, name: str):
        self.name = name
        self.inbox: queue.Queue = queue.Queue()

    def send(self, msg) -> None:
        self.inbox.put(msg)

    def close(self) -> None:
        self.inbox.put(wire.Shutdown())


def _local_lane(
    core: _MasterCore,
    conn: _LocalConn,
    worker_id: str,
    executor: Callable[[DockingTask], DockingResult],
    respawn: Callable[[str], None],
) -> None:
    events = core.events
    events.put(("msg", conn, wire.Hello(worker_id, 1)))
    while True:
        events.put(("msg", conn, wire.Request(worker_id)))
        msg = conn.inbox.get()
        if isinstance(msg, wire.Assign):
            try:
                result = executor(msg.task)
            except Exception:
                log.exception("task %s raised; lane %s dies and respawns",
                              msg.task.task_id, worker_id)
                events.put(("closed", conn, None))
                respawn(worker_id)
                return
            events.put(("msg", conn, wire.Result(msg.task.task_id, result)))
        elif isinstance(msg, (wire.NoMoreTasks, wire.Shutdown)):
            events.put(("closed", conn, None))
            return


def local_pool_run(
    tasks: Sequence[DockingTask],
    workers: int,
    policy: DispatchPolicy | None = None,
    executor: Callable[[DockingTask], DockingResult] = execute_task,
    transition_hook=None,
) -> BatchReport:
    """master_run plus ``workers`` single-slot workers over an in-memory
    channel, all inside this process.

    Unlike master_run, an empty task list is accepted and yields an empty
    report. A lane whose executor raises is treated as a lost worker (its
    task requeues) and is respawned so the pool keeps its size.
    """
    if workers < 1:
        raise DispatchError(f"workers must be >= 1, got {workers}")
    policy = policy or DispatchPolicy()
    if not tasks:
        return BatchReport(task_order=(), completed={}, failed={}, per_worker={},
                           wall_time=0.0)

    core = _MasterCore(tasks, policy, transition_hook)
    registry_lock = threading.Lock()
    registry: list[_LocalConn] = []
    threads: list[threading.Thread] = []
    finished = threading.Event()

    def spawn(worker_id: str) -> None:
        with registry_lock:
            if finished.is_set():
                return
            conn = _LocalConn(worker_id)
            registry.append(conn)
            thread = threading.Thread(
                target=_local_lane, args=(core, conn, worker_id, executor, spawn),
                daemon=True,
            )
            threads.append(thread)
        thread.start()

    for i in range(workers):
        spawn(f"local-{i}")
    try:
        report = core.run()
    finally:
        with registry_lock:
            finished.set()
            for conn in registry:
                conn.close()
    for thread in threads:
        thread.join(timeout=10)
    return report
