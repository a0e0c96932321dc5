"""Worker process: connect to the master and run concurrent task lanes.

One connection per worker carries ``slots`` lanes. Each lane loops
REQUEST -> ASSIGN -> dock -> RESULT; ASSIGN/NO_MORE_TASKS replies are
interchangeable between lanes, so a single reader thread feeds them into a
shared response queue. SHUTDOWN (or EOF) stops every lane.
"""

from __future__ import annotations

import logging
import os
import queue
import socket
import threading
import time

from ..errors import DispatchError, WireError
from . import wire
from .tasks import execute_task

__all__ = ["worker_loop"]

log = logging.getLogger(__name__)

_STOP = object()


def _connect_with_backoff(
    connect: tuple[str, int],
    backoff_initial: float,
    backoff_cap: float,
    max_retries: int,
) -> socket.socket:
    delay = backoff_initial
    for attempt in range(max_retries + 1):
        try:
            return socket.create_connection(connect)
        except OSError as exc:
            if attempt == max_retries:
                raise DispatchError(
                    f"cannot reach master at {connect[0]}:{connect[1]} "
                    f"after {max_retries + 1} attempts: {exc}"
                ) from exc
            log.info("connect to %s:%s failed (%s); retrying in %.1f s",
                     connect[0], connect[1], exc, delay)
            time.sleep(delay)
            delay = min(delay * 2, backoff_cap)
    raise AssertionError("unreachable")


def worker_loop(
    connect: tuple[str, int],
    slots: int = 4,
    executor=execute_task,
    worker_id: str | None = None,
    backoff_initial: float = 1.0,
    backoff_cap: float = 30.0,
    max_retries: int = 6,
) -> int:
    """Serve tasks from the master at ``connect`` until the batch drains.

    Returns the number of tasks this worker completed. Raises DispatchError
    when the master stays unreachable after the retry budget (1 s backoff
    doubling to the 30 s cap by default).
    """
    if slots < 1:
        raise DispatchError(f"slots must be >= 1, got {slots}")
    worker_id = worker_id or f"{socket.gethostname()}-{os.getpid()}"
    sock = _connect_with_backoff(connect, backoff_initial, backoff_cap, max_retries)

    send_lock = threading.Lock()
    responses: queue.Queue = queue.Queue()
    stop = threading.Event()
    done_count = threading.Semaphore(0)

    def send(msg) -> bool:
        try:
            with send_lock:
                wire.send_message(sock, msg)
            return True
        except OSError:
            stop.set()
            return False

    def reader() -> None:
        try:
            while True:
                msg = wire.recv_message(sock)
                if msg is None or isinstance(msg, wire.Shutdown):
                    break
                responses.put(msg)
        except (OSError, WireError):
            pass
        stop.set()
        for _ in range(slots):
            responses.put(_STOP)

    task_failed = threading.Event()

    def abort() -> None:
        # Dropping the connection is the only failure signal in the wire
        # vocabulary; the master requeues whatever this worker held.
        stop.set()
        try:
            sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass

    def lane(index: int) -> None:
        while not stop.is_set():
            if not send(wire.Request(worker_id)):
                return
            msg = responses.get()
            if msg is _STOP or isinstance(msg, wire.NoMoreTasks):
                return
            if not isinstance(msg, wire.Assign):
                log.warning("lane %d ignoring unexpected %r", index, msg)
                continue
            log.info("lane %d docking %s", index, msg.task.task_id)
            try:
                result = executor(msg.task)
            except Exception:
                log.exception("task %s failed; dropping the connection",
                              msg.task.task_id)
                task_failed.set()
                abort()
                return
            done_count.release()
            if not send(wire.Result(msg.task.task_id, result)):
                return

    if not send(wire.Hello(worker_id, slots)):
        sock.close()
        raise DispatchError("master connection lost during handshake")
    reader_thread = threading.Thread(target=reader, daemon=True)
    reader_thread.start()
    lanes = [threading.Thread(target=lane, args=(i,), daemon=True) for i in range(slots)]
    for t in lanes:
        t.start()
    try:
        for t in lanes:
            t.join()
    finally:
        stop.set()
        try:
            sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        sock.close()
        reader_thread.join(timeout=5)

    completed = 0
    while done_count.acquire(blocking=False):
        completed += 1
    if task_failed.is_set():
        raise DispatchError(
            f"worker {worker_id} aborted on a failing task "
            f"({completed} task(s) completed first)"
        )
    log.info("worker %s done: %d task(s) completed", worker_id, completed)
    return completed
