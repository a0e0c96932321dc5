"""Master-worker batch dispatch over length-prefixed JSON messages."""

from .master import BatchReport, BatchState, DispatchPolicy, local_pool_run, master_run
from .tasks import DockingTask, cross_tasks, execute_task
from .worker import worker_loop

__all__ = [
    "BatchReport",
    "BatchState",
    "DispatchPolicy",
    "DockingTask",
    "cross_tasks",
    "execute_task",
    "local_pool_run",
    "master_run",
    "worker_loop",
]
