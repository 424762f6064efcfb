"""
Recording commands and their metrics
"""
from contextlib import contextmanager
from datetime import datetime
from typing import Generator, List, Optional

import structlog

from .connection import get_db_session, init_db
from .models import Run, RunMetric

logger = structlog.get_logger(__name__)


class RunRecorder:
    """Collects metrics of a running command; written when the run closes

    A disabled recorder accepts metrics and drops them.
    """

    def __init__(self, command: str, enabled: bool = True):
        self.command = command
        self.enabled = enabled
        self.run_id: Optional[int] = None
        self.output_path: Optional[str] = None
        self.metrics: List[RunMetric] = []

    def metric(self, name: str, value: float, checkpoint: Optional[str] = None,
               mode: Optional[str] = None, alpha: Optional[float] = None,
               hops: Optional[int] = None) -> None:
        self.metrics.append(RunMetric(name=name, value=float(value), checkpoint=checkpoint,
                                      mode=mode, alpha=alpha, hops=hops))


@contextmanager
def track_run(command: str, config_json: str, seed: Optional[int] = None,
              enabled: bool = True) -> Generator[RunRecorder, None, None]:
    """Open a Run row, yield a recorder and close the run with its status"""
    recorder = RunRecorder(command, enabled)
    if enabled:
        init_db()
        with get_db_session() as db:
            run = Run(command=command, config=config_json,
                      seed=None if seed is None else str(seed), status='running')
            db.add(run)
            db.flush()
            recorder.run_id = run.id
    try:
        yield recorder
    except Exception as e:
        _close(recorder, 'failed', str(e))
        raise
    _close(recorder, 'finished')


def _close(recorder: RunRecorder, status: str, error: Optional[str] = None) -> None:
    if not recorder.enabled:
        return
    with get_db_session() as db:
        run = db.get(Run, recorder.run_id)
        run.status = status
        run.error_message = error
        run.output_path = recorder.output_path
        run.finished_at = datetime.utcnow()
        for metric in recorder.metrics:
            metric.run_id = run.id
            db.add(metric)
    logger.debug("Run recorded", run_id=recorder.run_id, status=status,
                 metrics=len(recorder.metrics))
