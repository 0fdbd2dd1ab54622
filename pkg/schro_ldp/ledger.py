"""Recording CLI runs and their stages in the run ledger."""

from __future__ import annotations

import json
import logging
from contextlib import contextmanager
from typing import Iterator

from sqlalchemy.orm import Session as DBSession

from schro_ldp import __version__
from schro_ldp.database import make_session_factory
from schro_ldp.models import Run, RunEvent

logger = logging.getLogger(__name__)


class RunHandle:
    """Open ledger run; `event` appends a typed JSON payload."""

    def __init__(self, db: DBSession | None, run: Run | None):
        self._db = db
        self.run = run

    @property
    def enabled(self) -> bool:
        return self._db is not None

    def event(self, type_: str, payload: dict) -> None:
        if self._db is None:
            return
        self._db.add(RunEvent(run_id=self.run.id, type=type_, payload_json=json.dumps(payload, default=str)))
        self._db.commit()


@contextmanager
def record_run(url: str | None, command: str, seed: int | None, config_hash: str) -> Iterator[RunHandle]:
    """Open a ledger run for the block; a disabled ledger (url None) records nothing.

    The run is marked `ok` when the block exits normally and `failed` with the
    exception's exit code otherwise; the exception propagates.
    """
    if not url:
        yield RunHandle(None, None)
        return

    db = make_session_factory(url)()
    run = Run(command=command, version=__version__, seed=None if seed is None else str(seed), config_hash=config_hash)
    db.add(run)
    db.commit()
    db.refresh(run)
    handle = RunHandle(db, run)
    try:
        yield handle
    except BaseException as exc:
        run.status = "failed"
        run.exit_code = getattr(exc, "exit_code", 2)
        db.add(RunEvent(run_id=run.id, type="ERROR", payload_json=json.dumps({"message": str(exc)})))
        db.commit()
        raise
    else:
        run.status = "ok"
        run.exit_code = 0
        db.commit()
    finally:
        logger.debug("ledger run %s finished with status %s", run.id, run.status)
        db.close()


def list_runs(url: str, config_hash: str | None = None, command: str | None = None) -> list[dict]:
    """Return recorded runs, newest first, optionally filtered by config hash or command."""
    db = make_session_factory(url)()
    try:
        query = db.query(Run)
        if config_hash is not None:
            query = query.filter_by(config_hash=config_hash)
        if command is not None:
            query = query.filter_by(command=command)
        return [
            {
                "id": r.id,
                "command": r.command,
                "version": r.version,
                "seed": r.seed,
                "config_hash": r.config_hash,
                "status": r.status,
                "exit_code": r.exit_code,
                "events": [{"type": e.type, "payload": json.loads(e.payload_json)} for e in r.events],
            }
            for r in query.order_by(Run.created_at.desc()).all()
        ]
    finally:
        db.close()
