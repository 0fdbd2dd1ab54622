"""SQLAlchemy ORM models for the run ledger."""

import uuid
from datetime import datetime, timezone

from sqlalchemy import Column, DateTime, ForeignKey, Integer, String, Text
from sqlalchemy.orm import relationship

from schro_ldp.database import Base


def _uuid() -> str:
    return str(uuid.uuid4())


def _utcnow() -> datetime:
    return datetime.now(timezone.utc)


class Run(Base):
    __tablename__ = "runs"

    id = Column(String, primary_key=True, default=_uuid)
    command = Column(String, nullable=False)
    version = Column(String, nullable=False)
    seed = Column(String(20), nullable=True)  # u64 does not fit a signed SQLite integer
    config_hash = Column(String(64), nullable=False, index=True)
    status = Column(String, nullable=False, default="running")  # running / ok / failed
    exit_code = Column(Integer, nullable=True)
    created_at = Column(DateTime, default=_utcnow)

    events = relationship("RunEvent", back_populates="run", cascade="all, delete-orphan")


class RunEvent(Base):
    __tablename__ = "run_events"

    id = Column(String, primary_key=True, default=_uuid)
    run_id = Column(String, ForeignKey("runs.id"), nullable=False)
    ts = Column(DateTime, default=_utcnow)
    type = Column(String, nullable=False)  # STAGE / RESULT / ERROR
    payload_json = Column(Text, nullable=False, default="{}")

    run = relationship("Run", back_populates="events")
