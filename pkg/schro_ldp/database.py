"""Run-ledger engine and session setup via SQLAlchemy."""

from __future__ import annotations

import os

from sqlalchemy import create_engine
from sqlalchemy.orm import declarative_base, sessionmaker

Base = declarative_base()


def make_session_factory(url: str) -> sessionmaker:
    """Create the engine for a ledger URL, create all tables, return a session factory."""
    if url.startswith("sqlite:///") and url != "sqlite:///:memory:":
        db_dir = os.path.dirname(url[len("sqlite:///"):])
        if db_dir and not os.path.exists(db_dir):
            os.makedirs(db_dir, exist_ok=True)
    connect_args = {"check_same_thread": False} if url.startswith("sqlite") else {}
    engine = create_engine(url, connect_args=connect_args, echo=False)
    # tables are registered on Base by importing the models module
    from schro_ldp import models  # noqa: F401

    Base.metadata.create_all(bind=engine)
    return sessionmaker(autocommit=False, autoflush=False, bind=engine)
