"""
Database connection management for run provenance
"""
import os
from contextlib import contextmanager
from typing import Generator, Optional

from sqlalchemy import create_engine
from sqlalchemy.engine import Engine
from sqlalchemy.orm import Session, sessionmaker

from .models import Base

DEFAULT_DATABASE_URL = 'sqlite:///kgrep_runs.db'

_engine: Optional[Engine] = None
_session_factory: Optional[sessionmaker] = None


def database_url() -> str:
    return os.getenv('KGREP_DATABASE_URL', DEFAULT_DATABASE_URL)


def get_engine(url: Optional[str] = None) -> Engine:
    """Engine for url (or KGREP_DATABASE_URL); recreated when the url changes"""
    global _engine, _session_factory
    url = url or database_url()
    if _engine is None or _engine.url.render_as_string(hide_password=False) != url:
        if _engine is not None:
            _engine.dispose()
        _engine = create_engine(url)
        _session_factory = sessionmaker(autocommit=False, autoflush=False, bind=_engine)
    return _engine


def init_db(url: Optional[str] = None) -> Engine:
    """Initialize the database, creating all tables"""
    engine = get_engine(url)
    Base.metadata.create_all(bind=engine)
    return engine


@contextmanager
def get_db_session() -> Generator[Session, None, None]:
    """Session that commits on success and rolls back on error"""
    get_engine()
    db = _session_factory()
    try:
        yield db
        db.commit()
    except Exception:
        db.rollback()
        raise
    finally:
        db.close()
