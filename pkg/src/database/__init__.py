"""
Database package for run provenance
"""
from .connection import DEFAULT_DATABASE_URL, database_url, get_db_session, get_engine, init_db
from .models import Base, Run, RunMetric
from .runs import RunRecorder, track_run

__all__ = [
    'Base',
    'DEFAULT_DATABASE_URL',
    'Run',
    'RunMetric',
    'RunRecorder',
    'database_url',
    'get_db_session',
    'get_engine',
    'init_db',
    'track_run',
]
