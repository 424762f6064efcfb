"""
Database models for run provenance
"""
from datetime import datetime

from sqlalchemy import Column, DateTime, Float, ForeignKey, Integer, String, Text
from sqlalchemy.orm import declarative_base, relationship

Base = declarative_base()


class Run(Base):
    """One CLI command invocation"""
    __tablename__ = 'runs'

    id = Column(Integer, primary_key=True)
    command = Column(String(50), nullable=False)  # train, propagate, evaluate, sweep, verify
    config = Column(Text, nullable=False)  # ExperimentConfig as JSON
    seed = Column(String(32))
    status = Column(String(20), nullable=False, default='running')  # running, finished, failed
    output_path = Column(String(1024))
    error_message = Column(Text)
    started_at = Column(DateTime, default=datetime.utcnow)
    finished_at = Column(DateTime)

    metrics = relationship('RunMetric', back_populates='run', cascade='all, delete-orphan')


class RunMetric(Base):
    """A named value recorded by a run, optionally tied to a sweep cell"""
    __tablename__ = 'run_metrics'

    id = Column(Integer, primary_key=True)
    run_id = Column(Integer, ForeignKey('runs.id'), nullable=False)
    name = Column(String(100), nullable=False)
    value = Column(Float, nullable=False)
    checkpoint = Column(String(1024))
    mode = Column(String(10))
    alpha = Column(Float)
    hops = Column(Integer)

    run = relationship('Run', back_populates='metrics')
