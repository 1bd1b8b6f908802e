import os
import time
import logging
import datetime
from typing import Optional

from sqlalchemy import create_engine, Column, Integer, String, Float, DateTime, ForeignKey, Text, exc, text
from sqlalchemy.orm import declarative_base, relationship, sessionmaker, scoped_session
from sqlalchemy.pool import QueuePool

logger = logging.getLogger(__name__)

# Registry location; the CLI passes [output] registry_url when set
DATABASE_URL = os.environ.get('DATABASE_URL')

Base = declarative_base()
session_factory = sessionmaker()
Session = scoped_session(session_factory)
engine = None


class Run(Base):
    """One train invocation and where its artifacts live"""
    __tablename__ = 'runs'

    id = Column(Integer, primary_key=True)
    config_hash = Column(String(12), nullable=False, index=True)
    task = Column(String(50), nullable=False)
    mode = Column(String(10), nullable=False)  # 'one2one' or 'baseline'
    seed = Column(Integer, default=0)
    epochs = Column(Integer, default=0)
    generator_params = Column(Integer)
    out_dir = Column(Text)
    config_text = Column(Text)
    status = Column(String(20), default='running')  # 'running', 'finished', 'failed'
    message = Column(Text)
    started_at = Column(DateTime, default=datetime.datetime.now)
    finished_at = Column(DateTime)

    # Relationships
    metrics = relationship("MetricsRecord", back_populates="run", cascade="all, delete-orphan")


class MetricsRecord(Base):
    """One evaluation report of a run"""
    __tablename__ = 'metrics'

    id = Column(Integer, primary_key=True)
    run_id = Column(Integer, ForeignKey('runs.id'))
    epoch = Column(Integer, nullable=False)
    psnr_x2y = Column(Float)
    psnr_y2x = Column(Float)
    ssim_x2y = Column(Float)
    ssim_y2x = Column(Float)
    self_inverse_residual = Column(Float)
    residual_x = Column(Float)
    residual_y = Column(Float)
    injectivity_score = Column(Float)
    bias_gap_x2y = Column(Float)
    bias_gap_y2x = Column(Float)
    recorded_at = Column(DateTime, default=datetime.datetime.now)

    # Relationships
    run = relationship("Run", back_populates="metrics")


def configure_engine(url: Optional[str] = None):
    """
    Bind the session factory to a database.

    Args:
        url: SQLAlchemy URL; defaults to DATABASE_URL, then a local SQLite file

    Returns:
        The engine
    """
    global engine
    url = url or DATABASE_URL or 'sqlite:///one2one_runs.db'
    if url.startswith('sqlite'):
        engine = create_engine(url)
    else:
        # Configure engine with connection pooling
        engine = create_engine(
            url,
            poolclass=QueuePool,
            pool_size=5,
            max_overflow=10,
            pool_timeout=30,
            pool_recycle=1800,  # Recycle connections after 30 minutes
        )
    Session.remove()
    session_factory.configure(bind=engine)
    logger.info(f"Run registry bound to {engine.url.render_as_string(hide_password=True)}")
    return engine


# Create all tables in the database
def init_db():
    if engine is None:
        configure_engine()
    Base.metadata.create_all(engine)


# Get a database session with retry logic
def get_session():
    if engine is None:
        configure_engine()
    max_retries = 3
    retry_delay = 1  # seconds

    for attempt in range(max_retries):
        try:
            session = Session()
            session.execute(text("SELECT 1"))
            return session
        except exc.OperationalError as e:
            logger.warning(f"Database connection error (attempt {attempt+1}/{max_retries}): {str(e)}")
            Session.remove()

            if attempt < max_retries - 1:
                time.sleep(retry_delay)
                retry_delay *= 2
            else:
                logger.error(f"Failed to connect to database after {max_retries} attempts")
                raise
        except Exception as e:
            logger.error(f"Unexpected database error: {str(e)}")
            Session.remove()
            raise
