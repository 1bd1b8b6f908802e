from models import (
    configure_engine,
    get_session,
    init_db,
    Run,
    MetricsRecord,
    Session,
    logger
)
import datetime
import functools
import time
from typing import Any, Dict, List, Optional

from sqlalchemy import exc

METRIC_FIELDS = (
    "psnr_x2y", "psnr_y2x", "ssim_x2y", "ssim_y2x", "self_inverse_residual", "residual_x",
    "residual_y", "injectivity_score", "bias_gap_x2y", "bias_gap_y2x",
)


def safe_db_operation(max_retries=3, initial_delay=1):
    """
    Decorator for database operations with retry logic for transient errors.

    Args:
        max_retries (int): Maximum number of retry attempts
        initial_delay (int): Initial delay between retries in seconds (doubles on each retry)
    """
    def decorator(func):
        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            delay = initial_delay
            last_error = None

            for attempt in range(max_retries):
                try:
                    return func(*args, **kwargs)
                except exc.OperationalError as e:
                    last_error = e
                    logger.warning(f"Database operation error in {func.__name__} (attempt {attempt+1}/{max_retries}): {str(e)}")
                    Session.remove()

                    if attempt < max_retries - 1:
                        logger.info(f"Retrying in {delay} seconds...")
                        time.sleep(delay)
                        delay *= 2
                except Exception as e:
                    logger.error(f"Unexpected error in {func.__name__}: {str(e)}")
                    raise

            logger.error(f"All {max_retries} attempts failed in {func.__name__}")
            raise last_error

        return wrapper
    return decorator


def initialize_database(url: Optional[str] = None):
    """Bind the registry (url, DATABASE_URL or local SQLite) and create tables if they don't exist"""
    configure_engine(url)
    init_db()


def _run_dict(run: Run) -> Dict[str, Any]:
    return {
        "id": run.id,
        "config_hash": run.config_hash,
        "task": run.task,
        "mode": run.mode,
        "seed": run.seed,
        "epochs": run.epochs,
        "generator_params": run.generator_params,
        "out_dir": run.out_dir,
        "status": run.status,
        "message": run.message,
        "started_at": run.started_at,
        "finished_at": run.finished_at,
    }


@safe_db_operation()
def register_run(config_hash: str, task: str, mode: str, seed: int, epochs: int,
                 out_dir: str, config_text: str = "", generator_params: Optional[int] = None) -> int:
    """
    Record the start of a training run.

    Returns:
        The new run id
    """
    session = get_session()
    try:
        run = Run(config_hash=config_hash, task=task, mode=mode, seed=seed, epochs=epochs,
                  out_dir=out_dir, config_text=config_text, generator_params=generator_params,
                  status="running")
        session.add(run)
        session.commit()
        return run.id
    except Exception as e:
        session.rollback()
        logger.error(f"Error in register_run: {str(e)}")
        raise
    finally:
        session.close()


@safe_db_operation()
def finish_run(run_id: int, status: str = "finished", message: Optional[str] = None) -> bool:
    """Mark a run finished or failed; returns False for an unknown id"""
    session = get_session()
    try:
        run = session.query(Run).filter_by(id=run_id).first()
        if not run:
            return False
        run.status = status
        run.message = message
        run.finished_at = datetime.datetime.now()
        session.commit()
        return True
    except Exception as e:
        session.rollback()
        logger.error(f"Error in finish_run: {str(e)}")
        raise
    finally:
        session.close()


@safe_db_operation()
def record_metrics(run_id: int, reports: List[Any]) -> int:
    """
    Store evaluation reports (MetricsReport objects or dicts) for a run.

    Returns:
        Number of rows added
    """
    session = get_session()
    try:
        for report in reports:
            values = report if isinstance(report, dict) else vars(report)
            session.add(MetricsRecord(
                run_id=run_id,
                epoch=values["epoch"],
                **{name: values.get(name) for name in METRIC_FIELDS},
            ))
        session.commit()
        return len(reports)
    except Exception as e:
        session.rollback()
        logger.error(f"Error in record_metrics: {str(e)}")
        raise
    finally:
        session.close()


@safe_db_operation()
def get_runs(task: Optional[str] = None, limit: int = 100) -> List[Dict[str, Any]]:
    """Most recent runs first, optionally for one task"""
    session = get_session()
    try:
        query = session.query(Run)
        if task:
            query = query.filter_by(task=task)
        runs = query.order_by(Run.started_at.desc(), Run.id.desc()).limit(limit).all()
        return [_run_dict(run) for run in runs]
    except Exception as e:
        logger.error(f"Error in get_runs: {str(e)}")
        raise
    finally:
        session.close()


@safe_db_operation()
def get_metrics_history(run_id: int) -> List[Dict[str, Any]]:
    """Evaluation rows of one run in epoch order"""
    session = get_session()
    try:
        records = session.query(MetricsRecord).filter_by(run_id=run_id).order_by(MetricsRecord.epoch).all()
        return [{"epoch": r.epoch, **{name: getattr(r, name) for name in METRIC_FIELDS}} for r in records]
    except Exception as e:
        logger.error(f"Error in get_metrics_history: {str(e)}")
        raise
    finally:
        session.close()
