import logging
import os
from pathlib import Path

import pandas as pd
import streamlit as st

from utils.chart_utils import create_loss_chart, create_metrics_chart, create_point_cloud_chart
from utils.data import load_pgm

from database import initialize_database, get_runs, get_metrics_history

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

RUNS_DIR = os.environ.get("ONE2ONE_RUNS_DIR", "runs")

# Set page config
st.set_page_config(
    page_title="One2One Run Browser",
    page_icon="🔁",
    layout="wide"
)


@st.cache_data
def load_csv(path: str) -> pd.DataFrame:
    return pd.read_csv(path, comment="#")


def list_run_dirs(root: str):
    base = Path(root)
    if not base.is_dir():
        return []
    return sorted((p for p in base.iterdir() if (p / "losses.csv").exists()), reverse=True)


# Registry is optional; the browser falls back to scanning the runs directory
if 'db_status' not in st.session_state:
    try:
        if os.environ.get("DATABASE_URL"):
            initialize_database()
            st.session_state.db_status = 'connected'
        else:
            st.session_state.db_status = 'disabled'
    except Exception as e:
        logger.error(f"Database connection error: {str(e)}")
        st.session_state.db_status = 'error'

with st.sidebar:
    st.title("One2One Runs")
    if st.session_state.db_status == 'error':
        st.error("⚠️ Run registry unavailable. Showing runs from disk only.")

    registry_runs = []
    if st.session_state.db_status == 'connected':
        try:
            registry_runs = get_runs()
        except Exception as e:
            logger.error(f"Error loading runs: {str(e)}")
            st.error("⚠️ Unable to load runs from the registry.")

    runs_root = st.text_input("Runs directory", RUNS_DIR)
    run_dirs = list_run_dirs(runs_root)
    registry_dirs = {r["out_dir"]: r for r in registry_runs}
    choices = [str(p) for p in run_dirs] + [d for d in registry_dirs if d and d not in map(str, run_dirs)]
    selected = st.selectbox("Run", choices) if choices else None
    smooth = st.slider("Loss smoothing (iterations)", 1, 500, 50)

if not selected:
    st.info(f"No finished runs found under '{runs_root}'. Train one with `python cli.py train <config>`.")
    st.stop()

run_dir = Path(selected)
st.header(run_dir.name)
registry_entry = registry_dirs.get(selected)
if registry_entry:
    cols = st.columns(4)
    cols[0].metric("Mode", registry_entry["mode"])
    cols[1].metric("Task", registry_entry["task"])
    cols[2].metric("Status", registry_entry["status"])
    cols[3].metric("Generator params", registry_entry["generator_params"] or "-")

tabs = st.tabs(["Losses", "Metrics", "Translations", "Config"])

with tabs[0]:
    losses_path = run_dir / "losses.csv"
    if losses_path.exists():
        losses = load_csv(str(losses_path))
        if losses.empty:
            st.info("This run has no training iterations.")
        else:
            st.plotly_chart(create_loss_chart(losses, smooth=smooth), use_container_width=True)
    else:
        st.warning("No loss log in this run directory.")

with tabs[1]:
    metrics_path = run_dir / "metrics.csv"
    if metrics_path.exists():
        metrics = load_csv(str(metrics_path))
    elif registry_entry:
        metrics = pd.DataFrame(get_metrics_history(registry_entry["id"]))
    else:
        metrics = pd.DataFrame()
    if metrics.empty:
        st.info("No evaluations recorded.")
    else:
        st.plotly_chart(create_metrics_chart(metrics), use_container_width=True)
        st.dataframe(metrics)

with tabs[2]:
    point_files = sorted(run_dir.glob("translations_*.csv"))
    sample_dir = run_dir / "samples"
    if point_files:
        translations = pd.concat([load_csv(str(p)) for p in point_files], ignore_index=True)
        st.plotly_chart(create_point_cloud_chart(translations), use_container_width=True)
    elif sample_dir.is_dir():
        outputs = sorted(sample_dir.glob("*_output.pgm"))
        for output in outputs[:16]:
            stem = output.name[:-len("_output.pgm")]
            cols = st.columns(3)
            for col, label in zip(cols, ("input", "output", "target")):
                path = sample_dir / f"{stem}_{label}.pgm"
                if path.exists():
                    image = (load_pgm(path).data[0] + 1.0) / 2.0
                    col.image(image.clip(0.0, 1.0), caption=f"{stem} {label}", use_container_width=True)
    else:
        st.info("No translation dumps in this run directory.")

with tabs[3]:
    config_path = run_dir / "config.ini"
    if config_path.exists():
        st.code(config_path.read_text(encoding="utf-8"), language="ini")
    elif registry_entry:
        st.write(registry_entry)
