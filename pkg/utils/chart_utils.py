import plotly.graph_objects as go
from plotly.subplots import make_subplots
import pandas as pd
import numpy as np
from typing import List, Optional

LOSS_GROUPS = {
    "Generator (adversarial)": ["loss_x2y_adv", "loss_y2x_adv"],
    "Generator (cycle)": ["loss_x2y_cyc", "loss_y2x_cyc"],
    "Discriminators": ["loss_dx", "loss_dy"],
}


def create_loss_chart(losses: pd.DataFrame, title: str = "Training Losses", smooth: int = 1) -> go.Figure:
    """
    Create a three-row chart of per-iteration losses.

    Args:
        losses: Loss log with the columns written by training (iteration, loss_*)
        title: Chart title
        smooth: Rolling-mean window in iterations (1 = raw)

    Returns:
        Plotly Figure object
    """
    fig = make_subplots(
        rows=3,
        cols=1,
        shared_xaxes=True,
        vertical_spacing=0.05,
        subplot_titles=list(LOSS_GROUPS),
    )

    for row, columns in enumerate(LOSS_GROUPS.values(), start=1):
        for column in columns:
            if column not in losses:
                continue
            values = losses[column].rolling(max(1, smooth), min_periods=1).mean()
            fig.add_trace(
                go.Scatter(x=losses["iteration"], y=values, mode="lines", name=column),
                row=row, col=1
            )

    fig.update_layout(
        title=title,
        height=800,
        template="plotly_white",
        hovermode="x unified",
        legend=dict(orientation="h", yanchor="bottom", y=1.02, xanchor="right", x=1)
    )
    fig.update_xaxes(title_text="Iteration", row=3, col=1)
    return fig


def create_metrics_chart(metrics: pd.DataFrame, columns: Optional[List[str]] = None,
                         title: str = "Evaluation Metrics") -> go.Figure:
    """
    Plot metric columns against epoch, one subplot per metric.

    Columns that are entirely empty (e.g. SSIM on point tasks) are skipped.
    """
    if columns is None:
        columns = ["self_inverse_residual", "bias_gap_x2y", "bias_gap_y2x", "psnr_x2y", "psnr_y2x",
                   "ssim_x2y", "ssim_y2x", "injectivity_score"]
    columns = [c for c in columns if c in metrics and metrics[c].notna().any()]

    fig = make_subplots(rows=max(1, len(columns)), cols=1, shared_xaxes=True,
                        vertical_spacing=0.04, subplot_titles=columns or ["No metrics"])
    for row, column in enumerate(columns, start=1):
        fig.add_trace(
            go.Scatter(x=metrics["epoch"], y=metrics[column], mode="lines+markers", name=column),
            row=row, col=1
        )

    fig.update_layout(
        title=title,
        height=max(300, 220 * len(columns)),
        template="plotly_white",
        showlegend=False
    )
    fig.update_xaxes(title_text="Epoch", row=max(1, len(columns)), col=1)
    return fig


def create_point_cloud_chart(translations: pd.DataFrame, title: str = "Translations") -> go.Figure:
    """
    Scatter held-out inputs, their translations and (when known) the
    true targets for 2-D point tasks, with a faint line from each input
    to its output.

    Args:
        translations: Rows with domain, input_0/1, output_0/1 and optional target_0/1 columns
        title: Chart title

    Returns:
        Plotly Figure object
    """
    fig = go.Figure()
    colors = {"X": "#1f77b4", "Y": "#d62728"}

    for domain, rows in translations.groupby("domain"):
        color = colors.get(domain, "#7f7f7f")
        # Segments input -> output, separated by None gaps
        xs = np.column_stack([rows["input_0"], rows["output_0"], np.full(len(rows), np.nan)]).ravel()
        ys = np.column_stack([rows["input_1"], rows["output_1"], np.full(len(rows), np.nan)]).ravel()
        fig.add_trace(go.Scatter(x=xs, y=ys, mode="lines", line=dict(color=color, width=0.5),
                                 opacity=0.3, showlegend=False, hoverinfo="skip"))
        fig.add_trace(go.Scatter(x=rows["input_0"], y=rows["input_1"], mode="markers",
                                 marker=dict(color=color, size=6), name=f"{domain} input"))
        fig.add_trace(go.Scatter(x=rows["output_0"], y=rows["output_1"], mode="markers",
                                 marker=dict(color=color, size=6, symbol="x"), name=f"G({domain.lower()})"))
        if "target_0" in rows and rows["target_0"].notna().any():
            fig.add_trace(go.Scatter(x=rows["target_0"], y=rows["target_1"], mode="markers",
                                     marker=dict(color=color, size=8, symbol="circle-open"),
                                     name=f"{domain} target"))

    fig.update_layout(
        title=title,
        height=600,
        template="plotly_white",
        xaxis_title="u",
        yaxis_title="v",
        yaxis=dict(scaleanchor="x", scaleratio=1)
    )
    return fig
