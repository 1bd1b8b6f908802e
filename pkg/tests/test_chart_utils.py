import numpy as np
import pandas as pd

from utils.chart_utils import create_loss_chart, create_metrics_chart, create_point_cloud_chart
from utils.gan import LOSS_COLUMNS, LOSS_NAMES


def test_loss_chart_has_a_trace_per_loss():
    rows = [{"iteration": i, "epoch": 0, "lr": 2e-4, **{name: 1.0 / (i + 1) for name in LOSS_NAMES},
             "config_hash": "abc"} for i in range(20)]
    fig = create_loss_chart(pd.DataFrame(rows, columns=LOSS_COLUMNS), smooth=5)
    assert len(fig.data) == 6
    assert {trace.name for trace in fig.data} == set(LOSS_NAMES)
    # rolling mean of a decreasing series stays above the raw last value
    assert fig.data[0].y[-1] > 1.0 / 20


def test_metrics_chart_skips_empty_columns():
    metrics = pd.DataFrame({
        "epoch": [0, 5, 10],
        "self_inverse_residual": [0.8, 0.3, 0.1],
        "psnr_x2y": [10.0, 15.0, 21.0],
        "ssim_x2y": [np.nan, np.nan, np.nan],
    })
    fig = create_metrics_chart(metrics)
    assert [trace.name for trace in fig.data] == ["self_inverse_residual", "psnr_x2y"]
    assert len(create_metrics_chart(metrics[["epoch", "ssim_x2y"]]).data) == 0


def test_point_cloud_chart():
    frame = pd.DataFrame({
        "domain": ["X", "X", "Y"],
        "index": [0, 1, 0],
        "input_0": [-1.0, -2.0, 1.0], "input_1": [0.0, 1.0, 0.5],
        "output_0": [1.0, 2.0, -1.0], "output_1": [0.0, 1.0, 0.5],
    })
    fig = create_point_cloud_chart(frame)
    # segments, inputs and outputs per domain; no targets
    assert len(fig.data) == 6
    frame["target_0"], frame["target_1"] = -frame["input_0"], frame["input_1"]
    assert len(create_point_cloud_chart(frame).data) == 8
