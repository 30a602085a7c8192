import logging
import tkinter as tk
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import canvasvg

from ..color import rank_palette
from .summary import ShapSummary

log = logging.getLogger(__name__)

# Drawing defaults
LABEL_WIDTH = 260
MARGIN = 20
ROW_HEIGHT = 18
BOX_FILL = 0.6


@dataclass(frozen=True)
class BoxShape:
    """
    Canvas coordinates of one horizontal box: whisker ends, quartile edges and median, all at row `y`.
    """
    label: str
    y: float
    half_height: float
    whisker_low: float
    q1: float
    median: float
    q3: float
    whisker_high: float
    color: str


def boxplot_layout(summary: ShapSummary, width: int = 1000) -> tuple[list[BoxShape], int]:
    """
    Places one box per top-k feature, most important on top, on a shared linear axis from 0 to the
    largest upper whisker.

    Returns:
        tuple: Boxes and the canvas height they need.
    """
    names = summary.top
    rows = [summary.row(name) for name in names]
    axis_max = max([row["whisker_high"] for row in rows] + [0.0])
    plot_width = width - LABEL_WIDTH - 2 * MARGIN
    scale = plot_width / axis_max if axis_max > 0 else 0.0

    def x(value: float) -> float:
        return LABEL_WIDTH + MARGIN + value * scale

    boxes = []
    colors = rank_palette(len(rows))
    for i, row in enumerate(rows):
        boxes.append(BoxShape(
            label=row["feature"],
            y=MARGIN + (i + 0.5) * ROW_HEIGHT,
            half_height=ROW_HEIGHT * BOX_FILL / 2,
            whisker_low=x(row["whisker_low"]),
            q1=x(row["q1"]),
            median=x(row["median"]),
            q3=x(row["q3"]),
            whisker_high=x(row["whisker_high"]),
            color=colors[i],
        ))
    return boxes, 2 * MARGIN + len(rows) * ROW_HEIGHT


def draw_boxplot(summary: ShapSummary, canvas: object, width: int = 1000) -> None:
    """
    Draws the box plot of a summary on a Tk canvas.
    """
    boxes, _ = boxplot_layout(summary, width)
    for box in boxes:
        top, bottom = box.y - box.half_height, box.y + box.half_height
        canvas.create_text(LABEL_WIDTH, box.y, text=box.label, anchor="e", font=("Helvetica", 9))
        canvas.create_line(box.whisker_low, box.y, box.q1, box.y, fill="black")
        canvas.create_line(box.q3, box.y, box.whisker_high, box.y, fill="black")
        canvas.create_line(box.whisker_low, top, box.whisker_low, bottom, fill="black")
        canvas.create_line(box.whisker_high, top, box.whisker_high, bottom, fill="black")
        canvas.create_rectangle(box.q1, top, box.q3, bottom, fill=box.color, outline="black")
        canvas.create_line(box.median, top, box.median, bottom, fill="black", width=2)


def save_boxplot_svg(summary: ShapSummary, path: Union[str, Path], width: int = 1000) -> bool:
    """
    Renders the box plot into an SVG file through an off-screen Tk canvas.

    Returns:
        bool: False if no display is available and nothing was written.
    """
    try:
        window = tk.Tk()
    except tk.TclError as err:
        log.warning("Skipping %s: no display available (%s)", path, err)
        return False
    try:
        window.withdraw()
        _, height = boxplot_layout(summary, width)
        canvas = tk.Canvas(window, width=width, height=height, background="white")
        draw_boxplot(summary, canvas, width)
        canvasvg.saveall(str(path), canvas)
    finally:
        window.destroy()
    return True
