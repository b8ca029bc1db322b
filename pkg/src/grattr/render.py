"""Deterministic SVG rendering: attribution maps on force-directed graph
layouts, and similarity heatmaps.

Scores are colored on a symmetric diverging scale centered at zero, green
for negative through white to magenta for positive, with the scale maximum
at max|score|. Layouts are seeded by a hash of the graph itself so the same
graph always renders identically.
"""

from __future__ import annotations

import hashlib
from xml.sax.saxutils import escape

import numpy as np

from .attribution import AttributionMap
from .graphs import Graph
from .metrics import SimilarityMatrix

GREEN = (44, 160, 44)      # negative extreme
MAGENTA = (214, 44, 160)   # positive extreme
WHITE = (255, 255, 255)

_BOND_STYLE = {
    "single": 'stroke-width="1.5"',
    "double": 'stroke-width="3.5"',
    "triple": 'stroke-width="5.5"',
    "aromatic": 'stroke-width="1.5" stroke-dasharray="5,3"',
}


def diverging_color(t: float) -> str:
    """Hex color for t in [-1, 1]: green below zero, white at zero, magenta above."""
    t = float(np.clip(t, -1.0, 1.0))
    anchor = MAGENTA if t >= 0 else GREEN
    frac = abs(t)
    rgb = tuple(round(w + (a - w) * frac) for w, a in zip(WHITE, anchor))
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def _layout_seed(graph: Graph) -> int:
    key = repr((graph.node_labels, graph.edges)).encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "big")


def layout_positions(graph: Graph, iterations: int = 150) -> np.ndarray:
    """Force-directed node positions in the unit square, deterministic per graph."""
    n = graph.num_nodes
    if n == 1:
        return np.array([[0.5, 0.5]])
    rng = np.random.default_rng(_layout_seed(graph))
    pos = rng.uniform(0.0, 1.0, size=(n, 2))
    spring = 1.0 / np.sqrt(n)
    for it in range(iterations):
        delta = pos[:, None, :] - pos[None, :, :]
        dist = np.sqrt((delta * delta).sum(axis=-1))
        np.fill_diagonal(dist, 1.0)
        dist = np.maximum(dist, 1e-9)
        repulsion = spring * spring / dist
        disp = (delta / dist[..., None] * repulsion[..., None]).sum(axis=1)
        for i, j, _ in graph.edges:
            d = pos[i] - pos[j]
            length = max(float(np.sqrt((d * d).sum())), 1e-9)
            pull = d / length * (length * length / spring)
            disp[i] -= pull
            disp[j] += pull
        temperature = 0.1 * (1.0 - it / iterations)
        lengths = np.maximum(np.sqrt((disp * disp).sum(axis=1)), 1e-9)
        step = np.minimum(lengths, temperature)
        pos = pos + disp / lengths[:, None] * step[:, None]
        pos = np.clip(pos, 0.0, 1.0)
    span = pos.max(axis=0) - pos.min(axis=0)
    span = np.where(span > 1e-9, span, 1.0)
    return (pos - pos.min(axis=0)) / span


def render_svg(graph: Graph, attribution: AttributionMap,
               label_names: tuple[str, ...] | None = None, size: int = 420) -> str:
    """Render a graph with per-node attribution colors as standalone SVG text."""
    scores = np.asarray(attribution.scores, dtype=np.float64)
    if scores.shape[0] != graph.num_nodes:
        raise ValueError(
            f"attribution has {scores.shape[0]} scores for {graph.num_nodes} nodes"
        )
    scale_max = float(np.abs(scores).max()) if scores.size and np.abs(scores).max() > 0 else 1.0
    margin = 36.0
    coords = margin + layout_positions(graph) * (size - 2 * margin)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<title>{escape(attribution.method)} attribution, task {attribution.task_index}</title>',
        f'<rect width="{size}" height="{size}" fill="white"/>',
    ]
    for i, j, order in graph.edges:
        x1, y1 = coords[i]
        x2, y2 = coords[j]
        parts.append(
            f'<line x1="{x1:.2f}" y1="{y1:.2f}" x2="{x2:.2f}" y2="{y2:.2f}" '
            f'stroke="#555555" {_BOND_STYLE[order]}/>'
        )
    for node in range(graph.num_nodes):
        x, y = coords[node]
        color = diverging_color(scores[node] / scale_max)
        parts.append(
            f'<circle cx="{x:.2f}" cy="{y:.2f}" r="12" fill="{color}" '
            f'stroke="#222222" stroke-width="1"/>'
        )
        label = graph.node_labels[node]
        text = label_names[label] if label_names is not None else str(label)
        parts.append(
            f'<text x="{x:.2f}" y="{y + 4:.2f}" font-size="10" text-anchor="middle" '
            f'font-family="sans-serif">{escape(text)}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_heatmap_svg(sim: SimilarityMatrix, title: str = "") -> str:
    """Render a similarity matrix as a colored grid with row/column labels."""
    k = sim.size
    cell = 24
    label_pad = 72
    top_pad = 40
    width = label_pad + k * cell + 12
    height = top_pad + k * cell + label_pad
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        parts.append(
            f'<text x="{width / 2:.1f}" y="20" font-size="13" text-anchor="middle" '
            f'font-family="sans-serif">{escape(title)}</text>'
        )
    for row in range(k):
        y = top_pad + row * cell
        parts.append(
            f'<text x="{label_pad - 6}" y="{y + cell * 0.7:.1f}" font-size="10" '
            f'text-anchor="end" font-family="sans-serif">{escape(sim.row_labels[row])}</text>'
        )
        for col in range(k):
            x = label_pad + col * cell
            color = diverging_color(float(sim.entries[row, col]))
            parts.append(
                f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{color}" '
                f'stroke="#cccccc" stroke-width="0.5"/>'
            )
    for col in range(k):
        x = label_pad + col * cell + cell * 0.7
        y = top_pad + k * cell + 6
        parts.append(
            f'<text x="{x:.1f}" y="{y}" font-size="10" text-anchor="start" '
            f'font-family="sans-serif" transform="rotate(90 {x:.1f} {y})">'
            f'{escape(sim.row_labels[col])}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
