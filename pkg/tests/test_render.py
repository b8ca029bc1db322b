import re
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from grattr.attribution import AttributionMap
from grattr.graphs import Graph
from grattr.metrics import SimilarityMatrix, cosine_matrix
from grattr.render import diverging_color, layout_positions, render_heatmap_svg, render_svg

from helpers import random_graph

GRAPH = Graph((0, 1, 2, 3),
              ((0, 1, "single"), (1, 2, "double"), (2, 3, "triple"), (0, 3, "aromatic")))


def _map(scores):
    return AttributionMap("cam", 0, tuple(scores))


def test_diverging_scale_endpoints():
    assert diverging_color(0.0) == "#ffffff"
    assert diverging_color(1.0) == "#d62ca0"
    assert diverging_color(-1.0) == "#2ca02c"


def test_svg_has_one_circle_per_node():
    svg = render_svg(GRAPH, _map([0.5, -0.25, 1.0, 0.0]))
    assert svg.count("<circle") == GRAPH.num_nodes
    assert svg.count("<line") == len(GRAPH.edges)


def test_all_zero_map_renders_neutral_nodes():
    svg = render_svg(GRAPH, _map([0.0, 0.0, 0.0, 0.0]))
    fills = re.findall(r'<circle[^>]*fill="([^"]+)"', svg)
    assert fills == ["#ffffff"] * 4


def test_negating_scores_mirrors_every_color():
    scores = [0.8, -0.2, 0.5, -1.0]
    fills = re.findall(r'<circle[^>]*fill="([^"]+)"', render_svg(GRAPH, _map(scores)))
    mirrored = re.findall(r'<circle[^>]*fill="([^"]+)"',
                          render_svg(GRAPH, _map([-s for s in scores])))
    for t, f, m in zip(np.array(scores) / 1.0, fills, mirrored):
        assert m == diverging_color(-t / 1.0)
        assert f == diverging_color(t / 1.0)


def test_bond_orders_are_styled_distinctly():
    svg = render_svg(GRAPH, _map([0.0] * 4))
    lines = re.findall(r"<line[^>]*/>", svg)
    styles = {re.search(r'stroke-width="([^"]+)"', ln).group(1) +
              ("dash" if "dasharray" in ln else "") for ln in lines}
    assert len(styles) == 4


def test_svg_is_valid_xml_and_deterministic():
    amap = _map([0.1, 0.2, -0.3, 0.4])
    first = render_svg(GRAPH, amap)
    ET.fromstring(first)
    assert first == render_svg(GRAPH, amap)


def test_layout_is_seeded_by_graph_content():
    a = layout_positions(GRAPH)
    b = layout_positions(GRAPH)
    assert np.array_equal(a, b)
    other = layout_positions(Graph((0, 1, 2, 3, 4), GRAPH.edges))
    assert other.shape == (5, 2)
    assert not np.array_equal(a, other[:4])


def test_layout_single_node_centered():
    assert np.array_equal(layout_positions(Graph((0,))), [[0.5, 0.5]])


def test_node_label_names_are_used():
    svg = render_svg(Graph((0, 1)), _map([0.0, 0.0]), label_names=("C", "N"))
    assert ">C</text>" in svg and ">N</text>" in svg


def test_score_count_must_match_nodes():
    with pytest.raises(ValueError, match="scores"):
        render_svg(GRAPH, _map([1.0]))


def test_heatmap_is_valid_deterministic_xml():
    rng = np.random.default_rng(0)
    sim = cosine_matrix(rng.normal(size=(5, 3)), tuple("abcde"))
    first = render_heatmap_svg(sim, "unit test <heatmap>")
    ET.fromstring(first)
    assert first == render_heatmap_svg(sim, "unit test <heatmap>")
    assert first.count("<rect") == 5 * 5 + 1  # background plus one cell per pair


def test_heatmap_colors_follow_entries():
    sim = SimilarityMatrix(np.array([[1.0, -1.0], [-1.0, 1.0]]), ("x", "y"))
    svg = render_heatmap_svg(sim)
    assert svg.count(diverging_color(1.0)) == 2
    assert svg.count(diverging_color(-1.0)) == 2


@pytest.mark.parametrize("seed", range(5))
def test_arbitrary_graphs_render(seed):
    g = random_graph(np.random.default_rng(seed), 2, 12)
    scores = np.random.default_rng(seed + 1).normal(size=g.num_nodes)
    ET.fromstring(render_svg(g, _map(scores)))
