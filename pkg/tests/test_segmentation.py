from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rpsp_lab import presets
from rpsp_lab.laws import PointMassLaw, ks_distance
from rpsp_lab.message_models import MessageSizeDistribution as M
from rpsp_lab.segmentation import (
    SegmentationConfig, edge_distribution, edge_probability, segment, segment_messages,
)

CFG = SegmentationConfig(60, 10)


def brute_force(pairs, ld, header):
    """Packet-size frequencies by listing every packet of every message."""
    mass, packets = Counter(), 0.0
    for size, w in pairs:
        remaining = size
        while remaining > ld:
            mass[ld + header] += w
            packets += w
            remaining -= ld
        mass[remaining + header] += w
        packets += w
    return {s: m / packets for s, m in mass.items()}


@st.composite
def discrete_laws(draw, max_atoms=12, max_size=5000):
    sizes = draw(st.lists(st.integers(1, max_size), min_size=1, max_size=max_atoms, unique=True))
    raw = draw(st.lists(st.floats(0.01, 1.0), min_size=len(sizes), max_size=len(sizes)))
    total = sum(raw)
    return [(s, r / total) for s, r in zip(sizes, raw)]


def test_config_validation():
    with pytest.raises(ValueError):
        SegmentationConfig(0)
    with pytest.raises(ValueError):
        SegmentationConfig(10, -1)
    assert SegmentationConfig(2312, 34).body_size == 2346


class TestEdge:
    def test_all_small(self):
        assert edge_probability(M.discrete([(10, 0.5), (60, 0.5)]), CFG) == 1.0

    def test_single_mass(self):
        assert edge_probability(M.discrete([(100, 1.0)]), CFG) == 0.5

    def test_two_masses(self):
        assert edge_probability(M.discrete([(50, 0.5), (130, 0.5)]), CFG) == pytest.approx(0.5, rel=1e-15)

    @pytest.mark.parametrize("size,edge", [(100, 50), (120, 70), (1, 11), (60, 70), (61, 11)])
    def test_edge_sizes(self, size, edge):
        law = edge_distribution(M.discrete([(size, 1.0)]), CFG)
        assert law.sizes.tolist() == [edge]

    def test_continuous_rejected(self):
        with pytest.raises(TypeError):
            edge_probability(presets.preset("dynamic"), CFG)


class TestSegment:
    def test_worked_example(self):
        gen = segment(M.discrete([(100, 1.0)]), CFG)
        assert gen.sizes.tolist() == [50, 70]
        assert gen.weights.tolist() == [0.5, 0.5]
        assert gen.edge_probability == 0.5
        assert gen.mean == 60.0

    def test_no_segmentation_is_a_shift(self):
        msg = M.discrete([(3, 0.2), (17, 0.3), (60, 0.5)])
        gen = segment(msg, CFG)
        assert gen.edge_probability == 1.0
        assert gen.sizes.tolist() == [13, 27, 70]
        np.testing.assert_array_equal(gen.weights, msg.weights)

    def test_body_and_edge_merge(self):
        # 120 = 2 * 60: both packets are full size and share one atom
        gen = segment(M.discrete([(120, 0.5), (30, 0.5)]), CFG)
        assert gen.sizes.tolist() == [40, 70]
        assert gen.weights == pytest.approx([1 / 3, 2 / 3], rel=1e-15)

    def test_static_preset_max(self, generated):
        gen = generated("static")
        assert gen.max_size == 2346
        assert float(gen.max_size) == presets.TABLE2_MAX_PACKET

    @pytest.mark.parametrize("name", ["static", "dynamic"])
    def test_preset_support_and_identity(self, generated, name):
        gen = generated(name)
        assert gen.sizes[0] >= 35 and gen.sizes[-1] <= 2346
        assert abs(gen.weights.sum() - 1) <= 1e-12
        assert gen.mean == pytest.approx(gen.mean_identity, rel=1e-9)

    def test_continuous_matches_quantized(self):
        dyn = presets.preset("dynamic")
        cfg = SegmentationConfig(1500, 34)
        direct = segment(dyn, cfg)
        via = segment(dyn.quantize(), cfg)
        np.testing.assert_array_equal(direct.sizes, via.sizes)
        np.testing.assert_allclose(direct.weights, via.weights, rtol=1e-10, atol=1e-18)
        assert direct.edge_probability == pytest.approx(via.edge_probability, rel=1e-12)

    @settings(max_examples=300, deadline=None)
    @given(pairs=discrete_laws(), ld=st.integers(1, 3000), header=st.integers(0, 80))
    def test_brute_force_oracle(self, pairs, ld, header):
        cfg = SegmentationConfig(ld, header)
        gen = segment(M.discrete(pairs), cfg)
        want = brute_force(pairs, ld, header)
        assert gen.sizes.tolist() == sorted(want)
        np.testing.assert_allclose(gen.weights, [want[s] for s in sorted(want)], rtol=1e-9)
        assert abs(gen.weights.sum() - 1) <= 1e-12
        assert header + 1 <= gen.sizes[0] and gen.sizes[-1] <= ld + header
        assert gen.mean == pytest.approx(gen.mean_identity, rel=1e-9)


class TestMessageByMessage:
    def test_packet_order(self):
        out = segment_messages(np.array([100, 1, 120]), CFG)
        assert out.tolist() == [70, 50, 11, 70, 70]

    @pytest.mark.parametrize("name", ["static", "dynamic"])
    def test_histogram_matches_law(self, generated, name):
        rng = np.random.default_rng(11)
        msgs = presets.preset(name).sample(rng, 10**6)
        packets = segment_messages(msgs, SegmentationConfig(presets.PAYLOAD, presets.SWP_HEADER))
        sizes, counts = np.unique(packets, return_counts=True)
        empirical = PointMassLaw(sizes, counts / counts.sum())
        assert ks_distance(empirical, generated(name)) < 0.005
