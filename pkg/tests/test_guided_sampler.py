import numpy as np
import pytest

from mogen import guided_sampler as G
from mogen import score_network as SN
from mogen import search_space as S


class QuadraticGuide:
    """log f(x) = -0.5 * ||x - x*||^2 for every head."""

    def __init__(self, target):
        self.target = target
        self.calls = []

    def grad_log(self, which, x, t, emb, floor=1e-12):
        self.calls.append(which)
        return -(x - self.target)


class ConstantGuide:
    def __init__(self, grads):
        self.grads = grads

    def grad_log(self, which, x, t, emb, floor=1e-12):
        return np.broadcast_to(self.grads[which], x.shape)


@pytest.fixture(scope="module")
def net():
    return SN.ScoreNet(S.NB201, SN.ScoreConfig(d_model=16, n_heads=2, n_blocks=1, time_dim=8),
                       SN.SdeSchedule(N=200), seed=3)


def run(net, guide, scales, seed, n=4, stream=0):
    state = G.init_state(net.shape, net.sde, seed, n, stream)
    for _ in range(net.sde.N):
        state = G.guided_reverse_step(state, net, guide, None, scales, net.sde)
    return state.x


def test_presets_and_baseline_constants():
    assert G.PRESETS["nb201"]["efficient"].as_tuple() == (4732, 482, 421, 368)
    assert G.PRESETS["nb201"]["accurate"].as_tuple() == (24943, 12, 26, 13)
    assert G.PRESETS["mbv3"]["efficient"].as_tuple() == (4987, 494, 478, 481)
    assert G.PRESETS["mbv3"]["accurate"].as_tuple() == (48321, 21, 16, 39)
    assert G.DIFFUSIONNAG_SCALES.as_tuple() == (10000, 0, 0, 0)
    assert G.BASELINE_BATCH == 256 and G.PHASE_BATCH == 128


def test_scales_validation_and_json():
    with pytest.raises(ValueError):
        G.GuidanceScales(k_macs=-1)
    s = G.GuidanceScales(1, 2, 3, 4)
    assert G.GuidanceScales.from_json(s.to_json()) == s
    with pytest.raises(ValueError):
        G.GuidanceScales.from_json({"k_energy": 1})


def test_zero_scales_bitwise_equal_unguided(net):
    guide = QuadraticGuide(np.zeros(net.shape))
    a = run(net, guide, G.GuidanceScales(), seed=1)
    b = run(net, None, G.GuidanceScales(), seed=1)
    assert np.array_equal(a, b)
    assert guide.calls == []


def test_guidance_term_is_linear_in_scale(net):
    guide = ConstantGuide({"acc": 0, "params": 0, "latency": 0, "macs": np.random.default_rng(0).random(net.shape)})
    x = np.random.default_rng(1).standard_normal((2,) + net.shape)
    d1 = G.guidance_drift(guide, x, 0.5, None, G.GuidanceScales(k_macs=100))
    d2 = G.guidance_drift(guide, x, 0.5, None, G.GuidanceScales(k_macs=200))
    assert np.allclose(d2, 2 * d1)
    base = G.guided_reverse_step(G.init_state(net.shape, net.sde, 0, 2), net, guide, None, G.GuidanceScales(), net.sde)
    one = G.guided_reverse_step(G.init_state(net.shape, net.sde, 0, 2), net, guide, None,
                                G.GuidanceScales(k_macs=100), net.sde)
    two = G.guided_reverse_step(G.init_state(net.shape, net.sde, 0, 2), net, guide, None,
                                G.GuidanceScales(k_macs=200), net.sde)
    assert np.allclose(two.x - base.x, 2 * (one.x - base.x))


def test_mock_predictor_pulls_chains_to_target(net):
    target = S.nb201(["conv3x3", "skip", "conv1x1", "avgpool3x3", "zeroise", "conv3x3"]).ops.astype(float)
    guide = QuadraticGuide(target)
    for seed in range(10):
        guided = run(net, guide, G.GuidanceScales(k_acc=1000), seed, n=1)
        free = run(net, None, G.GuidanceScales(), seed, n=1)
        assert np.linalg.norm(guided - target) < np.linalg.norm(free - target)


def test_chain_streams_are_order_independent(net):
    a = G.generate_batch(net, None, None, G.GuidanceScales(), 6, seed=4, n_steps=20, chunk=6)
    b = G.generate_batch(net, None, None, G.GuidanceScales(), 6, seed=4, n_steps=20, chunk=2)
    assert all(np.array_equal(x.values, y.values) for x, y in zip(a.raw, b.raw))
    c = G.generate_batch(net, None, None, G.GuidanceScales(), 3, seed=4, n_steps=20)
    assert all(np.array_equal(x.values, y.values) for x, y in zip(a.raw[:3], c.raw))
    assert len(a) == 6 and all(isinstance(q, S.Architecture) for q in a.archs)


def test_stretched_tags_phases(net):
    guide = QuadraticGuide(np.zeros(net.shape))
    presets = {"efficient": G.GuidanceScales(k_macs=1), "accurate": G.GuidanceScales(k_acc=1)}
    out = G.generate_stretched(net, guide, None, presets, seed=0, phase_batch=3, n_steps=5)
    assert out.phases == ["efficient"] * 3 + ["accurate"] * 3
    with pytest.raises(ValueError):
        G.generate_stretched(net, guide, None, {"efficient": G.GuidanceScales()}, seed=0)


def test_divergence_reported(net):
    class Exploding:
        def grad_log(self, which, x, t, emb, floor=1e-12):
            return np.full(x.shape, 1e308)

    with pytest.raises(G.ChainDiverged, match="step 0"):
        run(net, Exploding(), G.GuidanceScales(k_acc=1e6), seed=0, n=1)


def test_batch_size_and_missing_predictors(net):
    with pytest.raises(ValueError):
        G.generate_batch(net, None, None, G.GuidanceScales(), 0, seed=0)
    with pytest.raises(ValueError):
        G.generate_batch(net, None, None, G.GuidanceScales(k_acc=1), 2, seed=0)
