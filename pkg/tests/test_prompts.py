import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from sketchadapt.common import ShapeMismatchError
from sketchadapt.prompts import (PromptState, compose_text_prompts, init_prompts,
                                 meta_context)


def _state(**kw):
    args = dict(seed=0, depth=3, prompt_len=4, patch_dim=6, token_dim=5, feature_dim=8)
    args.update(kw)
    return init_prompts(**args)


def test_zero_meta_net_gives_zero_context():
    state = PromptState(depth=2, prompt_len=3, patch_dim=4, token_dim=5, feature_dim=6)
    with torch.no_grad():
        for p in state.meta_net.parameters():
            p.zero_()
    ctx = meta_context(state, torch.randn(6))
    assert torch.equal(ctx, torch.zeros(3, 5))


def test_meta_net_scalar_arithmetic():
    state = PromptState(depth=1, prompt_len=1, patch_dim=1, token_dim=1,
                        feature_dim=1, meta_hidden=1)
    with torch.no_grad():
        state.meta_net[0].weight.fill_(3.0)
        state.meta_net[0].bias.zero_()
        state.meta_net[2].weight.fill_(0.5)
        state.meta_net[2].bias.zero_()
    ctx = meta_context(state, torch.tensor([2.0]))
    assert ctx.item() == pytest.approx(0.5 * max(0.0, 3.0 * 2.0))


def test_meta_net_finite_difference_gradient():
    torch.manual_seed(0)
    state = _state().double()
    f = torch.randn(8, dtype=torch.float64, requires_grad=True)
    meta_context(state, f).sum().backward()
    grad = f.grad.clone()
    eps = 1e-6
    for i in range(8):
        up, down = f.detach().clone(), f.detach().clone()
        up[i] += eps
        down[i] -= eps
        num = (meta_context(state, up).sum() - meta_context(state, down).sum()) / (2 * eps)
        assert abs(num - grad[i]) / max(abs(num), 1e-8) < 1e-4


def test_compose_identity_with_zero_biases():
    state = _state()
    zero = torch.zeros(4, 5)
    out = compose_text_prompts(state, zero, zero)
    assert torch.equal(out, state.text_prompts)


def test_compose_shift_broadcasts_to_all_depths():
    state = _state()
    ctx = torch.randn(4, 5)
    eta = torch.randn(4, 5)
    shifted = compose_text_prompts(state, ctx, eta)
    base = compose_text_prompts(state, torch.zeros(4, 5), torch.zeros(4, 5))
    for depth in range(3):
        assert torch.allclose(shifted[depth] - base[depth], ctx + eta, atol=1e-6)


def test_compose_additivity():
    state = _state()
    a = torch.randn(4, 5)
    b = torch.randn(4, 5)
    eta = torch.randn(4, 5)
    left = compose_text_prompts(state, a + b, eta)
    right = compose_text_prompts(state, a, eta) + b.unsqueeze(0)
    assert torch.allclose(left, right, atol=1e-6)


@given(st.integers(0, 2 ** 31 - 1))
@settings(max_examples=20, deadline=None)
def test_compose_superposition_property(seed):
    state = _state()
    g = torch.Generator().manual_seed(seed)
    c1 = torch.randn(4, 5, generator=g)
    c2 = torch.randn(4, 5, generator=g)
    e = torch.randn(4, 5, generator=g)
    lhs = compose_text_prompts(state, c1 + c2, e)
    rhs = compose_text_prompts(state, c1, torch.zeros(4, 5)) + (c2 + e).unsqueeze(0)
    assert torch.allclose(lhs, rhs, atol=1e-5)


def test_compose_shape_mismatch():
    state = _state()
    with pytest.raises(ShapeMismatchError):
        compose_text_prompts(state, torch.zeros(2, 5), None)


def test_compose_per_sample_biases():
    state = _state()
    ctx = torch.randn(7, 4, 5)
    out = compose_text_prompts(state, ctx, None)
    assert out.shape == (7, 3, 4, 5)
    assert torch.allclose(out[2, 1], state.text_prompts[1] + ctx[2], atol=1e-6)


def test_init_deterministic():
    a, b = _state(), _state()
    assert torch.equal(a.vision_prompts, b.vision_prompts)
    assert torch.equal(a.text_prompts, b.text_prompts)
    for pa, pb in zip(a.meta_net.parameters(), b.meta_net.parameters()):
        assert torch.equal(pa, pb)
    c = _state(seed=1)
    assert not torch.equal(a.vision_prompts, c.vision_prompts)


def test_single_depth_allocation():
    state = _state(depth=1)
    assert state.vision_prompts.shape[0] == 1
    assert state.text_prompts.shape[0] == 1


def test_deep_prompt_init_std():
    state = init_prompts(seed=3, depth=9, prompt_len=5, patch_dim=768,
                         token_dim=512, feature_dim=512)
    flat = state.vision_prompts.detach().flatten()
    assert flat.numel() >= 10_000
    assert abs(flat.std().item() - 0.02) < 0.002


def test_init_text_sets_shallow_text_prompts():
    def embedder(word):
        return torch.full((5,), float(len(word)))

    state = init_prompts(seed=0, depth=2, prompt_len=4, patch_dim=6, token_dim=5,
                         feature_dim=8, init_text="a quick fox", text_embedder=embedder)
    assert torch.equal(state.text_prompts[0, 0], torch.full((5,), 1.0))
    assert torch.equal(state.text_prompts[0, 1], torch.full((5,), 5.0))
    assert torch.equal(state.text_prompts[0, 2], torch.full((5,), 3.0))
    # remaining slot keeps its random init
    assert state.text_prompts[0, 3].std() > 0


def test_init_text_too_long_rejected():
    with pytest.raises(ValueError):
        init_prompts(seed=0, depth=1, prompt_len=2, patch_dim=4, token_dim=5,
                     feature_dim=8, init_text="one two three",
                     text_embedder=lambda w: torch.zeros(5))


def test_state_dict_round_trip():
    state = _state()
    payload = state.state_dict()
    other = PromptState(depth=3, prompt_len=4, patch_dim=6, token_dim=5, feature_dim=8)
    other.load_state_dict(payload)
    assert torch.equal(other.vision_prompts, state.vision_prompts)
    assert torch.equal(other.text_prompts, state.text_prompts)


def test_meta_ablation_runs_with_zero_context(toy_backbone):
    # composing with context None still yields a usable stack
    state = _state()
    out = compose_text_prompts(state, None, None)
    assert torch.equal(out, state.text_prompts)
