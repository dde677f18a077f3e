import math

import numpy as np
import pytest
import torch

from sketchadapt.decoder import (StrokeDecoder, sequence_to_stroke5_json,
                                 sketch2vec_loss)


def test_zero_weights_emit_bias():
    dec = StrokeDecoder(feature_dim=3, hidden_dim=4)
    with torch.no_grad():
        for p in dec.parameters():
            p.zero_()
        dec.out_map.bias.copy_(torch.tensor([0.1, 0.2, 1.0, -1.0, 0.0]))
    out = dec.decode(torch.randn(2, 3), steps=4)
    expected = torch.tensor([0.1, 0.2, 1.0, -1.0, 0.0])
    assert torch.allclose(out, expected.expand(2, 4, 5), atol=1e-7)


def _sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


def test_single_step_matches_hand_gru_trace():
    """1-dim hidden, 1-dim feature: trace one gated-recurrent step by hand."""
    dec = StrokeDecoder(feature_dim=1, hidden_dim=1).double()
    with torch.no_grad():
        dec.init_map.weight.fill_(0.5)
        dec.init_map.bias.fill_(0.1)
        # torch GRUCell packs gates as (reset, update, new)
        dec.cell.weight_ih.copy_(torch.tensor(
            [[0.2, 0.1, 0.0, 0.0, 0.0, 0.0],     # reset, input part
             [0.3, 0.0, 0.1, 0.0, 0.0, 0.0],     # update
             [-0.2, 0.0, 0.0, 0.1, 0.0, 0.0]],   # new
            dtype=torch.float64))
        dec.cell.weight_hh.copy_(torch.tensor([[0.4], [-0.3], [0.25]],
                                              dtype=torch.float64))
        dec.cell.bias_ih.copy_(torch.tensor([0.01, 0.02, 0.03], dtype=torch.float64))
        dec.cell.bias_hh.copy_(torch.tensor([0.04, 0.05, 0.06], dtype=torch.float64))
        dec.out_map.weight.copy_(torch.tensor([[1.0], [2.0], [0.5], [-0.5], [0.0]],
                                              dtype=torch.float64))
        dec.out_map.bias.copy_(torch.tensor([0.0, 0.1, 0.0, 0.0, 0.2],
                                            dtype=torch.float64))

    f = torch.tensor([0.7], dtype=torch.float64)
    with torch.no_grad():
        out = dec.decode(f, steps=1).squeeze(0).squeeze(0)

    h0 = 0.5 * 0.7 + 0.1
    x = [0.7, 0.0, 0.0, 1.0, 0.0, 0.0]  # feature + start token (pen-down one-hot)
    r = _sigmoid(0.2 * x[0] + 0.1 * x[1] + 0.01 + 0.4 * h0 + 0.04)
    z = _sigmoid(0.3 * x[0] + 0.1 * x[2] + 0.02 + (-0.3) * h0 + 0.05)
    n = math.tanh(-0.2 * x[0] + 0.1 * x[3] + 0.03 + r * (0.25 * h0 + 0.06))
    h1 = (1 - z) * n + z * h0
    expected = [1.0 * h1 + 0.0, 2.0 * h1 + 0.1, 0.5 * h1, -0.5 * h1, 0.0 * h1 + 0.2]
    np.testing.assert_allclose(out.numpy(), expected, atol=1e-12)


def test_teacher_and_free_agree_at_first_step():
    dec = StrokeDecoder(feature_dim=4, hidden_dim=8)
    dec.initialize(seed=1)
    f = torch.randn(3, 4)
    teacher = torch.randn(3, 6, 5)
    a = dec.decode(f, steps=1, teacher_points=teacher)
    b = dec.decode(f, steps=1)
    assert torch.allclose(a, b, atol=1e-7)


def test_teacher_too_short_rejected():
    dec = StrokeDecoder(feature_dim=2, hidden_dim=4)
    with pytest.raises(ValueError):
        dec.decode(torch.randn(1, 2), steps=5, teacher_points=torch.randn(1, 3, 5))


def test_loss_perfect_prediction_near_zero():
    target = torch.tensor([[[0.3, 0.4, 1.0, 0.0, 0.0],
                            [0.5, 0.6, 0.0, 0.0, 1.0]]])
    pred = target.clone()
    pred[..., 2:] = pred[..., 2:] * 40.0 - 20.0  # confident logits on true class
    assert sketch2vec_loss(pred, target).item() < 1e-6


def test_loss_single_point_arithmetic():
    pred = torch.tensor([[[0.0, 0.0, 0.0, 0.0, 0.0]]])
    target = torch.tensor([[[0.3, 0.4, 1.0, 0.0, 0.0]]])
    expected = 0.3 ** 2 + 0.4 ** 2 + math.log(3.0)
    assert sketch2vec_loss(pred, target).item() == pytest.approx(expected, abs=1e-6)


def test_loss_matches_elementwise_oracle():
    g = torch.Generator().manual_seed(3)
    pred = torch.randn(2, 4, 5, generator=g, dtype=torch.float64)
    target = torch.zeros(2, 4, 5, dtype=torch.float64)
    target[..., :2] = torch.rand(2, 4, 2, generator=g, dtype=torch.float64)
    pens = torch.randint(0, 3, (2, 4), generator=g)
    for b in range(2):
        for t in range(4):
            target[b, t, 2 + pens[b, t]] = 1.0
    mask = torch.tensor([[1.0, 1.0, 1.0, 0.0], [1.0, 1.0, 1.0, 1.0]],
                        dtype=torch.float64)

    total = 0.0
    for b in range(2):
        n = mask[b].sum().item()
        coord = pen = 0.0
        for t in range(4):
            if mask[b, t] == 0:
                continue
            coord += (pred[b, t, 0] - target[b, t, 0]) ** 2 \
                + (pred[b, t, 1] - target[b, t, 1]) ** 2
            logits = pred[b, t, 2:]
            log_z = torch.logsumexp(logits, dim=0)
            pen += -(logits[pens[b, t]] - log_z)
        total += (coord + pen) / n
    expected = total / 2
    got = sketch2vec_loss(pred, target, mask)
    assert got.item() == pytest.approx(float(expected), abs=1e-9)


def test_loss_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        sketch2vec_loss(torch.zeros(1, 3, 5), torch.zeros(1, 4, 5))


def test_loss_gradient_matches_finite_differences():
    dec = StrokeDecoder(feature_dim=2, hidden_dim=3).double()
    dec.initialize(seed=4, std=0.3)
    f = torch.randn(1, 2, dtype=torch.float64)
    target = torch.tensor([[[0.2, 0.3, 1, 0, 0], [0.6, 0.1, 0, 0, 1]]],
                          dtype=torch.float64)

    def loss_fn():
        return sketch2vec_loss(dec.decode(f, 2, teacher_points=target), target)

    loss_fn().backward()
    for p in dec.parameters():
        grad = p.grad.clone()
        flat = p.data.view(-1)
        for idx in range(flat.numel()):
            orig = flat[idx].item()
            eps = 1e-6
            flat[idx] = orig + eps
            up = loss_fn().item()
            flat[idx] = orig - eps
            down = loss_fn().item()
            flat[idx] = orig
            num = (up - down) / (2 * eps)
            ana = grad.view(-1)[idx].item()
            if abs(num) < 1e-10 and abs(ana) < 1e-10:
                continue
            assert abs(num - ana) / max(abs(num), 1e-8) < 1e-4


def test_decoder_and_prompts_overfit_single_pair():
    """The auxiliary head pulls gradient into the vision prompts: jointly
    training decoder + prompts on one (raster, vector) pair drives the
    reconstruction loss below 0.05 well inside 500 steps."""
    from sketchadapt.backbone import load_pretrained
    from sketchadapt.synthetic import make_samples

    backbone = load_pretrained("toy", seed=0)
    sample = [s for s in make_samples(["circle"], 1, "separable", seed=0, side=32)
              if s.vector is not None][0]
    image = backbone.preprocess(sample.raster).unsqueeze(0)
    target = torch.from_numpy(sample.vector.points).unsqueeze(0)

    prompts = torch.nn.Parameter(torch.randn(2, 4, 16) * 0.02)
    dec = StrokeDecoder(feature_dim=8, hidden_dim=64)
    dec.initialize(seed=0)
    opt = torch.optim.Adam([prompts, *dec.parameters()], lr=5e-3)
    losses = []
    prompt_start = prompts.detach().clone()
    for step in range(500):
        feats = backbone.vision.encode(image, prompts)
        loss = sketch2vec_loss(dec.decode(feats, target.shape[1],
                                          teacher_points=target), target)
        opt.zero_grad()
        loss.backward()
        opt.step()
        losses.append(loss.item())
        if loss.item() < 0.05:
            break
    assert min(losses) < 0.05, f"stuck at {min(losses):.4f} after {len(losses)} steps"
    assert not torch.equal(prompt_start, prompts.detach())


def test_decoded_sequence_exports_one_hot_rows():
    points = torch.tensor([[0.1, 0.2, 3.0, -1.0, 0.5],
                           [0.3, 0.4, -2.0, 0.2, 4.0]])
    rows = sequence_to_stroke5_json(points)
    assert rows[0] == [pytest.approx(0.1), pytest.approx(0.2), 1.0, 0.0, 0.0]
    assert rows[1][2:] == [0.0, 0.0, 1.0]
