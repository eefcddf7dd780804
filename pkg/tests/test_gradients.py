import pytest
import torch

from oracles import (
    central_difference,
    gradient_check,
    kink_crossings,
    reduced_problem,
    top_indices,
)


def test_central_difference_on_quadratic():
    theta = torch.tensor([1.0, -2.0, 0.5], dtype=torch.float64)
    fn = lambda: (theta ** 2).sum() * 0.5 + theta[0] * theta[1]
    numeric = central_difference(fn, [theta], [0, 1, 2])
    assert numeric == pytest.approx([1.0 - 2.0, -2.0 + 1.0, 0.5], abs=1e-8)


@pytest.mark.parametrize("variant", ["dcgan", "can", "ccan"])
@pytest.mark.parametrize("player", ["d", "g"])
def test_fine_step_matches_everywhere(variant, player):
    # with a tiny step no stencil straddles an activation kink
    _, g, d, d_loss, g_loss = reduced_problem(variant, seed=0)
    fn, net = (d_loss, d) if player == "d" else (g_loss, g)
    assert gradient_check(fn, list(net.parameters()), step=1e-6) < 1e-5


@pytest.mark.parametrize("variant", ["dcgan", "ccan"])
def test_coarse_step_mismatches_are_kink_crossings(variant):
    _, g, d, d_loss, _ = reduced_problem(variant, seed=0)
    params = list(d.parameters())
    analytic, indices = top_indices(d_loss, params)
    numeric = central_difference(d_loss, params, indices, 1e-4)
    bad = {i for i, n in zip(indices, numeric)
           if abs(analytic[i].item() - n) > 1e-3 * max(abs(analytic[i].item()), abs(n))}
    crossings = set(kink_crossings(d_loss, params, list(g.modules()) + list(d.modules()), indices))
    assert bad <= crossings


def test_gradient_check_detects_wrong_gradient():
    theta = torch.tensor([0.3, 0.7], dtype=torch.float64, requires_grad=True)

    class Wrong(torch.autograd.Function):
        @staticmethod
        def forward(ctx, x):
            ctx.save_for_backward(x)
            return (x ** 3).sum()

        @staticmethod
        def backward(ctx, grad):
            (x,) = ctx.saved_tensors
            return grad * 2 * x ** 2  # should be 3 x^2

    assert gradient_check(lambda: Wrong.apply(theta), [theta]) > 0.1
