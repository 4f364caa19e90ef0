"""Unit tests for the reverse-mode autodiff core and the Adam optimizer."""

import numpy as np
import pytest

from rcdn import autodiff as ad
from rcdn.autodiff import (Adam, GradCheckReport, Tape, Tensor, backward,
                           gradcheck)
from rcdn.errors import DeterminismError, NumericsError, UsageError


def check(f, x, tol=1e-4):
    report = gradcheck(f, Tensor(np.asarray(x, dtype=np.float64)), tol=tol)
    assert report.passed, report
    return report


class TestTensor:
    def test_always_float64(self):
        t = Tensor(np.arange(4, dtype=np.int32))
        assert t.data.dtype == np.float64

    def test_rejects_non_finite(self):
        with pytest.raises(NumericsError):
            Tensor(np.array([1.0, np.nan]))
        with pytest.raises(NumericsError):
            Tensor(np.array([np.inf]))

    def test_item_and_shape(self):
        assert Tensor(3.5).item() == 3.5
        assert Tensor(np.zeros((2, 3))).shape == (2, 3)


class TestPrimitives:
    def test_add_sub_mul_gradients(self, rng):
        a = rng.normal(size=(3, 4))
        b = rng.normal(size=(3, 4))
        check(lambda t: ad.tsum(ad.add(t, Tensor(b))), a)
        check(lambda t: ad.tsum(ad.sub(Tensor(b), t)), a)
        check(lambda t: ad.tsum(ad.mul(t, Tensor(b))), a)

    def test_broadcast_gradients(self, rng):
        # a (3,1) broadcast against b (3,4): grads must be summed back down
        a = rng.normal(size=(3, 1))
        b = rng.normal(size=(3, 4))
        check(lambda t: ad.tsum(ad.mul(t, Tensor(b))), a)
        check(lambda t: ad.tsum(ad.add(Tensor(a), t)), b)

    def test_square_sqrt(self, rng):
        x = rng.uniform(0.5, 2.0, size=7)
        check(lambda t: ad.tsum(ad.square(t)), x)
        check(lambda t: ad.tsum(ad.sqrt(t)), x)

    def test_relu_gradient_away_from_kink(self, rng):
        x = rng.normal(size=20)
        x[np.abs(x) < 0.05] += 0.2  # keep clear of the non-differentiable point
        check(lambda t: ad.tsum(ad.relu(t)), x)

    def test_sum_mean_axis(self, rng):
        x = rng.normal(size=(4, 5))
        check(lambda t: ad.tsum(ad.tsum(t, axis=1)), x)
        check(lambda t: ad.tsum(ad.tmean(t, axis=0)), x)
        assert np.isclose(ad.tmean(Tensor(x)).item(), x.mean())

    def test_take_rows_with_repeats(self, rng):
        x = rng.normal(size=(5, 3))
        idx = np.array([0, 2, 2, 4])
        check(lambda t: ad.tsum(ad.take_rows(t, idx)), x)
        # the repeated row must accumulate gradient twice
        probe = Tensor(x, requires_grad=True)
        with Tape() as tape:
            y = ad.tsum(ad.take_rows(probe, idx))
        backward(y, tape)
        assert probe.grad[2, 0] == 2.0
        assert probe.grad[1, 0] == 0.0

    def test_operator_sugar_matches_functions(self, rng):
        a, b = rng.normal(size=3), rng.normal(size=3)
        ta, tb = Tensor(a), Tensor(b)
        np.testing.assert_array_equal((ta + tb).data, a + b)
        np.testing.assert_array_equal((ta - tb).data, a - b)
        np.testing.assert_array_equal((ta * tb).data, a * b)
        np.testing.assert_array_equal((-ta).data, -a)
        np.testing.assert_array_equal((2.0 * ta).data, 2.0 * a)


class TestBackward:
    def test_diamond_graph_accumulates(self):
        x = Tensor(np.array([2.0]), requires_grad=True)
        with Tape() as tape:
            y = ad.add(ad.square(x), ad.mul(x, Tensor(3.0)))  # x^2 + 3x
        backward(y, tape)
        assert x.grad[0] == pytest.approx(2 * 2.0 + 3.0)

    def test_tape_consumed_once(self):
        x = Tensor(1.0, requires_grad=True)
        with Tape() as tape:
            y = ad.square(x)
        backward(y, tape)
        with pytest.raises(UsageError):
            backward(y, tape)

    def test_scalar_loss_required(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with Tape() as tape:
            y = ad.square(x)
        with pytest.raises(UsageError):
            backward(y, tape)

    def test_untaped_ops_do_not_record(self):
        x = Tensor(np.ones(3), requires_grad=True)
        y = ad.square(x)  # no active tape
        assert y.data is not None
        with Tape() as tape:
            pass
        assert len(tape) == 0

    def test_grads_only_on_requires_grad(self):
        x = Tensor(np.ones(3), requires_grad=True)
        c = Tensor(np.ones(3))
        with Tape() as tape:
            y = ad.tsum(ad.mul(x, c))
        backward(y, tape)
        assert x.grad is not None
        assert c.grad is None


class TestGradcheck:
    def test_reports_failure(self):
        # deliberately wrong vjp: claims gradient 0 for an identity op
        def bad(t):
            return ad.record(t.data.sum(), (t,), lambda g: (np.zeros_like(t.data),))

        report = gradcheck(bad, Tensor(np.ones(3)))
        assert not report.passed

    def test_rejects_nondeterministic_function(self):
        state = {"n": 0}

        def flaky(t):
            state["n"] += 1
            return ad.mul(ad.tsum(t), Tensor(float(state["n"])))

        with pytest.raises(DeterminismError):
            gradcheck(flaky, Tensor(np.ones(2)))

    def test_report_repr(self):
        rep = GradCheckReport(1e-6, 1e-4, 1e-5, 10)
        assert "pass" in repr(rep)


class TestAdam:
    def test_first_step_closed_form(self):
        # With one parameter and gradient g, the first Adam update is
        # -lr * g / (|g| + eps) regardless of the betas.
        p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
        p.grad = np.array([0.5, -4.0])
        opt = Adam([p], lr=0.1)
        opt.step()
        expected = np.array([1.0, -2.0]) - 0.1 * np.sign([0.5, -4.0]) \
            * (np.abs([0.5, -4.0]) / (np.abs([0.5, -4.0]) + 1e-8))
        np.testing.assert_allclose(p.data, expected, rtol=1e-9)

    def test_converges_on_quadratic(self):
        p = Tensor(np.array([5.0]), requires_grad=True)
        opt = Adam([p], lr=0.2)
        for _ in range(200):
            opt.zero_grad()
            p.grad = 2.0 * p.data  # d/dp p^2
            opt.step()
        assert abs(p.data[0]) < 1e-2

    def test_none_grad_leaves_parameter_unchanged(self):
        p = Tensor(np.array([1.0]), requires_grad=True)
        q = Tensor(np.array([1.0]), requires_grad=True)
        opt = Adam([p, q], lr=0.5)
        p.grad = np.array([1.0])
        opt.step()
        assert q.data[0] == 1.0
        assert p.data[0] != 1.0

    def test_zero_grad_clears(self):
        p = Tensor(np.array([1.0]), requires_grad=True)
        p.grad = np.array([1.0])
        Adam([p]).zero_grad()
        assert p.grad is None

    def test_non_finite_parameter_raises(self):
        # the bias-corrected update is ~= -lr for gradient -1, so a huge lr
        # pushes the parameter past the float64 range in one step
        p = Tensor(np.array([1e308]), requires_grad=True)
        p.grad = np.array([-1.0])
        opt = Adam([p], lr=1e308)
        with np.errstate(over="ignore"), pytest.raises(NumericsError):
            opt.step()
