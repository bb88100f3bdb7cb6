import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from splitbridge.net import ShapeError, build_net
from splitbridge.partition import (
    bridge_reconnect,
    copy_back_subnet,
    cross_groups,
    disconnect,
    extract_subnet,
    make_plan,
)


def widened_net(seed=0, hidden=(8, 8, 8), c_old=2, c_new=2, in_dim=4):
    net = build_net(in_dim, list(hidden), c_old, seed)
    net.widen_output(c_new)
    return net


class TestMakePlan:
    def test_even_split(self):
        net = build_net(4, [64, 64], 40, 0)
        plan = make_plan(net, 1, 20, 20, 1.0)
        assert plan.old_out[1].size == 32
        assert plan.new_out[1].size == 32

    def test_shared_layer_collapse(self):
        # new share (1 - 1.4) * 50 + 10 = -10 < 1
        net = build_net(4, [32, 32], 60, 0)
        plan = make_plan(net, 1, 50, 10, 1.4)
        assert 1 in plan.shared_layers
        assert not plan.is_partitioned(1)

    def test_rounded_allocation(self):
        # round(8 * 30 / 40) = 6
        net = build_net(4, [8, 8], 40, 0)
        plan = make_plan(net, 1, 10, 30, 1.0)
        assert plan.old_out[1].size == 2
        assert plan.new_out[1].size == 6

    def test_final_layer_split_by_class(self):
        net = widened_net(c_old=3, c_new=2)
        plan = make_plan(net, 1, 3, 2, 1.0)
        last = net.depth - 1
        assert np.array_equal(plan.old_out[last], [0, 1, 2])
        assert np.array_equal(plan.new_out[last], [3, 4])

    def test_groups_disjoint_and_exhaustive(self):
        net = widened_net()
        plan = make_plan(net, 1, 2, 2, 1.2)
        for li in range(plan.split_index, net.depth):
            if li in plan.shared_layers:
                continue
            old, new = plan.old_out[li], plan.new_out[li]
            assert np.intersect1d(old, new).size == 0
            assert np.union1d(old, new).size == net.layers[li].out_dim

    def test_allocation_monotone_in_new_classes(self):
        net = build_net(4, [16, 16], 40, 0)
        prev = 0
        for c_new in range(1, 30):
            plan = make_plan(build_net(4, [16, 16], 10 + c_new, 0), 1, 10, c_new, 1.0)
            n = plan.new_out[1].size
            assert n >= prev
            prev = n

    def test_errors(self):
        net = widened_net()
        with pytest.raises(ValueError):
            make_plan(net, net.depth, 2, 2, 1.0)
        with pytest.raises(ValueError):
            make_plan(net, 1, 2, 2, 0.0)
        with pytest.raises(ShapeError):
            make_plan(net, 1, 3, 3, 1.0)


class TestCrossGroups:
    def test_all_shared_means_final_only_with_empty_inputs(self):
        net = widened_net(c_old=50, c_new=10, hidden=(8, 8, 8))
        net2 = build_net(4, [8, 8, 8], 60, 0)
        plan = make_plan(net2, 1, 50, 10, 1.4)
        groups = cross_groups(plan, net2)
        assert groups.total_count() == 0

    def test_exhaustive_two_by_two(self):
        net = widened_net(hidden=(2, 2), in_dim=4, c_old=1, c_new=1)
        plan = make_plan(net, 1, 1, 1, 1.0)
        groups = cross_groups(plan, net)
        on, no = groups.per_layer[2]
        assert on[0, 1] and not on.sum() > 1
        assert no[1, 0] and not no.sum() > 1

    def test_counting_oracle(self, rng):
        # on a 6 -> 6 partitioned pair, cross + within = 36
        net = build_net(4, [6, 6], 4, 0)
        plan = make_plan(net, 1, 2, 2, 1.0)
        groups = cross_groups(plan, net)
        on, no = groups.per_layer[2]
        n_old_in = plan.old_out[1].size
        n_new_in = plan.new_out[1].size
        # within-partition count on the 6 -> 4 output layer
        within = n_old_in * 2 + n_new_in * 2
        assert int(on.sum() + no.sum()) + within == 6 * 4

    def test_first_partitioned_layer_contributes_nothing(self):
        net = widened_net()
        plan = make_plan(net, 1, 2, 2, 1.0)
        groups = cross_groups(plan, net)
        on, no = groups.per_layer[1]
        assert on.sum() == 0 and no.sum() == 0


class TestDisconnect:
    def _setup(self, seed=0):
        net = widened_net(seed=seed)
        plan = make_plan(net, 1, 2, 2, 1.0)
        groups = cross_groups(plan, net)
        disconnect(net, groups)
        return net, plan, groups

    def test_new_branch_cannot_touch_old_logits(self, rng):
        net, plan, _ = self._setup()
        x = rng.standard_normal((50, 4))
        before = net.forward(x)[:, :2]
        for li in range(plan.split_index, net.depth):
            layer = net.layers[li]
            _, in_new = plan.input_groups(li)
            out_new = plan.new_out[li]
            layer.w[:, out_new] += 1.0
            if layer.mask is not None:
                layer.w *= layer.mask
            if in_new.size:
                layer.b[out_new] += 1.0
        after = net.forward(x)[:, :2]
        assert np.array_equal(before, after)

    def test_full_net_old_slice_equals_subnet(self, rng):
        net, plan, _ = self._setup()
        sub = extract_subnet(net, plan, "old")
        x = rng.standard_normal((30, 4))
        assert np.allclose(net.forward(x)[:, :2], sub.forward(x), atol=1e-12, rtol=0)

    def test_idempotent(self):
        net, plan, groups = self._setup()
        w_before = [l.w.copy() for l in net.layers]
        disconnect(net, groups)
        for l, w in zip(net.layers, w_before):
            assert np.array_equal(l.w, w)


class TestBridgeReconnect:
    def _setup(self, seed=0):
        net = widened_net(seed=seed)
        plan = make_plan(net, 1, 2, 2, 1.0)
        groups = cross_groups(plan, net)
        disconnect(net, groups)
        return net, plan, groups

    def test_zero_bridge_equivalence(self, rng):
        net, _, groups = self._setup()
        x = rng.standard_normal((100, 4))
        before = net.forward(x)
        bridge_reconnect(net, groups)
        assert np.array_equal(net.forward(x), before)

    def test_bridge_weights_learn_after_step(self, rng):
        from splitbridge.losses import ce_loss
        from splitbridge.net import SgdConfig, SgdState, sgd_step

        net, _, groups = self._setup()
        bridge_reconnect(net, groups)
        x = rng.standard_normal((16, 4))
        y = rng.integers(0, 4, size=16)
        for _ in range(3):
            lv = ce_loss(net.forward(x), y)
            grads = net.backward(x, lv.grad_logits)
            sgd_step(net, grads, SgdConfig(learning_rate=0.5, momentum=0.0, epochs=1), SgdState())
        cross_vals = [net.layers[li].w[on | no] for li, (on, no) in groups.per_layer.items()]
        assert any(np.any(v != 0.0) for v in cross_vals)

    def test_reconnect_then_disconnect_restores(self, rng):
        net, _, groups = self._setup()
        snap = net.clone()
        bridge_reconnect(net, groups)
        disconnect(net, groups)
        for a, b in zip(net.layers, snap.layers):
            assert np.array_equal(a.w, b.w)
            assert np.array_equal(a.mask if a.mask is not None else np.zeros(0),
                                  b.mask if b.mask is not None else np.zeros(0))

    def test_reconnect_never_disconnected_errors(self):
        net = widened_net()
        plan = make_plan(net, 1, 2, 2, 1.0)
        groups = cross_groups(plan, net)
        with pytest.raises(ValueError, match="never disconnected"):
            bridge_reconnect(net, groups)


class TestExtractSubnet:
    def _setup(self):
        net = widened_net(seed=3)
        plan = make_plan(net, 1, 2, 2, 1.0)
        groups = cross_groups(plan, net)
        disconnect(net, groups)
        return net, plan

    def test_old_side_paired_comparison(self, rng):
        net, plan = self._setup()
        sub = extract_subnet(net, plan, "old")
        for _ in range(100):
            x = rng.standard_normal((1, 4))
            # differently shaped matmuls may reorder float sums
            assert np.allclose(sub.forward(x), net.forward(x)[:, :2], atol=1e-12, rtol=0)

    def test_new_side_width(self):
        net, plan = self._setup()
        sub = extract_subnet(net, plan, "new")
        assert sub.num_classes == 2

    def test_new_side_paired_comparison(self, rng):
        net, plan = self._setup()
        sub = extract_subnet(net, plan, "new")
        x = rng.standard_normal((20, 4))
        assert np.allclose(sub.forward(x), net.forward(x)[:, 2:], atol=1e-12, rtol=0)

    def test_shared_trunk_copy_back_visibility(self):
        net, plan = self._setup()
        old_side = extract_subnet(net, plan, "old")
        old_side.layers[0].w += 0.5
        copy_back_subnet(old_side, net, plan, "old")
        new_side = extract_subnet(net, plan, "new")
        assert np.array_equal(new_side.layers[0].w, old_side.layers[0].w)

    def test_all_layers_shared_new_side(self):
        net = build_net(4, [8, 8], 12, 0)
        plan = make_plan(net, 1, 10, 2, 1.4)
        sub = extract_subnet(net, plan, "new")
        assert sub.num_classes == 2
        x = np.random.default_rng(0).standard_normal((5, 4))
        assert np.allclose(sub.forward(x), net.forward(x)[:, 10:], atol=1e-12, rtol=0)

    def test_bad_side(self):
        net, plan = self._setup()
        with pytest.raises(ValueError):
            extract_subnet(net, plan, "both")


class TestPartitionClassification:
    @given(st.integers(0, 10_000))
    @settings(max_examples=25, deadline=None)
    def test_every_weight_classified_once(self, seed):
        r = np.random.default_rng(seed)
        c_old = int(r.integers(1, 6))
        c_new = int(r.integers(1, 6))
        hidden = [int(r.integers(4, 10)) for _ in range(3)]
        rho = float(r.uniform(0.8, 1.4))
        net = build_net(4, hidden, c_old + c_new, seed)
        plan = make_plan(net, 1, c_old, c_new, rho)
        groups = cross_groups(plan, net)
        for li in range(1, net.depth):
            if not plan.is_partitioned(li):
                continue
            on, no = groups.per_layer[li]
            in_old, in_new = plan.input_groups(li)
            out_old, out_new = plan.old_out[li], plan.new_out[li]
            within = np.zeros(net.layers[li].w.shape, dtype=bool)
            if in_old.size:
                within[np.ix_(in_old, out_old)] = True
                within[np.ix_(in_new, out_new)] = True
            else:
                within[:, :] = True  # whole-input fan-in counts as within
            overlap = (on & no) | (on & within) | (no & within)
            assert not overlap.any()
            assert (on | no | within).all()
