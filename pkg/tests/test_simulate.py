import dataclasses

import numpy as np
import pytest

from idnc import (
    FrameMetrics,
    PacketCombination,
    SystemConfig,
    TransmissionRecord,
    UserRecord,
    UserState,
    aggregate,
    run_recovery,
    simulate_frame,
    theorem1_residual,
    verify_accounting_identity,
)


def frame_with(ct, sdd, users=2, aborted=False):
    recs = [UserRecord(i, 0.2, 1, 0, 0, None if aborted else ct) for i in range(users)]
    return FrameMetrics(
        users=recs,
        initial_wants=[frozenset({0})] * users,
        transmission_log=[],
        overall_completion_time=None if aborted else ct,
        sum_decoding_delay=sdd,
        aborted=aborted,
    )


class TestSimulateFrame:
    def test_erasure_free_frame_finishes_in_the_initial_phase(self):
        cfg = SystemConfig(num_users=4, num_packets=6, mean_erasure=0.0,
                           erasure_spread=0.0)
        m = simulate_frame(cfg, "pct", seed=0)
        assert m.overall_completion_time == 0
        assert m.transmission_log == []
        assert m.sum_decoding_delay == 0 and not m.aborted
        assert verify_accounting_identity(m)

    def test_single_missing_packet_recovers_in_one_slot(self):
        # one user lost one packet and the channel is clean from then on
        cfg = SystemConfig(num_users=1, num_packets=1, mean_erasure=0.0,
                           erasure_spread=0.0)
        states = [UserState(0, 0.0, set(), {0}, wants0=1)]
        m = run_recovery(cfg, states, "pct", np.random.default_rng(0))
        assert len(m.transmission_log) == 1
        rec = m.users[0]
        assert (rec.wants0, rec.delay, rec.erasures) == (1, 0, 0)
        assert rec.completion_time == 1
        assert m.overall_completion_time == 1
        assert verify_accounting_identity(m)

    def test_identity_holds_across_policies_and_scales(self):
        for policy in ("pct", "minct", "sdd"):
            for mu, nu, pp, seed in [(4, 6, 0.2, 1), (8, 10, 0.5, 2),
                                     (12, 8, 0.35, 3)]:
                cfg = SystemConfig(num_users=mu, num_packets=nu,
                                   mean_erasure=pp)
                m = simulate_frame(cfg, policy, seed=seed,
                                   structural_checks=True)
                assert not m.aborted
                assert verify_accounting_identity(m)
                assert m.overall_completion_time == max(
                    r.completion_time for r in m.users
                )

    def test_every_transmission_targets_somebody(self):
        cfg = SystemConfig(num_users=6, num_packets=8, mean_erasure=0.4)
        m = simulate_frame(cfg, "sdd", seed=11)
        for rec in m.transmission_log:
            assert rec.targeted
            assert rec.erased  # at least one user was still incomplete


class TestTamperDetection:
    def _frame(self):
        cfg = SystemConfig(num_users=5, num_packets=7, mean_erasure=0.4)
        m = simulate_frame(cfg, "pct", seed=5)
        assert m.transmission_log, "need a frame that used recovery slots"
        return m

    def test_clean_frame_verifies(self):
        assert verify_accounting_identity(self._frame())

    def test_deleted_transmission_detected(self):
        m = self._frame()
        m.transmission_log.pop(0)
        assert not verify_accounting_identity(m)

    def test_flipped_erasure_detected(self):
        m = self._frame()
        rec = m.transmission_log[0]
        uid = next(iter(rec.erased))
        flipped = dict(rec.erased)
        flipped[uid] = not flipped[uid]
        m.transmission_log[0] = dataclasses.replace(rec, erased=flipped)
        assert not verify_accounting_identity(m)

    def test_corrupted_counter_detected(self):
        m = self._frame()
        victim = next(r for r in m.users if r.delay > 0 or r.erasures > 0)
        bumped = dataclasses.replace(victim, delay=victim.delay + 1)
        m.users[victim.user_id] = bumped
        assert not verify_accounting_identity(m)


class TestAbortPath:
    def _aborted(self):
        cfg = SystemConfig(num_users=6, num_packets=10, mean_erasure=0.5,
                           max_recovery_transmissions=1)
        m = simulate_frame(cfg, "pct", seed=3)
        assert m.aborted
        return m

    def test_cap_flags_the_frame(self):
        m = self._aborted()
        assert m.overall_completion_time is None
        assert len(m.transmission_log) == 1

    def test_identity_and_residuals_refuse_aborted_frames(self):
        m = self._aborted()
        with pytest.raises(ValueError):
            verify_accounting_identity(m)
        with pytest.raises(ValueError):
            theorem1_residual(m)

    def test_aggregate_refuses_all_aborted(self):
        with pytest.raises(ValueError):
            aggregate([self._aborted()])


class TestResiduals:
    def test_zero_erasure_projection_is_exact(self):
        cfg = SystemConfig(num_users=3, num_packets=5, mean_erasure=0.0,
                           erasure_spread=0.0)
        states = [
            UserState(0, 0.0, {2, 3, 4}, {0, 1}, wants0=2),
            UserState(1, 0.0, {0, 1, 4}, {2, 3}, wants0=2),
            UserState(2, 0.0, set(range(5)), set(), wants0=0,
                      completion_time=0),
        ]
        m = run_recovery(cfg, states, "pct", np.random.default_rng(0))
        res = theorem1_residual(m)
        # with p = 0 every received slot is useful, so completion lands
        # exactly on wants0 + delay and the residual vanishes
        assert np.all(res == 0.0)

    def test_matches_the_erasure_recount_identity(self):
        cfg = SystemConfig(num_users=8, num_packets=10, mean_erasure=0.4)
        m = simulate_frame(cfg, "pct", seed=21)
        res = theorem1_residual(m)
        for i, r in enumerate(m.users):
            if r.wants0 == 0:
                assert res[i] == 0.0
                continue
            # residual equals the centered erasure count, rescaled
            expected = (r.erasures - r.p * (r.completion_time - 1)) / (1.0 - r.p)
            assert res[i] == pytest.approx(expected, abs=1e-9)

    def test_already_complete_users_are_pinned_to_zero(self):
        cfg = SystemConfig(num_users=2, num_packets=3, mean_erasure=0.0,
                           erasure_spread=0.0)
        m = simulate_frame(cfg, "pct", seed=0)
        assert np.all(theorem1_residual(m) == 0.0)


class TestAggregate:
    def test_means_over_synthetic_frames(self):
        s = aggregate(
            [frame_with(10, 4), frame_with(20, 6)],
            policy="pct", num_users=2, num_packets=3, mean_erasure=0.25,
        )
        assert s.mean_ct == 15.0
        assert s.mean_sdd == 5.0
        assert s.mean_dd_per_user == 2.5
        assert s.iterations == 2 and s.aborted_frames == 0
        assert s.policy == "pct" and s.num_users == 2
        assert s.num_packets == 3 and s.mean_erasure == 0.25

    def test_single_frame_has_zero_stderr(self):
        s = aggregate([frame_with(10, 4)])
        assert s.stderr_ct == 0.0 and s.stderr_sdd == 0.0
        assert s.stderr_dd_per_user == 0.0

    def test_stderr_formula(self):
        s = aggregate([frame_with(10, 0), frame_with(20, 0)])
        # sample sd is sqrt(50); stderr divides by sqrt(n)
        assert s.stderr_ct == pytest.approx((50.0 ** 0.5) / (2 ** 0.5))

    def test_aborted_frames_excluded_from_means_but_counted(self):
        s = aggregate([frame_with(10, 4), frame_with(20, 6),
                       frame_with(0, 0, aborted=True)])
        assert s.mean_ct == 15.0 and s.iterations == 3
        assert s.aborted_frames == 1


class TestDeterminism:
    def test_identical_seeds_reproduce_the_frame_exactly(self):
        cfg = SystemConfig(num_users=6, num_packets=8, mean_erasure=0.4,
                           base_seed=9)
        for policy in ("pct", "minct", "sdd"):
            a = simulate_frame(cfg, policy, seed=(9, 0, 0))
            b = simulate_frame(cfg, policy, seed=(9, 0, 0))
            assert a == b

    def test_different_policies_share_the_channel_stream(self):
        # common random numbers: the initial phase depends only on the seed
        cfg = SystemConfig(num_users=6, num_packets=8, mean_erasure=0.4)
        frames = {
            policy: simulate_frame(cfg, policy, seed=(0, 0, 7))
            for policy in ("pct", "minct", "sdd")
        }
        wants = {p: f.initial_wants for p, f in frames.items()}
        assert wants["pct"] == wants["minct"] == wants["sdd"]
        ps = {p: [u.p for u in f.users] for p, f in frames.items()}
        assert ps["pct"] == ps["minct"] == ps["sdd"]
