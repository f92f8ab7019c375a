"""Decoder and full forward-step behavior."""

import numpy as np
import numpy.testing as npt
import pytest

from sfhand.config import Config
from sfhand.encoders import Role, TokenSequence, tokenize_text
from sfhand.errors import UsageError
from sfhand.hand import BBox, HandPose, HandState, HandType, Trajectory3D
from sfhand.model import DecodedStep, ForecastModel


def tiny_cfg(**kw):
    base = dict(d=16, heads=2, pose_dim=6, num_queries=4, raster=16, patch=8,
                text_len=8, memory_size=3, decoder_layers=2)
    base.update(kw)
    return Config(**base)


def state(ht, cx=0.5, traj=(0, 0, 40.0)):
    return HandState(ht, BBox(cx, 0.5, 0.25, 0.25), HandPose(np.zeros(6)),
                     Trajectory3D(*traj), True)


def run_step(model, frame=None, hands=(), queue=None, **kw):
    frame = np.zeros((model.cfg.raster, model.cfg.raster, 3)) if frame is None else frame
    queue = model.new_queue() if queue is None else queue
    ids = tokenize_text("grab the cup", model.cfg.text_len)
    return model.forward_step(frame, list(hands), queue, instruction_ids=ids, **kw)


class TestDecode:
    def test_output_count_is_num_queries(self):
        m = ForecastModel(tiny_cfg(), seed=0)
        res = run_step(m)
        assert res.decoded.type_logits.value.shape == (4, 3)
        assert res.decoded.boxes.value.shape == (4, 4)
        assert res.decoded.pose.value.shape == (4, 6)
        assert res.decoded.traj.value.shape == (4, 3)

    def test_boxes_sigmoid_bounded(self):
        m = ForecastModel(tiny_cfg(), seed=1)
        res = run_step(m)
        assert np.all(res.decoded.boxes.value > 0) and np.all(res.decoded.boxes.value < 1)

    def test_permuting_tokens_changes_outputs(self):
        # cross-attention keys carry positional additions, so content
        # permutation with positions held fixed must change predictions
        m = ForecastModel(tiny_cfg(), seed=2)
        rng = np.random.default_rng(0)
        vals = rng.normal(0, 1, (10, 16))
        seq = TokenSequence(m.tape.constant(vals), [Role.TEXT] * 10, [None] * 10)
        base = m.decode(seq).stacked_values()
        perm = np.roll(vals, 3, axis=0)
        seq2 = TokenSequence(m.tape.constant(perm), [Role.TEXT] * 10, [None] * 10)
        moved = m.decode(seq2).stacked_values()
        assert np.abs(base - moved).max() > 1e-6


class TestForwardStep:
    def test_token_counts_default_and_ablation(self):
        m = ForecastModel(tiny_cfg(), seed=0)
        res = run_step(m)
        assert len(res.f_me) == 8 + 4 + 2  # text + visual + hand

        m2 = ForecastModel(tiny_cfg(use_text=False), seed=0)
        res2 = m2.forward_step(np.zeros((16, 16, 3)), [], m2.new_queue())
        assert len(res2.f_me) == 4 + 2

        m3 = ForecastModel(tiny_cfg(use_hand=False), seed=0)
        res3 = run_step(m3)
        assert len(res3.f_me) == 8 + 4

        m4 = ForecastModel(tiny_cfg(use_video=False), seed=0)
        res4 = m4.forward_step(None, [state(HandType.LEFT)], m4.new_queue(),
                               instruction_ids=tokenize_text("x", 8))
        assert len(res4.f_me) == 8 + 2

    def test_default_config_f_me_is_82(self):
        m = ForecastModel(Config(decoder_layers=1, text_layers=1, hand_layers=1), seed=0)
        res = m.forward_step(
            np.zeros((64, 64, 3)), [], m.new_queue(),
            instruction_ids=tokenize_text("x", 16),
        )
        assert len(res.f_me) == 82

    def test_identical_steps_differ_only_via_queue(self):
        m = ForecastModel(tiny_cfg(), seed=3)
        frame = np.random.default_rng(1).uniform(0, 1, (16, 16, 3))
        hands = [state(HandType.LEFT)]
        q = m.new_queue()
        r1 = run_step(m, frame=frame, hands=hands, queue=q)
        out1 = r1.decoded.stacked_values()
        r2 = run_step(m, frame=frame, hands=hands, queue=q)
        out2 = r2.decoded.stacked_values()
        assert np.abs(out1 - out2).max() > 0  # queue filled in between

        # after reset, the first step reproduces bitwise
        q.reset()
        m.tape.reset()
        r3 = run_step(m, frame=frame, hands=hands, queue=q)
        npt.assert_array_equal(r3.decoded.stacked_values(), out1)

    def test_enqueue_happens_after_attention(self):
        m = ForecastModel(tiny_cfg(), seed=4)
        q = m.new_queue()
        res = run_step(m, queue=q)
        assert len(q) == 1
        # the enqueued entry is the pre-augmentation embedding
        npt.assert_array_equal(q.entries[0].embedding, res.e_value)

    def test_text_required_when_enabled(self):
        m = ForecastModel(tiny_cfg(), seed=0)
        with pytest.raises(UsageError):
            m.forward_step(np.zeros((16, 16, 3)), [], m.new_queue())

    def test_cached_instruction_matches_fresh_encoding(self):
        m = ForecastModel(tiny_cfg(), seed=5)
        cached = m.encode_instruction("lift the lid")
        frame = np.random.default_rng(2).uniform(0, 1, (16, 16, 3))
        a = m.forward_step(frame, [], m.new_queue(),
                           instruction_ids=tokenize_text("lift the lid", 8))
        b = m.forward_step(frame, [], m.new_queue(), instruction_values=cached)
        npt.assert_allclose(a.decoded.stacked_values(), b.decoded.stacked_values(),
                            atol=1e-12)


class TestSelectHands:
    def make_decoded(self, m, logits):
        n = logits.shape[0]
        return DecodedStep(
            type_logits=m.tape.constant(logits),
            boxes=m.tape.constant(np.full((n, 4), 0.5)),
            pose=m.tape.constant(np.zeros((n, 6))),
            traj=m.tape.constant(np.tile([1.0, 2.0, 3.0], (n, 1))),
        )

    def test_uniform_logits_give_no_hands(self):
        m = ForecastModel(tiny_cfg(), seed=0)
        decoded = self.make_decoded(m, np.zeros((4, 3)))
        assert m.select_hands(decoded) == []

    def test_strong_left_logit_gives_one_left(self):
        m = ForecastModel(tiny_cfg(), seed=0)
        logits = np.zeros((4, 3))
        logits[2, HandType.LEFT.value] = 10.0
        out = m.select_hands(decoded := self.make_decoded(m, logits))
        assert len(out) == 1
        assert out[0].hand_type is HandType.LEFT
        assert out[0].visible

    def test_two_strong_lefts_higher_prob_wins_then_lower_index(self):
        m = ForecastModel(tiny_cfg(), seed=0)
        logits = np.zeros((4, 3))
        logits[1, HandType.LEFT.value] = 8.0
        logits[3, HandType.LEFT.value] = 9.0
        decoded = self.make_decoded(m, logits)
        out = m.select_hands(decoded)
        assert len(out) == 1
        # query 3 has the larger probability; verify via its traj marker
        decoded2 = self.make_decoded(m, logits)
        decoded2.traj.value[3] = [9.0, 9.0, 9.0]
        out2 = m.select_hands(decoded2)
        assert out2[0].traj.x == pytest.approx(9.0)

        # exact tie -> lower query index
        logits_tie = np.zeros((4, 3))
        logits_tie[1, HandType.LEFT.value] = 9.0
        logits_tie[3, HandType.LEFT.value] = 9.0
        decoded3 = self.make_decoded(m, logits_tie)
        decoded3.traj.value[1] = [7.0, 7.0, 7.0]
        out3 = m.select_hands(decoded3)
        assert out3[0].traj.x == pytest.approx(7.0)

    def test_never_two_states_of_same_type(self):
        m = ForecastModel(tiny_cfg(), seed=0)
        rng = np.random.default_rng(3)
        for _ in range(25):
            decoded = self.make_decoded(m, rng.normal(0, 4, (4, 3)))
            out = m.select_hands(decoded)
            types = [s.hand_type for s in out]
            assert len(types) == len(set(types))

    def test_out_of_range_traj_clamped(self):
        m = ForecastModel(tiny_cfg(), seed=0)
        logits = np.zeros((4, 3))
        logits[0, HandType.RIGHT.value] = 20.0
        decoded = self.make_decoded(m, logits)
        decoded.traj.value[0] = [1e6, -1e6, 0.0]
        out = m.select_hands(decoded)
        assert abs(out[0].traj.x) <= 9999.0
