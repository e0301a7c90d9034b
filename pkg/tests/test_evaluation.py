import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from monopmbm.evaluation import MatchCriterion, clear_mot, format_table, frames_from_states, iou, metrics_csv, \
    pooled
from monopmbm.models import CameraModel, ModelError, ObjectState

CRIT3 = MatchCriterion.euclidean3d()


def p(x, y=0.0, z=20.0):
    return np.array([x, y, z], dtype=float)


class TestIoU:
    def test_identical(self):
        assert iou((0, 0, 2, 2), (0, 0, 2, 2)) == 1.0

    def test_disjoint(self):
        assert iou((0, 0, 1, 1), (5, 5, 6, 6)) == 0.0

    def test_half_overlap(self):
        assert iou((0, 0, 2, 2), (1, 0, 3, 2)) == 1 / 3

    def test_degenerate(self):
        with pytest.raises(ModelError):
            iou((0, 0, 0, 1), (0, 0, 1, 1))


class TestFixtures:
    def test_perfect(self):
        gt = [{7: p(0)} for _ in range(10)]
        m = clear_mot(gt, [{1: p(0)} for _ in range(10)])
        assert (m.mota, m.ids, m.precision, m.recall, m.motp) == (1.0, 0, 1.0, 1.0, 0.0)

    def test_two_misses(self):
        gt = [{7: p(0)} for _ in range(10)]
        tr = [{} if k in (3, 4) else {1: p(0)} for k in range(10)]
        m = clear_mot(gt, tr)
        assert m.mota == pytest.approx(0.8) and m.recall == pytest.approx(0.8)
        assert (m.fn, m.fp, m.ids, m.frag) == (2, 0, 0, 1)

    def test_id_swap(self):
        gt = [{1: p(0), 2: p(10)} for _ in range(10)]
        tr = [{10: p(0), 20: p(10)} if k < 5 else {20: p(0), 10: p(10)} for k in range(10)]
        m = clear_mot(gt, tr)
        assert m.ids == 2 and m.frag >= 2
        assert m.mota == pytest.approx(1 - 2 / 20)

    def test_three_frame_hand_computation(self):
        gt = [{1: p(0), 2: p(10)}, {1: p(0), 2: p(10)}, {1: p(0)}]
        tr = [{1: p(0.1), 2: p(10.2)}, {1: p(0.3), 3: p(50)}, {4: p(0.4)}]
        m = clear_mot(gt, tr)
        assert (m.tp, m.fp, m.fn, m.ids, m.frag) == (4, 1, 1, 1, 1)
        assert m.mota == pytest.approx(0.4)
        assert m.motp == pytest.approx(25.0)
        assert (m.precision, m.recall, m.f1) == pytest.approx((0.8, 0.8, 0.8))
        assert (m.mt, m.ml) == (0.5, 0.0)
        assert m.far == pytest.approx(1 / 3)

    def test_carry_over_beats_closer_estimate(self):
        gt = [{1: p(0)}, {1: p(0)}]
        tr = [{5: p(1.0)}, {5: p(1.0), 6: p(0.0)}]
        m = clear_mot(gt, tr)
        assert m.ids == 0 and m.fp == 1

    def test_threshold(self):
        m = clear_mot([{1: p(0)}], [{1: p(3.5)}])
        assert (m.tp, m.fp, m.fn) == (0, 1, 1)

    def test_iou_mode(self):
        crit = MatchCriterion.iou2d()
        m = clear_mot([{1: np.array([0, 0, 2, 2.0])}], [{1: np.array([1, 0, 3, 2.0])}], crit)
        assert m.tp == 0  # 1/3 < 0.5
        m = clear_mot([{1: np.array([0, 0, 2, 2.0])}], [{1: np.array([0.2, 0, 2.2, 2.0])}], crit)
        assert m.tp == 1 and m.motp == pytest.approx(1.8 / 2.2)

    def test_frame_mismatch(self):
        with pytest.raises(ValueError):
            clear_mot([{}], [{}, {}])

    def test_mostly_lost(self):
        m = clear_mot([{1: p(0)} for _ in range(10)], [{} for _ in range(10)])
        assert (m.mt, m.ml, m.mota) == (0.0, 1.0, 0.0)


@st.composite
def sequences(draw):
    n_frames = draw(st.integers(1, 8))
    pos = st.floats(-10, 10)
    gt = [{g: p(draw(pos)) for g in draw(st.sets(st.integers(0, 4)))} for _ in range(n_frames)]
    tr = [{t: p(draw(pos)) for t in draw(st.sets(st.integers(0, 4)))} for _ in range(n_frames)]
    return gt, tr


@given(sequences(), st.permutations(range(5)))
@settings(max_examples=200, deadline=None)
def test_relabeling_invariance(seq, perm):
    gt, tr = seq
    base = clear_mot(gt, tr)
    renamed = clear_mot(gt, [{100 + perm[t]: v for t, v in f.items()} for f in tr])
    assert (base.ids, base.frag, base.tp, base.fp, base.fn) == (renamed.ids, renamed.frag, renamed.tp, renamed.fp,
                                                                renamed.fn)


@given(sequences())
@settings(max_examples=200, deadline=None)
def test_counts_consistent(seq):
    m = clear_mot(*seq)
    assert m.mota <= 1.0
    assert (m.mota == 1.0) == (m.fn == m.fp == m.ids == 0) or m.n_gt == 0
    assert m.tp + m.fn == m.n_gt
    if m.tp + m.fp:
        assert m.precision == m.tp / (m.tp + m.fp)
    assert sum(m.per_frame_tp) == m.tp and sum(m.per_frame_fp) == m.fp and sum(m.per_frame_fn) == m.fn


def test_pooled_sums_counts():
    a = clear_mot([{1: p(0)}] * 4, [{1: p(0)}] * 4)
    b = clear_mot([{1: p(0)}] * 4, [{}] * 4)
    m = pooled([a, b])
    assert (m.tp, m.fn, m.n_frames, m.n_trajectories) == (4, 4, 8, 2)
    assert m.mota == pytest.approx(0.5)
    with pytest.raises(ValueError):
        pooled([a, clear_mot([{}], [{}], MatchCriterion.iou2d())])


def test_states_and_reports():
    cam = CameraModel()
    s = ObjectState(0.0, 0.0, 10.0, 0, 0, 0, 40.0, 20.0)
    boxes = frames_from_states([[(3, s)]], MatchCriterion.iou2d(), cam)
    np.testing.assert_allclose(boxes[0][3], [cam.c_u - 20, cam.c_v - 10, cam.c_u + 20, cam.c_v + 10])
    pos = frames_from_states([[(3, s)]], CRIT3)
    np.testing.assert_array_equal(pos[0][3], [0.0, 0.0, 10.0])

    m = clear_mot([{1: p(0)}], [{1: p(0)}])
    table = format_table([("seq", m)])
    for col in ("MOTA", "MOTP", "MT", "ML", "IDS", "FRAG", "F1", "Pre", "Rec", "FAR"):
        assert col in table.splitlines()[0]
    assert "100.00%" in table
    csv_text = metrics_csv([("seq", m)])
    assert csv_text.splitlines()[1].startswith("seq,3D,1.0,")
