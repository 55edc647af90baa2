import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pannav.errors import CorruptMaskFile, EndOfStream
from pannav.masks import FileMaskSource, PanopticFrame, PanopticMask, mask_to_frame, threshold_frame, write_mask
from pannav.taxonomy import UNKNOWN_ID, default_registry

REG = default_registry()
IDS = REG.ids
ROAD, DIRT, GRAVEL, PAVEMENT, PERSON = (REG.id_of(n) for n in ("road", "dirt", "gravel", "pavement", "person"))


def frame_with(pixel_probs, instance=0):
    """1x1 frame with the given {class_id: p}."""
    probs = np.zeros((1, 1, len(IDS)), np.float32)
    for cid, p in pixel_probs.items():
        probs[0, 0, list(IDS).index(cid)] = p
    return PanopticFrame(probs, IDS.copy(), np.full((1, 1), instance, np.int32))


def test_confident_pixel_kept():
    assert threshold_frame(frame_with({ROAD: 0.9}), 0.5).class_id[0, 0] == ROAD


def test_split_confidence_is_unknown():
    m = threshold_frame(frame_with({DIRT: 0.4, GRAVEL: 0.4, PAVEMENT: 0.2}), 0.5)
    assert m.class_id[0, 0] == UNKNOWN_ID


def test_tau_zero_keeps_argmax_except_empty():
    assert threshold_frame(frame_with({DIRT: 0.1, GRAVEL: 0.05}), 0.0).class_id[0, 0] == DIRT
    assert threshold_frame(frame_with({}), 0.0).class_id[0, 0] == UNKNOWN_ID


def test_instance_kept_only_on_things():
    m = threshold_frame(frame_with({PERSON: 0.8}, instance=4), 0.5)
    assert m.class_id[0, 0] == PERSON and m.instance[0, 0] == 4
    m = threshold_frame(frame_with({PERSON: 0.4}, instance=4), 0.5)
    assert m.class_id[0, 0] == UNKNOWN_ID and m.instance[0, 0] == 0


def test_threshold_boundary_inclusive():
    assert threshold_frame(frame_with({ROAD: 0.5}), 0.5).class_id[0, 0] == ROAD


def test_frame_validation():
    f = frame_with({ROAD: 0.7, GRAVEL: 0.7})
    with pytest.raises(ValueError):
        f.validate(REG)
    f = frame_with({ROAD: 0.9}, instance=3)
    with pytest.raises(ValueError):
        f.validate(REG)
    frame_with({PERSON: 0.9}, instance=3).validate(REG)


def random_frames():
    k = len(IDS)

    @st.composite
    def build(draw):
        h = draw(st.integers(1, 6))
        w = draw(st.integers(1, 6))
        raw = draw(arrays(np.float32, (h, w, k), elements=st.floats(0, 1, width=32)))
        mass = draw(arrays(np.float32, (h, w), elements=st.floats(0, 1, width=32)))
        s = raw.sum(axis=2, keepdims=True)
        probs = np.where(s > 0, raw / np.where(s > 0, s, 1) * mass[..., None], 0).astype(np.float32)
        return PanopticFrame(probs, IDS.copy(), np.zeros((h, w), np.int32))

    return build()


@given(random_frames(), st.floats(0, 1), st.floats(0, 1))
def test_threshold_monotone(frame, t1, t2):
    lo, hi = min(t1, t2), max(t1, t2)
    known_lo = threshold_frame(frame, lo).class_id != UNKNOWN_ID
    known_hi = threshold_frame(frame, hi).class_id != UNKNOWN_ID
    assert not np.any(known_hi & ~known_lo)


@given(random_frames(), st.floats(0, 1))
def test_threshold_idempotent_on_one_hot(frame, tau):
    mask = threshold_frame(frame, 0.3)
    again = threshold_frame(mask_to_frame(mask, REG), tau)
    assert again == mask


def make_mask(seed, stamp, h=8, w=10):
    rng = np.random.default_rng(seed)
    cls = rng.choice(IDS, size=(h, w)).astype(np.uint8)
    inst = np.where(REG.thing_lut()[cls] & (cls != 0), rng.integers(1, 300, size=(h, w)), 0).astype(np.int32)
    return PanopticMask(cls, inst, stamp)


def test_file_source_stream(tmp_path):
    masks = [make_mask(i, 0.1 * i) for i in range(3)]
    for i, m in enumerate(masks):
        write_mask(tmp_path, f"f{i}", m)
    src = FileMaskSource(tmp_path, REG)
    got = [threshold_frame(src.next_mask(m.stamp), 0.5) for m in masks]
    assert got == masks
    with pytest.raises(EndOfStream):
        src.next_mask()


def test_file_source_confidence(tmp_path):
    m = make_mask(1, 0.0)
    conf = np.full(m.class_id.shape, 0.4)
    write_mask(tmp_path, "a", m, confidence=conf)
    frame = FileMaskSource(tmp_path, REG).next_mask()
    assert np.all(threshold_frame(frame, 0.5).class_id == UNKNOWN_ID)
    frame = FileMaskSource(tmp_path, REG).next_mask()
    assert threshold_frame(frame, 0.3) == m


def test_corrupt_files(tmp_path):
    with pytest.raises(CorruptMaskFile):
        FileMaskSource(tmp_path)
    write_mask(tmp_path, "a", make_mask(0, 0.0))
    (tmp_path / "a.class.png").write_bytes(b"not a png")
    with pytest.raises(CorruptMaskFile) as e:
        FileMaskSource(tmp_path).next_mask()
    assert "a.class.png" in str(e.value)
