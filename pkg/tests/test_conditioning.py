import numpy as np
import pytest
import torch

from sketchedit.conditioning import (
    CONDITION_CHANNELS,
    ConditionBundle,
    Vocabulary,
    assemble_condition,
    embed_text,
    extract_sketch,
    fuse_sketch,
    masked_source,
    split_condition,
    tokenize,
)
from sketchedit.seeds import stream


def _mask(h, w, editable):
    m = np.ones((h, w, 1), dtype=np.float32)
    for r, c in editable:
        m[r, c, 0] = 0.0
    return m


def test_masked_source_zeroes_editable_pixels():
    x = stream("cond", 0).standard_normal((4, 4, 3)).astype(np.float32)
    m = _mask(4, 4, [(0, 0), (2, 3)])
    out = masked_source(x, m)
    assert np.all(out[0, 0] == 0) and np.all(out[2, 3] == 0)
    np.testing.assert_array_equal(out[1, 1], x[1, 1])


def test_masked_source_dim_check():
    with pytest.raises(ValueError):
        masked_source(np.zeros((4, 4, 3)), np.zeros((5, 4, 1)))


def test_fuse_sketch_routes_by_mask():
    src = np.full((2, 2, 3), -1.0, dtype=np.float32)
    usr = np.full((2, 2, 3), 1.0, dtype=np.float32)
    m = _mask(2, 2, [(0, 1)])
    out = fuse_sketch(src, usr, m)
    np.testing.assert_array_equal(out[0, 1], usr[0, 1])
    np.testing.assert_array_equal(out[0, 0], src[0, 0])


def test_extract_sketch_constant_image_is_blank():
    x = np.full((8, 8, 3), 0.3, dtype=np.float32)
    np.testing.assert_array_equal(extract_sketch(x), np.ones((8, 8, 3), np.float32))


def test_extract_sketch_marks_a_vertical_edge():
    x = np.full((8, 8, 3), 1.0, dtype=np.float32)
    x[:, 4:] = -1.0
    sk = extract_sketch(x)
    assert set(np.unique(sk)) <= {-1.0, 1.0}
    assert np.all(sk[:, 3:5] == -1.0)  # strokes hug the step
    assert np.all(sk[:, 0] == 1.0) and np.all(sk[:, 7] == 1.0)


def test_extract_sketch_brightness_invariant():
    x = stream("cond", 1).uniform(-0.5, 0.5, (16, 16, 3))
    np.testing.assert_array_equal(extract_sketch(x), extract_sketch(x + 0.3))


def test_vocabulary_requires_unk_first():
    with pytest.raises(ValueError):
        Vocabulary(tokens=("red", "<unk>"))
    v = Vocabulary.from_words(["red", "blue", "red"])
    assert v.tokens == ("<unk>", "blue", "red")
    assert len(v) == 3


def test_tokenize_unknown_and_empty():
    v = Vocabulary.from_words(["red", "tee", "with", "plain"])
    assert tokenize("RED tee WITH plain", v) == [v.index["red"], v.index["tee"], v.index["with"], v.index["plain"]]
    assert tokenize("chartreuse tee", v)[0] == 0
    with pytest.raises(ValueError):
        tokenize("   ", v)


def test_embed_text_is_mean_of_rows_and_order_invariant():
    v = Vocabulary.from_words(["a", "b", "c"])
    table = stream("cond", 2).standard_normal((len(v), 6))
    e = embed_text("a c", v, table)
    np.testing.assert_allclose(e, (table[v.index["a"]] + table[v.index["c"]]) / 2, rtol=1e-15)
    np.testing.assert_array_equal(embed_text("a c", v, table), embed_text("c a", v, table))
    # torch table gives the same numbers
    e_t = embed_text("a c", v, torch.from_numpy(table))
    np.testing.assert_allclose(e_t.numpy(), e, rtol=1e-7)


def test_condition_stack_layout_golden():
    """Channel order is frozen: masked source 0-2, mask 3, sketch 4-6."""
    h = w = 2
    x_m = np.arange(h * w * 3, dtype=np.float32).reshape(h, w, 3)
    m = np.ones((h, w, 1), dtype=np.float32)
    x_s = -np.arange(h * w * 3, dtype=np.float32).reshape(h, w, 3)
    text = np.zeros(4, dtype=np.float32)
    stack = assemble_condition(ConditionBundle(x_m=x_m, m=m, x_s=x_s, text=text))
    assert stack.shape == (h, w, CONDITION_CHANNELS)
    want = np.concatenate([x_m, m, x_s], axis=2)
    np.testing.assert_array_equal(stack, want)
    # spot-check the exact slots at one pixel
    np.testing.assert_array_equal(stack[1, 0, 0:3], x_m[1, 0])
    assert stack[1, 0, 3] == 1.0
    np.testing.assert_array_equal(stack[1, 0, 4:7], x_s[1, 0])
    a, b, c = split_condition(stack)
    np.testing.assert_array_equal(a, x_m)
    np.testing.assert_array_equal(b, m)
    np.testing.assert_array_equal(c, x_s)


def test_bundle_rejects_leaky_masked_source():
    x = np.ones((2, 2, 3), dtype=np.float32)
    m = _mask(2, 2, [(0, 0)])
    bundle = ConditionBundle(x_m=x, m=m, x_s=x, text=np.zeros(4))
    with pytest.raises(ValueError, match="leak"):
        bundle.validate()


def test_split_condition_channel_check():
    with pytest.raises(ValueError):
        split_condition(np.zeros((2, 2, 6)))
