import json
import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from delightcap.config import ConfigError, from_dict, substream_seed
from delightcap.data_engine import DataConfig
from delightcap.io import (FormatError, load_checkpoint, parse_value, read_config, read_jsonl, read_pfm,
                           save_checkpoint, tree_digests, write_config, write_jsonl, write_pfm)

finite32 = st.floats(-1e6, 1e6, allow_nan=False, width=32)


@given(arrays(np.float32, st.tuples(st.integers(1, 7), st.integers(1, 7), st.sampled_from([1, 3])),
              elements=finite32))
def test_pfm_roundtrip_is_exact(tmp_path_factory, img):
    p = tmp_path_factory.mktemp("pfm") / "x.pfm"
    write_pfm(p, img)
    back = read_pfm(p)
    assert back.shape == (img.shape if img.shape[2] == 3 else img.shape[:2])
    np.testing.assert_array_equal(back.reshape(img.shape), img)


def test_pfm_bottom_row_first(tmp_path):
    img = np.zeros((2, 3), np.float32)
    img[0] = 1.0  # top row
    write_pfm(tmp_path / "a.pfm", img)
    raw = (tmp_path / "a.pfm").read_bytes()
    body = raw.split(b"-1.0\n", 1)[1]
    first_stored_row = struct.unpack("<3f", body[:12])
    assert first_stored_row == (0.0, 0.0, 0.0)


def test_pfm_big_endian_is_read(tmp_path):
    data = np.arange(6, dtype=">f4").reshape(2, 3)
    (tmp_path / "b.pfm").write_bytes(b"Pf\n3 2\n1.0\n" + data[::-1].tobytes())
    np.testing.assert_array_equal(read_pfm(tmp_path / "b.pfm"), data.astype(np.float32))


@pytest.mark.parametrize("blob", [b"P6\n1 1\n-1\n", b"PF\n2\n-1.0\n", b"PF\n4 4\n-1.0\n\x00\x00"])
def test_pfm_rejects_malformed(tmp_path, blob):
    (tmp_path / "bad.pfm").write_bytes(blob)
    with pytest.raises(FormatError):
        read_pfm(tmp_path / "bad.pfm")


def test_config_roundtrip_and_comments(tmp_path):
    cfg = {"seed": 3, "lr": 1e-4, "regime": "mixed_dlm", "hdris": ["a", "b"], "flag": True}
    write_config(tmp_path / "c.cfg", cfg)
    text = (tmp_path / "c.cfg").read_text() + "# trailing comment\n\nname = plain words\n"
    (tmp_path / "c.cfg").write_text(text)
    back = read_config(tmp_path / "c.cfg")
    assert dict(back) == {**cfg, "name": "plain words"}
    assert parse_value(" 7 ") == 7 and parse_value("x") == "x"


def test_config_rejects_lines_without_equals(tmp_path):
    (tmp_path / "c.cfg").write_text("seed 3\n")
    with pytest.raises(FormatError, match="c.cfg:1"):
        read_config(tmp_path / "c.cfg")


def test_from_dict_names_unknown_key():
    with pytest.raises(ConfigError) as err:
        from_dict(DataConfig, {"seed": 1, "n_olatt": 3})
    assert err.value.key == "n_olatt"
    assert from_dict(DataConfig, {"seed": 5}).seed == 5


def test_checkpoint_roundtrip(tmp_path, rng):
    params = {"b.weight": rng.normal(size=(3, 4)), "a": rng.normal(size=(5,)), "s": np.float32(2.0)}
    save_checkpoint(tmp_path / "m.ckpt", {"kind": "base", "k": 4}, params)
    cfg, back = load_checkpoint(tmp_path / "m.ckpt")
    assert cfg == {"kind": "base", "k": 4}
    assert list(back) == ["a", "b.weight", "s"]
    for k in params:
        np.testing.assert_array_equal(back[k], np.asarray(params[k], np.float32))


def test_checkpoint_bytes_depend_only_on_content(tmp_path):
    a = {"x": np.ones(3), "y": np.zeros((2, 2))}
    b = {"y": np.zeros((2, 2)), "x": np.ones(3)}
    save_checkpoint(tmp_path / "a", {"q": 1, "p": 2}, a)
    save_checkpoint(tmp_path / "b", {"p": 2, "q": 1}, b)
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


def test_checkpoint_rejects_foreign_file(tmp_path):
    (tmp_path / "x").write_bytes(b"not a checkpoint at all")
    with pytest.raises(FormatError):
        load_checkpoint(tmp_path / "x")


def test_jsonl_and_digests(tmp_path):
    recs = [{"b": 1, "a": [1, 2]}, {"z": "q"}]
    write_jsonl(tmp_path / "r.jsonl", recs)
    assert read_jsonl(tmp_path / "r.jsonl") == recs
    assert (tmp_path / "r.jsonl").read_text().splitlines()[0] == json.dumps(recs[0], sort_keys=True)
    d = tree_digests(tmp_path)
    assert list(d) == ["r.jsonl"] and len(d["r.jsonl"]) == 64


def test_substreams_are_stable_and_distinct():
    a = substream_seed(0, "pair", "train", "olat", 3)
    assert a == substream_seed(0, "pair", "train", "olat", 3)
    assert a != substream_seed(0, "pair", "train", "olat", 4)
    assert a != substream_seed(1, "pair", "train", "olat", 3)
    assert 0 <= a < 2 ** 63
