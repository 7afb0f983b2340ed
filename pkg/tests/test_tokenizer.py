"""Tokenizer: CJK chars split one-by-one, Latin/digit runs stay whole,
vocab ids are stable and reserved tokens keep their slots."""
import numpy as np
import pytest
from hypothesis import given, strategies as st

from goaldial.tokenizer import (BOS, EOS, PAD, RESERVED, UNK, Vocab, is_cjk,
                                tokenize)


def test_tokenize_mixed_text():
    assert tokenize("我喜欢 jazz 音乐2020!") == [
        "我", "喜", "欢", "jazz", "音", "乐", "2020!"]


def test_tokenize_handles_empty_and_space():
    assert tokenize("") == []
    assert tokenize("   \t\n") == []
    assert tokenize("a  b") == ["a", "b"]


def test_cjk_detection():
    assert is_cjk("中")
    assert is_cjk("。")  # CJK punctuation range
    assert not is_cjk("a")
    assert not is_cjk("!")


def test_vocab_reserved_prefix_and_roundtrip():
    v = Vocab.build(["你好 world", "world 再见"])
    for i, tok in enumerate(RESERVED):
        assert v.token_to_id[tok] == i
    assert v.pad_id == 0
    ids = v.encode_text("你好 world")
    assert v.unk_id not in ids
    assert v.decode(ids) == ["你", "好", "world"]
    assert v.encode(["never-seen"]) == [v.unk_id]


def test_vocab_build_is_deterministic_across_orderings():
    a = Vocab.build(["甲 乙 alpha", "丙 beta"])
    b = Vocab.build(["丙 beta", "甲 乙 alpha"])
    assert a.id_to_token == b.id_to_token


def test_vocab_min_freq_filters():
    v = Vocab.build(["rare common", "common"], min_freq=2)
    assert "common" in v
    assert "rare" not in v


def test_to_text_spacing_rules():
    v = Vocab.build(["play some jazz", "听 音 乐"])
    latin = v.encode_text("play some jazz")
    assert v.to_text(latin) == "play some jazz"
    cjk = v.encode_text("听音乐")
    assert v.to_text(cjk) == "听音乐"
    # spaces only appear between two Latin runs, never at CJK boundaries
    mixed = v.encode_text("听 jazz 乐")
    assert v.to_text(mixed) == "听jazz乐"
    # specials render as nothing
    assert v.to_text([v.bos_id, v.eos_id, v.pad_id]) == ""


def test_vocab_json_roundtrip():
    v = Vocab.build(["你好 world 2020"])
    w = Vocab.from_json(v.to_json())
    assert w.id_to_token == v.id_to_token
    assert w.token_to_id == v.token_to_id


@given(st.text(alphabet=st.characters(codec="utf-8"), max_size=80))
def test_tokenize_loses_only_whitespace(text):
    toks = tokenize(text)
    assert "".join(toks) == "".join(text.split())
    for t in toks:
        assert t  # no empty tokens
        if len(t) > 1:
            assert not any(is_cjk(c) for c in t)
