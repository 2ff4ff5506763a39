"""Property checks over randomly drawn valid configurations."""

from math import comb, log2

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from imsim.config import (
    ConfigError,
    Family,
    Normalization,
    Scheme,
    SchemeConfig,
    codebook_size,
    spectral_efficiency,
    validate,
)
from imsim.mapper import codeword_to_signal, decode_fields, decode_frame, encode_bits, encode_frame


@st.composite
def configs(draw, max_bits=40):
    scheme = draw(st.sampled_from(list(Scheme)))
    family = draw(st.sampled_from(list(Family)))
    if scheme.grouped:
        groups = draw(st.integers(2, 5))
        group_size = 2 ** draw(st.integers(1, 3))
        n_tx = groups * group_size
    else:
        groups, n_tx = None, 2 ** draw(st.integers(1, 5))
    if family is Family.QAM:
        m = draw(st.sampled_from([2, 4, 16, 64]))
    else:
        m = 2 ** draw(st.integers(1, 6))
    extra = {}
    if scheme.time_indexed:
        t = draw(st.integers(1, 8))
        extra = dict(frame_slots=t, active_slots=draw(st.integers(1, t)), taps=draw(st.integers(1, t)))
    config = validate(SchemeConfig(
        scheme, n_tx=n_tx, n_rx=draw(st.integers(1, 4)), mod_order=m, groups=groups, constellation_family=family,
        normalization=draw(st.sampled_from(list(Normalization))), **extra,
    ))
    return config


@given(configs())
def test_size_matches_bits_and_rate(config):
    size = codebook_size(config)
    assert size & (size - 1) == 0
    assert size.bit_length() - 1 == config.bits_per_frame
    assert spectral_efficiency(config) * (config.frame_slots + config.taps - 1) == config.bits_per_frame


@given(configs())
def test_bit_count_from_parts(config):
    p = int(log2(comb(config.frame_slots, config.active_slots)))
    per_slot = config.groups * int(log2(config.group_size)) + int(log2(config.mod_order))
    assert config.bits_per_frame == p + config.active_slots * per_slot


@settings(max_examples=60)
@given(configs(), st.integers(0, 2**32 - 1))
def test_bits_roundtrip(config, seed):
    rng = np.random.default_rng(seed)
    bits = rng.integers(0, 2, (16, config.bits_per_frame), dtype=np.uint8)
    assert np.array_equal(decode_fields(*encode_bits(bits, config), config), bits)
    assert np.array_equal(decode_frame(encode_frame(bits[0], config), config), bits[0])


@settings(max_examples=60)
@given(configs(), st.integers(0, 2**32 - 1))
def test_signal_structure(config, seed):
    bits = np.random.default_rng(seed).integers(0, 2, config.bits_per_frame, dtype=np.uint8)
    cw = encode_frame(bits, config)
    slots = codeword_to_signal(cw, config).reshape(config.frame_slots, config.n_tx)
    active = np.flatnonzero(np.abs(slots).sum(axis=1))
    assert active.tolist() == list(cw.tap(config))
    for row in slots[active]:
        groups = row.reshape(config.groups, config.group_size)
        assert (np.count_nonzero(groups, axis=1) == 1).all()
        # one symbol shared by every group of the slot
        assert np.allclose(row[row != 0], row[row != 0][0])
    if config.constellation_family is Family.PSK:
        per_slot = np.sum(np.abs(slots[active]) ** 2, axis=1)
        expected = 1.0 if config.normalization is Normalization.PER_SLOT_UNIT else float(config.groups)
        np.testing.assert_allclose(per_slot, expected, rtol=1e-12)


@given(configs(), st.sampled_from(["n_tx", "mod_order", "active_slots"]))
def test_broken_field_is_named(config, field):
    raw = dict(
        scheme=config.scheme, n_tx=config.n_tx, n_rx=config.n_rx, mod_order=config.mod_order,
        groups=config.groups if config.scheme.grouped else None,
        frame_slots=config.frame_slots if config.scheme.time_indexed else None,
        active_slots=config.active_slots if config.scheme.time_indexed else None,
    )
    if field == "active_slots":
        if not config.scheme.time_indexed:
            return
        raw["active_slots"] = config.frame_slots + 1
    elif field == "mod_order":
        raw["mod_order"] = 3
    else:
        raw["n_tx"] = 0
    with pytest.raises(ConfigError) as info:
        validate(SchemeConfig(**raw))
    assert info.value.field == field
