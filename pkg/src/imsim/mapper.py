"""Bits <-> codeword <-> frame signal.

Frame bit layout (big-endian within every field)::

    [ time-index bits | slot 0: ant(g=0) .. ant(g=G-1) sym | slot 1: ... ]

where "slot k" is the k-th *active* slot in ascending slot order. A frame
signal is a complex vector of length ``T * N_t``, slot-major: slot ``t``
occupies entries ``[t*N_t, (t+1)*N_t)`` and group ``g`` within it the block
``[g*N_tg, (g+1)*N_tg)``.
"""

from __future__ import annotations

import dataclasses
import functools
import math
from collections.abc import Iterator, Sequence

import numpy as np

from imsim.config import ValidatedConfig, _require, codebook_size
from imsim.constellation import Constellation, build_constellation

__all__ = [
    "DEFAULT_ENUMERATION_CAP",
    "BIT_TIME_INDEX",
    "BIT_ANTENNA_INDEX",
    "BIT_SYMBOL",
    "Codeword",
    "CodebookTooLarge",
    "bits_per_frame",
    "rank_to_tap",
    "tap_to_rank",
    "tap_table",
    "encode_frame",
    "decode_frame",
    "codeword_to_signal",
    "enumerate_codebook",
    "bit_categories",
    "encode_bits",
    "decode_fields",
    "codebook_fields",
]

DEFAULT_ENUMERATION_CAP = 2**22

BIT_TIME_INDEX = 0
BIT_ANTENNA_INDEX = 1
BIT_SYMBOL = 2


class CodebookTooLarge(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class Codeword:
    """Structured transmit decision for one frame.

    ``antenna_indices[k][g]`` is the active antenna of group ``g`` in the k-th
    active slot; ``symbol_indices[k]`` the constellation label sent there.
    """

    tap_rank: int
    antenna_indices: tuple[tuple[int, ...], ...]
    symbol_indices: tuple[int, ...]

    def tap(self, config: ValidatedConfig) -> tuple[int, ...]:
        return rank_to_tap(self.tap_rank, config.frame_slots, config.active_slots)


def bits_per_frame(config: ValidatedConfig) -> int:
    return _require(config).bits_per_frame


def rank_to_tap(rank: int, frame_slots: int, active_slots: int) -> tuple[int, ...]:
    """The ``rank``-th ``active_slots``-subset of ``range(frame_slots)`` in
    lexicographic order of sorted tuples.

    Only the first ``2**floor(log2 C(T, T_a))`` subsets are valid patterns.
    """
    usable = 1 << (math.comb(frame_slots, active_slots).bit_length() - 1)
    if not 0 <= rank < usable:
        raise ValueError(f"TAP rank {rank} outside [0, {usable})")
    tap = []
    slot = 0
    for remaining in range(active_slots, 0, -1):
        # skip every combination that starts with `slot`
        while True:
            block = math.comb(frame_slots - slot - 1, remaining - 1)
            if rank < block:
                break
            rank -= block
            slot += 1
        tap.append(slot)
        slot += 1
    return tuple(tap)


def tap_to_rank(tap: Sequence[int], frame_slots: int, active_slots: int) -> int:
    tap = tuple(int(t) for t in tap)
    if len(tap) != active_slots or list(tap) != sorted(set(tap)) or (tap and not 0 <= tap[0] <= tap[-1] < frame_slots):
        raise ValueError(f"invalid TAP {tap} for T={frame_slots}, T_a={active_slots}")
    rank = 0
    prev = -1
    for k, slot in enumerate(tap):
        remaining = active_slots - k
        for skipped in range(prev + 1, slot):
            rank += math.comb(frame_slots - skipped - 1, remaining - 1)
        prev = slot
    usable = 1 << (math.comb(frame_slots, active_slots).bit_length() - 1)
    if rank >= usable:
        raise ValueError(f"TAP {tap} is not among the {usable} usable patterns")
    return rank


@functools.lru_cache(maxsize=None)
def _tap_table(frame_slots: int, active_slots: int) -> np.ndarray:
    usable = 1 << (math.comb(frame_slots, active_slots).bit_length() - 1)
    table = np.array([rank_to_tap(r, frame_slots, active_slots) for r in range(usable)], dtype=np.int64)
    table.setflags(write=False)
    return table.reshape(usable, active_slots)


def tap_table(config: ValidatedConfig) -> np.ndarray:
    """Active-slot indices of every usable TAP, shape ``(2**p, T_a)``, row = rank."""
    return _tap_table(config.frame_slots, config.active_slots)


def tap_masks(config: ValidatedConfig) -> np.ndarray:
    """Boolean on/off pattern of every usable TAP, shape ``(2**p, T)``."""
    table = tap_table(config)
    masks = np.zeros((table.shape[0], config.frame_slots), dtype=bool)
    np.put_along_axis(masks, table, True, axis=1)
    return masks


def bit_categories(config: ValidatedConfig) -> np.ndarray:
    """Category code (time-index / antenna-index / symbol) of each frame bit."""
    config = _require(config)
    slot = [BIT_ANTENNA_INDEX] * (config.groups * config.antenna_bits_per_group) + [BIT_SYMBOL] * config.symbol_bits
    return np.array([BIT_TIME_INDEX] * config.tap_bits + slot * config.active_slots, dtype=np.int8)


def _field_spec(config: ValidatedConfig) -> list[int]:
    """Widths of the integer fields of a frame, in bit order."""
    slot = [config.antenna_bits_per_group] * config.groups + [config.symbol_bits]
    return [config.tap_bits] + slot * config.active_slots


def _pack(bits: np.ndarray, widths: list[int]) -> np.ndarray:
    """Split rows of ``bits`` into big-endian integer fields, shape (F, len(widths))."""
    out = np.zeros((bits.shape[0], len(widths)), dtype=np.int64)
    start = 0
    for k, width in enumerate(widths):
        for j in range(width):
            out[:, k] = (out[:, k] << 1) | bits[:, start + j]
        start += width
    return out


def _unpack(fields: np.ndarray, widths: list[int]) -> np.ndarray:
    total = sum(widths)
    bits = np.zeros((fields.shape[0], total), dtype=np.uint8)
    start = 0
    for k, width in enumerate(widths):
        for j in range(width):
            bits[:, start + j] = (fields[:, k] >> (width - 1 - j)) & 1
        start += width
    return bits


def encode_bits(bits: np.ndarray, config: ValidatedConfig):
    """Vectorized :func:`encode_frame` over rows of a ``(F, B)`` bit array.

    Returns
    -------
    tap_rank : ndarray, shape (F,)
    antennas : ndarray, shape (F, T_a, G)
    symbols : ndarray, shape (F, T_a)
    """
    config = _require(config)
    bits = np.asarray(bits, dtype=np.int64)
    if bits.ndim != 2 or bits.shape[1] != config.bits_per_frame:
        raise ValueError(f"expected rows of {config.bits_per_frame} bits, got shape {bits.shape}")
    fields = _pack(bits, _field_spec(config))
    per_slot = fields[:, 1:].reshape(bits.shape[0], config.active_slots, config.groups + 1)
    return fields[:, 0], per_slot[:, :, :-1], per_slot[:, :, -1]


def decode_fields(tap_rank, antennas, symbols, config: ValidatedConfig) -> np.ndarray:
    """Inverse of :func:`encode_bits`; returns a ``(F, B)`` uint8 array."""
    config = _require(config)
    tap_rank = np.asarray(tap_rank, dtype=np.int64)
    n = tap_rank.shape[0]
    per_slot = np.concatenate(
        [np.asarray(antennas, dtype=np.int64).reshape(n, config.active_slots, config.groups),
         np.asarray(symbols, dtype=np.int64).reshape(n, config.active_slots, 1)],
        axis=2,
    )
    fields = np.concatenate([tap_rank[:, None], per_slot.reshape(n, -1)], axis=1)
    return _unpack(fields, _field_spec(config))


def encode_frame(bits: Sequence[int], config: ValidatedConfig) -> Codeword:
    config = _require(config)
    bits = np.asarray(bits, dtype=np.int64).ravel()
    if bits.shape[0] != config.bits_per_frame:
        raise ValueError(f"expected {config.bits_per_frame} bits, got {bits.shape[0]}")
    if np.any((bits != 0) & (bits != 1)):
        raise ValueError("bits must be 0 or 1")
    rank, ant, sym = encode_bits(bits[None, :], config)
    return Codeword(
        tap_rank=int(rank[0]),
        antenna_indices=tuple(tuple(int(a) for a in row) for row in ant[0]),
        symbol_indices=tuple(int(s) for s in sym[0]),
    )


def _check_codeword(codeword: Codeword, config: ValidatedConfig) -> None:
    ant = np.asarray(codeword.antenna_indices)
    sym = np.asarray(codeword.symbol_indices)
    if ant.shape != (config.active_slots, config.groups) or sym.shape != (config.active_slots,):
        raise ValueError("codeword dimensions do not match the configuration")
    if np.any(ant < 0) or np.any(ant >= config.group_size) or np.any(sym < 0) or np.any(sym >= config.mod_order):
        raise ValueError("codeword index out of range")
    if not 0 <= codeword.tap_rank < tap_table(config).shape[0]:
        raise ValueError(f"TAP rank {codeword.tap_rank} out of range")


def decode_frame(codeword: Codeword, config: ValidatedConfig) -> np.ndarray:
    config = _require(config)
    _check_codeword(codeword, config)
    bits = decode_fields(
        [codeword.tap_rank],
        np.asarray(codeword.antenna_indices, dtype=np.int64)[None],
        np.asarray(codeword.symbol_indices, dtype=np.int64)[None],
        config,
    )
    return bits[0]


def signal_positions(tap_rank, antennas, config: ValidatedConfig) -> np.ndarray:
    """Flat frame-signal index of every nonzero entry, shape ``(F, T_a, G)``."""
    slots = tap_table(config)[np.asarray(tap_rank)]
    offsets = np.arange(config.groups) * config.group_size
    return slots[..., None] * config.n_tx + offsets + np.asarray(antennas)


def codeword_to_signal(codeword: Codeword, config: ValidatedConfig, constellation: Constellation | None = None) -> np.ndarray:
    """Frame signal of ``codeword`` (complex, length ``T * N_t``).

    Every active antenna carries ``alpha * x`` where ``x`` is the slot's
    symbol; ``alpha`` is ``1/sqrt(G)`` under per-slot unit energy, else 1.
    """
    config = _require(config)
    _check_codeword(codeword, config)
    if constellation is None:
        constellation = build_constellation(config.mod_order, config.constellation_family)
    signal = np.zeros(config.frame_slots * config.n_tx, dtype=np.complex128)
    pos = signal_positions([codeword.tap_rank], np.asarray(codeword.antenna_indices)[None], config)[0]
    values = config.amplitude * constellation.symbols[np.asarray(codeword.symbol_indices)]
    signal[pos] = np.broadcast_to(values[:, None], pos.shape)
    return signal


def _check_cap(config: ValidatedConfig, cap: int) -> int:
    size = codebook_size(config)
    if size > cap:
        raise CodebookTooLarge(f"codebook has {size} entries, above the enumeration cap {cap}")
    return size


def codebook_fields(config: ValidatedConfig, cap: int = DEFAULT_ENUMERATION_CAP):
    """Fields of every codeword in bit-lexicographic order (see :func:`encode_bits`)."""
    config = _require(config)
    size = _check_cap(config, cap)
    nbits = config.bits_per_frame
    index = np.arange(size, dtype=np.int64)
    bits = ((index[:, None] >> np.arange(nbits - 1, -1, -1)) & 1).astype(np.uint8)
    return encode_bits(bits, config)


def enumerate_codebook(
    config: ValidatedConfig, constellation: Constellation | None = None, cap: int = DEFAULT_ENUMERATION_CAP
) -> Iterator[tuple[Codeword, np.ndarray]]:
    """Yield every ``(codeword, signal)`` pair once, ordered by its bit string."""
    config = _require(config)
    _check_cap(config, cap)
    if constellation is None:
        constellation = build_constellation(config.mod_order, config.constellation_family)
    tap_rank, antennas, symbols = codebook_fields(config, cap)
    for k in range(tap_rank.shape[0]):
        codeword = Codeword(
            tap_rank=int(tap_rank[k]),
            antenna_indices=tuple(map(tuple, antennas[k].tolist())),
            symbol_indices=tuple(symbols[k].tolist()),
        )
        yield codeword, codeword_to_signal(codeword, config, constellation)
