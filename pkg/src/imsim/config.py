"""Scheme parameterization, validation and closed-form rate / codebook sizes.

Four schemes share one code path: SM and PSM are degenerate single-slot
frames (``T = T_a = L = 1``), SM and TI-SM are single-group PSM / TI-PSM
(``G = 1``, ``N_tg = N_t``).
"""

from __future__ import annotations

import dataclasses
import enum
import math
from fractions import Fraction

__all__ = [
    "Scheme",
    "Family",
    "Normalization",
    "ChannelTimeModel",
    "ConfigError",
    "SchemeConfig",
    "ValidatedConfig",
    "validate",
    "spectral_efficiency",
    "codebook_size",
    "time_index_bits",
    "is_power_of_two",
]


class Scheme(str, enum.Enum):
    SM = "SM"
    PSM = "PSM"
    TI_SM = "TI_SM"
    TI_PSM = "TI_PSM"

    @property
    def time_indexed(self) -> bool:
        return self in (Scheme.TI_SM, Scheme.TI_PSM)

    @property
    def grouped(self) -> bool:
        return self in (Scheme.PSM, Scheme.TI_PSM)

    @property
    def label(self) -> str:
        return self.value.replace("_", "-")


class Family(str, enum.Enum):
    PSK = "PSK"
    QAM = "QAM"


class Normalization(str, enum.Enum):
    #: all active antennas of a slot share unit energy (amplitude 1/sqrt(G))
    PER_SLOT_UNIT = "PER_SLOT_UNIT"
    #: every active antenna radiates the unit-energy symbol
    PER_ANTENNA_UNIT = "PER_ANTENNA_UNIT"


class ChannelTimeModel(str, enum.Enum):
    PER_SLOT_IID = "PER_SLOT_IID"
    PER_FRAME_QUASI_STATIC = "PER_FRAME_QUASI_STATIC"


class ConfigError(ValueError):
    """A scheme configuration violates one named rule.

    Attributes
    ----------
    field : str
        Name of the offending :class:`SchemeConfig` field.
    rule : str
        Short identifier of the violated invariant.
    """

    def __init__(self, field: str, rule: str, message: str):
        super().__init__(f"{field}: {message} [{rule}]")
        self.field = field
        self.rule = rule


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def _log2_exact(n: int) -> int:
    return n.bit_length() - 1


def time_index_bits(frame_slots: int, active_slots: int) -> int:
    """Number of bits carried by the choice of active slots, floor(log2 C(T, T_a))."""
    return _log2_exact(math.comb(frame_slots, active_slots))


@dataclasses.dataclass(frozen=True)
class SchemeConfig:
    """Raw (unchecked) scheme parameters.

    ``groups``, ``group_size``, ``frame_slots``, ``active_slots`` and ``taps``
    may be left as ``None``; :func:`validate` fills them in where the scheme
    pins them (``G = 1`` for SM/TI-SM, ``T = T_a = L = 1`` for SM/PSM).
    """

    scheme: Scheme
    n_tx: int
    n_rx: int
    mod_order: int
    groups: int | None = None
    group_size: int | None = None
    constellation_family: Family = Family.PSK
    frame_slots: int | None = None
    active_slots: int | None = None
    taps: int | None = None
    normalization: Normalization = Normalization.PER_SLOT_UNIT
    channel_time_model: ChannelTimeModel = ChannelTimeModel.PER_SLOT_IID


@dataclasses.dataclass(frozen=True)
class ValidatedConfig(SchemeConfig):
    """A :class:`SchemeConfig` whose invariants have been checked.

    Only :func:`validate` should construct these; every other module accepts
    nothing else.
    """

    groups: int = 1
    group_size: int = 2
    frame_slots: int = 1
    active_slots: int = 1
    taps: int = 1

    @property
    def tap_bits(self) -> int:
        return time_index_bits(self.frame_slots, self.active_slots)

    @property
    def antenna_bits_per_group(self) -> int:
        return _log2_exact(self.group_size)

    @property
    def symbol_bits(self) -> int:
        return _log2_exact(self.mod_order)

    @property
    def slot_bits(self) -> int:
        return self.groups * self.antenna_bits_per_group + self.symbol_bits

    @property
    def bits_per_frame(self) -> int:
        return self.tap_bits + self.active_slots * self.slot_bits

    @property
    def slot_hypotheses(self) -> int:
        """Candidate (antenna tuple, symbol) pairs for one active slot."""
        return self.group_size**self.groups * self.mod_order

    @property
    def amplitude(self) -> float:
        if self.normalization is Normalization.PER_SLOT_UNIT:
            return 1.0 / math.sqrt(self.groups)
        return 1.0

    @property
    def label(self) -> str:
        text = f"{self.scheme.label} {self.n_tx}x{self.n_rx}"
        if self.scheme.grouped:
            text += f" G{self.groups}"
        return text + f" {self.mod_order}-{self.constellation_family.value}"

    def replace(self, **changes) -> "ValidatedConfig":
        raw = {f.name: getattr(self, f.name) for f in dataclasses.fields(SchemeConfig)}
        raw.update(changes)
        return validate(SchemeConfig(**raw))


def _positive(name: str, value) -> None:
    if not isinstance(value, int) or isinstance(value, bool) or value < 1:
        raise ConfigError(name, "positive_integer", f"must be a positive integer, got {value!r}")


def _pinned(name: str, value: int | None, pinned: int, scheme: Scheme) -> int:
    if value is None:
        return pinned
    if value != pinned:
        raise ConfigError(name, "pinned_by_scheme", f"{scheme.label} requires {name} = {pinned}, got {value}")
    return value


def validate(config: SchemeConfig) -> ValidatedConfig:
    """Check every invariant of ``config`` and return the validated form.

    Raises
    ------
    ConfigError
        On the first violated rule; ``field`` names the offending parameter.
    """
    scheme = Scheme(config.scheme)
    family = Family(config.constellation_family)
    for name in ("n_tx", "n_rx", "mod_order"):
        _positive(name, getattr(config, name))
    for name in ("groups", "group_size", "frame_slots", "active_slots", "taps"):
        value = getattr(config, name)
        if value is not None:
            _positive(name, value)

    n_tx = config.n_tx
    if scheme.grouped:
        groups = config.groups
        if groups is None:
            if config.group_size is None:
                raise ConfigError("groups", "missing", f"{scheme.label} needs groups or group_size")
            groups = n_tx // config.group_size
        if n_tx <= 2:
            raise ConfigError("n_tx", "grouped_min_antennas", f"{scheme.label} needs n_tx > 2, got {n_tx}")
        if groups <= 1:
            raise ConfigError("groups", "grouped_min_groups", f"{scheme.label} needs groups > 1, got {groups}")
        if 2 * groups > n_tx:
            raise ConfigError("groups", "groups_at_most_half", f"groups must be <= n_tx/2, got {groups} for n_tx={n_tx}")
    else:
        groups = _pinned("groups", config.groups, 1, scheme)
        if not is_power_of_two(n_tx):
            raise ConfigError("n_tx", "power_of_two", f"{scheme.label} needs a power-of-two n_tx, got {n_tx}")

    if n_tx % groups:
        raise ConfigError("groups", "equal_split", f"n_tx={n_tx} is not divisible into {groups} equal groups")
    group_size = n_tx // groups
    if config.group_size is not None and config.group_size != group_size:
        raise ConfigError("group_size", "equal_split", f"groups * group_size must equal n_tx ({groups} * {config.group_size} != {n_tx})")
    if group_size < 2:
        raise ConfigError("group_size", "group_min_size", f"group_size must be >= 2, got {group_size}")
    if not is_power_of_two(group_size):
        raise ConfigError("group_size", "power_of_two", f"group_size must be a power of two, got {group_size}")

    m = config.mod_order
    if not is_power_of_two(m) or m < 2:
        raise ConfigError("mod_order", "power_of_two", f"mod_order must be a power of two >= 2, got {m}")
    if family is Family.QAM and m != 2 and math.isqrt(m) ** 2 != m:
        raise ConfigError("mod_order", "square_qam", f"QAM needs a square order (or 2), got {m}")

    if scheme.time_indexed:
        if config.frame_slots is None or config.active_slots is None:
            raise ConfigError("frame_slots", "missing", f"{scheme.label} needs frame_slots and active_slots")
        frame_slots, active_slots = config.frame_slots, config.active_slots
        taps = 1 if config.taps is None else config.taps
    else:
        frame_slots = _pinned("frame_slots", config.frame_slots, 1, scheme)
        active_slots = _pinned("active_slots", config.active_slots, 1, scheme)
        taps = _pinned("taps", config.taps, 1, scheme)
    if active_slots > frame_slots:
        raise ConfigError("active_slots", "active_within_frame", f"active_slots ({active_slots}) exceeds frame_slots ({frame_slots})")

    return ValidatedConfig(
        scheme=scheme,
        n_tx=n_tx,
        n_rx=config.n_rx,
        mod_order=m,
        groups=groups,
        group_size=group_size,
        constellation_family=family,
        frame_slots=frame_slots,
        active_slots=active_slots,
        taps=taps,
        normalization=Normalization(config.normalization),
        channel_time_model=ChannelTimeModel(config.channel_time_model),
    )


def _require(config) -> ValidatedConfig:
    if not isinstance(config, ValidatedConfig):
        raise TypeError("expected a ValidatedConfig; call validate() first")
    return config


def spectral_efficiency(config: ValidatedConfig) -> Fraction:
    """Exact rate in bits per channel use.

    Time-indexed schemes spread the frame's bits over ``T + L - 1`` channel
    uses (data slots plus cyclic prefix).
    """
    config = _require(config)
    if not config.scheme.time_indexed:
        return Fraction(config.slot_bits)
    return Fraction(config.bits_per_frame, config.frame_slots + config.taps - 1)


def codebook_size(config: ValidatedConfig) -> int:
    """Number of distinct frame signals the transmitter can emit."""
    config = _require(config)
    per_slot = config.group_size**config.groups * config.mod_order
    return 2**config.tap_bits * per_slot**config.active_slots
