"""Experiment descriptions: INI parsing, figure presets, CSV and SVG output."""

from __future__ import annotations

import configparser
import csv
import dataclasses
import io
import math
import warnings
from fractions import Fraction
from pathlib import Path

import numpy as np

from imsim.config import (
    ChannelTimeModel,
    ConfigError,
    Family,
    Normalization,
    Scheme,
    SchemeConfig,
    ValidatedConfig,
    spectral_efficiency,
    time_index_bits,
    validate,
)
from imsim.montecarlo import BerRecord, CeeScope, CsiMode, StoppingRule, run_sweep

__all__ = [
    "CSV_HEADER",
    "Curve",
    "ExperimentSpec",
    "ExperimentError",
    "PRESETS",
    "preset",
    "solve_mod_order",
    "parse_snr_grid",
    "load_experiment",
    "load_schemes",
    "run_experiment",
    "write_csv",
    "read_csv",
    "render_svg",
    "restrict_csi",
]

CSV_HEADER = ["label", "snr_db", "frames", "bit_errors", "bit_errors_ti", "bit_errors_ai", "bit_errors_sym", "ber", "ci95", "stop_reason"]


class ExperimentError(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class Curve:
    label: str
    config: ValidatedConfig
    csi: CsiMode = CsiMode.PERFECT


@dataclasses.dataclass(frozen=True)
class ExperimentSpec:
    name: str
    curves: tuple[Curve, ...]
    snr_grid: tuple[float, ...]
    stopping: StoppingRule = StoppingRule()
    master_seed: int = 1
    ber_floor: float | None = None
    cee_scope: CeeScope = CeeScope.FULL
    per_bit_snr: bool = False
    allow_unequal_rate: bool = False
    notes: tuple[str, ...] = ()

    def __post_init__(self):
        labels = [c.label for c in self.curves]
        if len(set(labels)) != len(labels):
            raise ExperimentError(f"duplicate curve labels in {labels}")
        rates = {spectral_efficiency(c.config) for c in self.curves}
        if len(rates) > 1:
            text = ", ".join(f"{c.label}: {spectral_efficiency(c.config)}" for c in self.curves)
            if not self.allow_unequal_rate:
                raise ExperimentError(f"curves do not share one rate ({text})")
            warnings.warn(f"comparing curves of unequal rate ({text})", stacklevel=2)


def solve_mod_order(scheme: Scheme, n_tx: int, bpcu: int | Fraction, groups: int | None = None,
                    frame_slots: int = 4, active_slots: int = 2, taps: int = 1) -> tuple[int, str]:
    """Constellation order giving ``bpcu``, and a printable derivation."""
    scheme = Scheme(scheme)
    bpcu = Fraction(bpcu)
    groups = groups if scheme.grouped else 1
    index_bits = groups * int(math.log2(n_tx // groups))
    if scheme.time_indexed:
        p = time_index_bits(frame_slots, active_slots)
        uses = frame_slots + taps - 1
        per_slot = (bpcu * uses - p) / active_slots
        derivation = f"({p} + {active_slots}*({index_bits} + log2 M)) / {uses} = {bpcu}"
    else:
        per_slot = bpcu
        derivation = f"{index_bits} + log2 M = {bpcu}"
    symbol_bits = per_slot - index_bits
    if symbol_bits.denominator != 1 or symbol_bits < 1:
        raise ExperimentError(f"{scheme.label} {n_tx} tx cannot reach {bpcu} bpcu: {derivation} has no integer solution")
    m = 2 ** int(symbol_bits)
    return m, f"{derivation}  =>  log2 M = {symbol_bits}, M = {m}"


def _scheme(scheme, n_tx, bpcu, groups=None, family=Family.PSK, normalization=Normalization.PER_SLOT_UNIT):
    scheme = Scheme(scheme)
    m, derivation = solve_mod_order(scheme, n_tx, bpcu, groups)
    ti = scheme.time_indexed
    config = validate(SchemeConfig(
        scheme=scheme, n_tx=n_tx, n_rx=4, mod_order=m, groups=groups if scheme.grouped else None,
        constellation_family=family, frame_slots=4 if ti else None, active_slots=2 if ti else None,
        normalization=normalization,
    ))
    name = f"{scheme.label} {n_tx}x4" + (f" G{groups}" if scheme.grouped else "")
    return name, config, f"{name}: {derivation}"


_FIGURES = {
    # name: (bpcu, schemes, csi modes)
    "fig2": (8, [("SM", 8, None), ("PSM", 8, 4), ("PSM", 10, 5)], (CsiMode.PERFECT, CsiMode.CEE)),
    "fig3": (4, [("PSM", 4, 2), ("PSM", 6, 3), ("TI_SM", 8, None), ("TI_PSM", 8, 4), ("TI_PSM", 12, 3)], (CsiMode.PERFECT,)),
    "fig4": (4, [("TI_SM", 8, None), ("TI_PSM", 8, 4), ("TI_PSM", 12, 3)], (CsiMode.PERFECT, CsiMode.CEE)),
    "fig5": (4, [("PSM", 4, 2), ("PSM", 6, 3), ("TI_PSM", 8, 4), ("TI_PSM", 12, 3)], (CsiMode.PERFECT, CsiMode.CEE)),
}
PRESETS = tuple(_FIGURES)


def curve_label(name: str, csi: CsiMode) -> str:
    return name if CsiMode(csi) is CsiMode.PERFECT else f"{name} CEE"


def preset(name: str, *, family: Family | str = Family.PSK, normalization: Normalization | str = Normalization.PER_SLOT_UNIT,
           snr_grid=tuple(float(s) for s in range(0, 31)), csi: CsiMode | str | None = None, **kwargs) -> ExperimentSpec:
    """Canned equal-rate scheme set; constellation orders derived from the rate equations."""
    if name not in _FIGURES:
        raise ExperimentError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    bpcu, schemes, modes = _FIGURES[name]
    if csi is not None:
        modes = (CsiMode(csi),)
    curves, notes = [], []
    for scheme, n_tx, groups in schemes:
        label, config, note = _scheme(scheme, n_tx, bpcu, groups, Family(family), Normalization(normalization))
        notes.append(note)
        curves.extend(Curve(curve_label(label, mode), config, mode) for mode in modes)
    return ExperimentSpec(name=name, curves=tuple(curves), snr_grid=tuple(snr_grid), notes=tuple(notes), **kwargs)


def parse_snr_grid(text: str) -> tuple[float, ...]:
    """``start:step:stop`` (inclusive), a comma list, or empty."""
    text = text.strip()
    if not text:
        return ()
    if ":" in text:
        try:
            start, step, stop = (float(x) for x in text.split(":"))
        except ValueError:
            raise ExperimentError(f"bad SNR grid {text!r}; expected start:step:stop") from None
        if step <= 0:
            raise ExperimentError("SNR step must be positive")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return tuple(round(start + k * step, 10) for k in range(max(count, 0)))
    return tuple(float(x) for x in text.split(","))


_ENUM_KEYS = {
    "scheme": Scheme,
    "family": Family,
    "constellation_family": Family,
    "normalization": Normalization,
    "channel_time_model": ChannelTimeModel,
}
_INT_KEYS = ("n_tx", "n_rx", "groups", "group_size", "mod_order", "frame_slots", "active_slots", "taps")


def _scheme_section(name: str, section) -> tuple[str, ValidatedConfig, str | None]:
    fields = {}
    for key in _INT_KEYS:
        if key in section:
            try:
                fields[key] = int(section[key])
            except ValueError:
                raise ConfigError(key, "positive_integer", f"not an integer: {section[key]!r}") from None
    for key, kind in _ENUM_KEYS.items():
        if key in section:
            try:
                value = kind(section[key].strip().upper().replace("-", "_"))
            except ValueError:
                raise ConfigError(key, "unknown_value", f"{section[key]!r} is not one of {[k.value for k in kind]}") from None
            fields["constellation_family" if key == "family" else key] = value
    if "scheme" not in fields:
        raise ConfigError("scheme", "missing", f"section [{name}] has no scheme")
    note = None
    if "mod_order" not in fields:
        if "bpcu" not in section:
            raise ConfigError("mod_order", "missing", f"section [{name}] needs mod_order or bpcu")
        groups = fields.get("groups")
        if groups is None and "group_size" in fields:
            groups = fields["n_tx"] // fields["group_size"]
        fields["mod_order"], derivation = solve_mod_order(
            fields["scheme"], fields["n_tx"], Fraction(section["bpcu"]), groups,
            fields.get("frame_slots", 4), fields.get("active_slots", 2), fields.get("taps", 1),
        )
        note = f"{name}: {derivation}"
    for key in ("n_tx", "n_rx"):
        if key not in fields:
            raise ConfigError(key, "missing", f"section [{name}] has no {key}")
    return name, validate(SchemeConfig(**fields)), note


def _read_ini(path) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path, encoding="utf-8") as handle:
            parser.read_file(handle)
    except configparser.Error as exc:
        raise ExperimentError(f"{path}: {exc}") from None
    return parser


def _scheme_sections(parser):
    sections = [s for s in parser.sections() if s.lower().startswith("scheme")]
    if not sections:
        raise ExperimentError("no [scheme ...] sections found")
    for section in sections:
        name = section.split(None, 1)[1].strip() if " " in section.strip() else section
        yield name, parser[section]


def load_schemes(path) -> list[tuple[str, ValidatedConfig, str | None]]:
    """Every ``[scheme <label>]`` section of an INI file, validated."""
    return [_scheme_section(name, section) for name, section in _scheme_sections(_read_ini(path))]


def load_experiment(path, **overrides) -> ExperimentSpec:
    """Experiment from an INI file; keyword overrides replace ``[experiment]`` values."""
    parser = _read_ini(path)
    exp = parser["experiment"] if parser.has_section("experiment") else {}
    curves, notes = [], []
    default_csi = exp.get("csi", "perfect")
    for name, section in _scheme_sections(parser):
        label, config, note = _scheme_section(name, section)
        if note:
            notes.append(note)
        for mode in section.get("csi", default_csi).split(","):
            mode = CsiMode(mode.strip().upper())
            curves.append(Curve(curve_label(label, mode), config, mode))
    stopping = StoppingRule(
        min_bit_errors=int(exp.get("min_bit_errors", StoppingRule.min_bit_errors)),
        max_frames=int(float(exp.get("max_frames", StoppingRule.max_frames))),
        min_frames=int(float(exp.get("min_frames", StoppingRule.min_frames))),
    )
    floor = exp.get("ber_floor")
    settings = dict(
        name=exp.get("name", Path(path).stem),
        curves=tuple(curves),
        snr_grid=parse_snr_grid(exp.get("snr", "0:2:20")),
        stopping=stopping,
        master_seed=int(exp.get("seed", 1)),
        ber_floor=float(floor) if floor else None,
        cee_scope=CeeScope(exp.get("cee_scope", "full").strip().upper()),
        per_bit_snr=exp.get("snr_axis", "es").strip().lower() == "eb",
        allow_unequal_rate=exp.get("equal_rate", "strict").strip().lower() == "warn",
        notes=tuple(notes),
    )
    csi = overrides.pop("csi", None)
    settings.update({k: v for k, v in overrides.items() if v is not None})
    if csi is not None:
        settings["curves"] = restrict_csi(settings["curves"], CsiMode(csi))
    return ExperimentSpec(**settings)


def restrict_csi(curves, mode: CsiMode) -> tuple[Curve, ...]:
    """One curve per scheme, all under ``mode``."""
    seen, out = set(), []
    for curve in curves:
        base = curve.label[:-4] if curve.csi is CsiMode.CEE else curve.label
        if base not in seen:
            seen.add(base)
            out.append(Curve(curve_label(base, mode), curve.config, mode))
    return tuple(out)


def run_experiment(spec: ExperimentSpec, threads: int = 1, progress=None) -> list[BerRecord]:
    records = []
    for curve in spec.curves:
        sweep = run_sweep(
            curve.config, spec.snr_grid, curve.csi, spec.stopping, spec.master_seed,
            ber_floor=spec.ber_floor, label=curve.label, threads=threads,
            cee_scope=spec.cee_scope, per_bit_snr=spec.per_bit_snr,
        )
        if progress is not None:
            for record in sweep:
                progress(record)
        records.extend(sweep)
    return records


def _format_float(x: float) -> str:
    return f"{x:.6e}"


def write_csv(records, target) -> None:
    """Write records as CSV to a path or text stream (``\\n`` line endings)."""
    if isinstance(target, (str, Path)):
        with open(target, "w", encoding="utf-8", newline="") as handle:
            write_csv(records, handle)
        return
    writer = csv.writer(target, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in records:
        writer.writerow([
            r.label, f"{r.snr_db:g}", r.frames_run, r.bit_errors_total, r.bit_errors_time_index,
            r.bit_errors_antenna_index, r.bit_errors_symbol, _format_float(r.ber), _format_float(r.ci95_halfwidth), r.stop_reason,
        ])


def read_csv(source) -> dict[str, list[tuple[float, float]]]:
    """``{label: [(snr_db, ber), ...]}`` from a results CSV."""
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8", newline="") as handle:
            return read_csv(handle)
    reader = csv.DictReader(source)
    if reader.fieldnames is None or not {"label", "snr_db", "ber"} <= set(reader.fieldnames):
        raise ExperimentError("not a results CSV: needs label, snr_db and ber columns")
    curves: dict[str, list[tuple[float, float]]] = {}
    for row in reader:
        curves.setdefault(row["label"], []).append((float(row["snr_db"]), float(row["ber"])))
    return curves


_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"]


def render_svg(records, title: str = "", width: int = 720, height: int = 480) -> str:
    """Log-scale BER chart; CEE curves dashed, perfect-CSI curves solid."""
    curves: dict[str, list[BerRecord]] = {}
    for r in records:
        curves.setdefault(r.label, []).append(r)
    left, right, top, bottom = 70, 220, 40, 50
    plot_w, plot_h = width - left - right, height - top - bottom
    points = [(r.snr_db, r.ber) for r in records if r.ber > 0]
    snrs = [r.snr_db for r in records] or [0.0, 1.0]
    x0, x1 = min(snrs), max(snrs)
    if x1 == x0:
        x1 = x0 + 1.0
    if points:
        d0 = math.floor(math.log10(min(b for _, b in points)))
        d1 = math.ceil(math.log10(max(b for _, b in points)))
    else:
        d0, d1 = -6, 0
    d1 = max(d1, d0 + 1)

    def px(snr):
        return left + (snr - x0) / (x1 - x0) * plot_w

    def py(ber):
        return top + (d1 - math.log10(ber)) / (d1 - d0) * plot_h

    out = io.StringIO()
    out.write(f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">\n')
    out.write(f'<rect x="{left}" y="{top}" width="{plot_w}" height="{plot_h}" fill="white" stroke="black"/>\n')
    for decade in range(d0, d1 + 1):
        y = py(10.0**decade)
        out.write(f'<line x1="{left}" y1="{y:.2f}" x2="{left + plot_w}" y2="{y:.2f}" stroke="#ddd"/>\n')
        out.write(f'<text x="{left - 6}" y="{y + 4:.2f}" text-anchor="end">1e{decade}</text>\n')
    for tick in np.linspace(x0, x1, 7):
        x = px(tick)
        out.write(f'<line x1="{x:.2f}" y1="{top}" x2="{x:.2f}" y2="{top + plot_h}" stroke="#eee"/>\n')
        out.write(f'<text x="{x:.2f}" y="{top + plot_h + 16}" text-anchor="middle">{tick:g}</text>\n')
    out.write(f'<text x="{left + plot_w / 2}" y="{height - 10}" text-anchor="middle">SNR (dB)</text>\n')
    out.write(f'<text x="18" y="{top + plot_h / 2}" text-anchor="middle" transform="rotate(-90 18 {top + plot_h / 2})">BER</text>\n')
    if title:
        out.write(f'<text x="{left + plot_w / 2}" y="{top - 14}" text-anchor="middle" font-size="14">{_escape(title)}</text>\n')

    # perfect-CSI and CEE curves of one scheme share a colour
    bases = []
    for label in curves:
        base = label[:-4] if label.endswith(" CEE") else label
        if base not in bases:
            bases.append(base)
    for k, (label, recs) in enumerate(curves.items()):
        base = label[:-4] if label.endswith(" CEE") else label
        colour = _PALETTE[bases.index(base) % len(_PALETTE)]
        dash = ' stroke-dasharray="6,4"' if label.endswith(" CEE") else ""
        pts = [(px(r.snr_db), py(r.ber)) for r in sorted(recs, key=lambda r: r.snr_db) if r.ber > 0]
        if pts:
            path = " ".join(f"{x:.2f},{y:.2f}" for x, y in pts)
            out.write(f'<polyline points="{path}" fill="none" stroke="{colour}" stroke-width="1.8"{dash}/>\n')
            for x, y in pts:
                out.write(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="2.5" fill="{colour}"/>\n')
        ly = top + 14 + 18 * k
        lx = left + plot_w + 12
        out.write(f'<line x1="{lx}" y1="{ly}" x2="{lx + 26}" y2="{ly}" stroke="{colour}" stroke-width="1.8"{dash}/>\n')
        out.write(f'<text x="{lx + 32}" y="{ly + 4}">{_escape(label)}</text>\n')
    out.write("</svg>\n")
    return out.getvalue()


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
