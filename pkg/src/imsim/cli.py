"""Command-line front end: ``imsim rate | codebook | simulate | gap``.

Exit codes: 0 success, 2 usage, 3 invalid configuration or experiment,
4 file system error, 5 curve does not cross the target BER, 6 codebook
larger than the dump cap.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from imsim.config import ConfigError, codebook_size, spectral_efficiency
from imsim.constellation import build_constellation
from imsim.experiments import (
    PRESETS,
    ExperimentError,
    load_experiment,
    load_schemes,
    parse_snr_grid,
    preset,
    read_csv,
    render_svg,
    run_experiment,
    write_csv,
)
from imsim.mapper import CodebookTooLarge, codebook_fields, decode_fields, signal_positions, tap_masks
from imsim.montecarlo import CeeScope, GapError, StoppingRule, snr_at_ber

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_IO = 4
EXIT_NO_CROSSING = 5
EXIT_CAP = 6

_CATEGORIES = (
    (ConfigError, EXIT_CONFIG, "configuration error"),
    (ExperimentError, EXIT_CONFIG, "experiment error"),
    (GapError, EXIT_NO_CROSSING, "gap error"),
    (CodebookTooLarge, EXIT_CAP, "codebook too large"),
    (OSError, EXIT_IO, "i/o error"),
    (ValueError, EXIT_CONFIG, "invalid value"),
)


def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def _source(args):
    if (args.config is None) == (args.preset is None):
        raise ExperimentError("give exactly one of --config or --preset")


def _fmt_complex(z: complex) -> str:
    re, im = round(z.real, 6) + 0.0, round(z.imag, 6) + 0.0
    if im == 0:
        return f"{re:g}"
    if re == 0:
        return f"{im:g}j"
    return f"{re:g}{im:+g}j"


def cmd_rate(args, out) -> int:
    _source(args)
    if args.preset:
        spec = preset(args.preset, family=args.family, normalization=args.normalization)
        rows = []
        for curve in spec.curves:
            if curve.config not in [c for _, c in rows]:
                rows.append((curve.label, curve.config))
        notes = spec.notes
    else:
        loaded = load_schemes(args.config)
        rows = [(name, config) for name, config, _ in loaded]
        notes = tuple(note for _, _, note in loaded if note)
    for note in notes:
        print(f"# {note}", file=out)
    print(f"{'label':<20} {'scheme':<8} {'M':>4} {'bpcu':>8} {'decimal':>9} {'bits/frame':>10} {'codebook size':>14}", file=out)
    for name, config in rows:
        eta = spectral_efficiency(config)
        print(
            f"{name:<20} {config.scheme.label:<8} {config.mod_order:>4} {str(eta):>8} {float(eta):>9.4f} "
            f"{config.bits_per_frame:>10} {codebook_size(config):>14}",
            file=out,
        )
    if len({spectral_efficiency(c) for _, c in rows}) > 1:
        print("# note: schemes do not share one rate", file=out)
    return EXIT_OK


def cmd_codebook(args, out) -> int:
    schemes = load_schemes(args.config)
    if args.scheme is not None:
        schemes = [s for s in schemes if s[0] == args.scheme]
        if not schemes:
            raise ExperimentError(f"no scheme section labelled {args.scheme!r}")
    elif len(schemes) > 1:
        raise ExperimentError("config holds several schemes; pick one with --scheme")
    _, config, _ = schemes[0]
    constellation = build_constellation(config.mod_order, config.constellation_family)

    if args.alphabet:
        # per-group signal set, before the 1/sqrt(G) slot amplitude
        print(f"# per-group alphabet: {config.group_size} antennas x {config.mod_order} symbols", file=out)
        for a in range(config.group_size):
            for symbol in constellation.symbols:
                vector = [_fmt_complex(symbol) if i == a else "0" for i in range(config.group_size)]
                print("[" + ", ".join(vector) + "]", file=out)
        return EXIT_OK

    tap_rank, antennas, symbols = codebook_fields(config, cap=args.cap)
    bits = decode_fields(tap_rank, antennas, symbols, config)
    masks = tap_masks(config).astype(np.uint8)
    positions = signal_positions(tap_rank, antennas, config)
    values = [_fmt_complex(config.amplitude * x) for x in constellation.symbols]
    # codeword k is the k-th bit string, so the rows come out in bit order
    for k in range(tap_rank.shape[0]):
        tap = "".join(map(str, masks[tap_rank[k]]))
        ant = "".join("[" + ",".join(map(str, a)) + "]" for a in antennas[k].tolist())
        sym = "[" + ",".join(map(str, symbols[k].tolist())) + "]"
        nonzero = " ".join(
            f"{pos}:{values[m]}" for row, m in zip(positions[k].tolist(), symbols[k].tolist()) for pos in sorted(row)
        )
        print(f"{''.join(map(str, bits[k]))} tap={tap} ant={ant} sym={sym} x={nonzero}", file=out)
    return EXIT_OK


def _experiment(args):
    stopping = None
    if args.min_errors or args.max_frames or args.min_frames:
        base = StoppingRule()
        stopping = StoppingRule(
            min_bit_errors=args.min_errors or base.min_bit_errors,
            max_frames=args.max_frames or base.max_frames,
            min_frames=args.min_frames or min(base.min_frames, args.max_frames or base.min_frames),
        )
    overrides = dict(
        snr_grid=parse_snr_grid(args.snr) if args.snr is not None else None,
        master_seed=args.seed,
        stopping=stopping,
        ber_floor=args.ber_floor,
        cee_scope=CeeScope(args.cee_scope.upper()) if args.cee_scope else None,
        per_bit_snr=True if args.snr_axis == "eb" else (False if args.snr_axis == "es" else None),
        allow_unequal_rate=True if args.allow_unequal_rate else None,
    )
    if args.preset:
        kwargs = {k: v for k, v in overrides.items() if v is not None}
        return preset(args.preset, family=args.family, normalization=args.normalization, csi=args.csi, **kwargs)
    return load_experiment(args.config, csi=args.csi, **overrides)


def cmd_simulate(args, out) -> int:
    _source(args)
    spec = _experiment(args)
    target = Path(args.out)
    target.mkdir(parents=True, exist_ok=True)
    if not os.access(target, os.W_OK):
        raise PermissionError(f"output directory {target} is not writable")
    for note in spec.notes:
        print(f"# {note}", file=out)

    def progress(record):
        if not args.quiet:
            print(f"{record.label:<24} {record.snr_db:6g} dB  ber={record.ber:.3e}  frames={record.frames_run}  ({record.stop_reason})", file=out)

    records = run_experiment(spec, threads=args.threads, progress=progress)
    csv_path, svg_path = target / f"{spec.name}.csv", target / f"{spec.name}.svg"
    write_csv(records, csv_path)
    svg_path.write_text(render_svg(records, title=spec.name), encoding="utf-8")
    print(f"wrote {csv_path} and {svg_path}", file=out)
    return EXIT_OK


def _curve(ref: str):
    path, _, label = ref.partition("#")
    curves = read_csv(path)
    if not label:
        if len(curves) != 1:
            raise ExperimentError(f"{path} holds {len(curves)} curves; select one with {path}#<label>")
        label = next(iter(curves))
    if label not in curves:
        raise ExperimentError(f"no curve {label!r} in {path}; have {sorted(curves)}")
    return label, curves[label]


def cmd_gap(args, out) -> int:
    label_a, curve_a = _curve(args.curve_a)
    label_b, curve_b = _curve(args.curve_b)
    snr_a, bracket_a = snr_at_ber(curve_a, args.target_ber)
    snr_b, bracket_b = snr_at_ber(curve_b, args.target_ber)
    for label, snr, ((s0, b0), (s1, b1)) in ((label_a, snr_a, bracket_a), (label_b, snr_b, bracket_b)):
        print(f"{label}: {snr:.3f} dB at BER {args.target_ber:g} (between {s0:g} dB/{b0:.3e} and {s1:g} dB/{b1:.3e})", file=out)
    print(f"gap ({label_b} - {label_a}): {snr_b - snr_a:.3f} dB", file=out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="imsim", description="Index-modulation MIMO link simulator.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log engine progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def source(p):
        p.add_argument("--config", help="INI file with [scheme <label>] sections")
        p.add_argument("--preset", choices=PRESETS, help="canned figure experiment")
        p.add_argument("--family", default="PSK", type=str.upper, choices=["PSK", "QAM"], help="constellation family for presets")
        p.add_argument("--normalization", default="PER_SLOT_UNIT", type=str.upper,
                       choices=["PER_SLOT_UNIT", "PER_ANTENNA_UNIT"], help="power normalization for presets")

    rate = sub.add_parser("rate", help="print rates and codebook sizes")
    source(rate)
    rate.set_defaults(func=cmd_rate)

    codebook = sub.add_parser("codebook", help="dump every codeword of one scheme")
    codebook.add_argument("--config", required=True)
    codebook.add_argument("--scheme", help="label of the scheme section to dump")
    codebook.add_argument("--cap", type=_positive_int, default=1 << 20, help="refuse codebooks larger than this")
    codebook.add_argument("--alphabet", action="store_true", help="print the per-group signal set instead")
    codebook.set_defaults(func=cmd_codebook)

    simulate = sub.add_parser("simulate", help="run a BER experiment, write CSV and SVG")
    source(simulate)
    simulate.add_argument("--seed", type=_seed)
    simulate.add_argument("--snr", help="start:step:stop in dB (inclusive) or a comma list")
    simulate.add_argument("--csi", type=str.upper, choices=["PERFECT", "CEE"], help="run every scheme under this CSI mode only")
    simulate.add_argument("--out", default=".", help="output directory")
    simulate.add_argument("--threads", type=_positive_int, default=1, help="worker threads (speed only)")
    simulate.add_argument("--min-errors", type=_positive_int)
    simulate.add_argument("--max-frames", type=_positive_int)
    simulate.add_argument("--min-frames", type=_positive_int)
    simulate.add_argument("--ber-floor", type=float, help="stop a curve once BER falls below this")
    simulate.add_argument("--cee-scope", choices=["full", "blocks"])
    simulate.add_argument("--snr-axis", choices=["es", "eb"])
    simulate.add_argument("--allow-unequal-rate", action="store_true")
    simulate.add_argument("-q", "--quiet", action="store_true")
    simulate.set_defaults(func=cmd_simulate)

    gap = sub.add_parser("gap", help="SNR gap between two CSV curves at a target BER")
    gap.add_argument("curve_a", help="file.csv or file.csv#label")
    gap.add_argument("curve_b", help="file.csv or file.csv#label")
    gap.add_argument("--target-ber", type=float, default=1e-4)
    gap.set_defaults(func=cmd_gap)
    return parser


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        code = args.func(args, out)
        out.flush()
        return code
    except BrokenPipeError:
        # reader went away (``| head``); silence the flush at exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return EXIT_OK
    except Exception as exc:
        for kind, code, category in _CATEGORIES:
            if isinstance(exc, kind):
                print(f"imsim: {category}: {exc}", file=sys.stderr)
                return code
        raise


if __name__ == "__main__":
    sys.exit(main())
