"""Compare the compiled and numpy detection kernels.

Run from the repository root after building the extension::

    python benchmarks/bench_kernels.py --frames 2000

Both backends get identical inputs; the script checks that their decisions
agree before reporting throughput.
"""

import argparse
import timeit

import numpy as np

from imsim import _pykernels
from imsim.channel import complex_gaussian, corrupt_csi, CsiErrorSpec, draw_slot_taps, equivalent_matrix
from imsim.config import Scheme, SchemeConfig, validate
from imsim.constellation import build_constellation
from imsim.detector import BruteForceDetector, slot_blocks
from imsim.mapper import tap_table

try:
    from imsim import _ckernels
except ImportError:  # extension not built
    _ckernels = None

CONFIGS = {
    "TI-PSM 8x4 G4 M8": SchemeConfig(Scheme.TI_PSM, n_tx=8, n_rx=4, mod_order=8, groups=4, frame_slots=4, active_slots=2),
    "TI-SM 8x4 M16": SchemeConfig(Scheme.TI_SM, n_tx=8, n_rx=4, mod_order=16, frame_slots=4, active_slots=2),
    "TI-PSM 12x4 G3 M2": SchemeConfig(Scheme.TI_PSM, n_tx=12, n_rx=4, mod_order=2, groups=3, frame_slots=4, active_slots=2),
}


def inputs(cfg, frames, rng):
    h = equivalent_matrix(draw_slot_taps(cfg, rng, frames), cfg)
    y = complex_gaussian(rng, (frames, h.shape[1]))
    return y, h


def slot_case(cfg, frames, rng):
    y, h = inputs(cfg, frames, rng)
    const = build_constellation(cfg.mod_order)
    args = (np.ascontiguousarray(y.reshape(frames, cfg.frame_slots, cfg.n_rx)), np.ascontiguousarray(slot_blocks(h, cfg)),
            const.symbols, cfg.groups, cfg.group_size, cfg.amplitude)

    def run(impl):
        out = (np.empty((frames, cfg.frame_slots, cfg.groups), np.int64), np.empty((frames, cfg.frame_slots), np.int64),
               np.empty((frames, cfg.frame_slots)), np.empty((frames, cfg.frame_slots)))
        impl.slot_search(*args, *out)
        return out[0], out[1]
    return run


def brute_case(cfg, frames, rng):
    y, h = inputs(cfg, frames, rng)
    det = BruteForceDetector(cfg)

    def run(impl):
        best, metric = np.empty(frames, np.int64), np.empty(frames)
        impl.brute_force(y, h, det.positions, det.values, best, metric)
        return (best,)
    return run


def joint_case(cfg, frames, rng):
    y, h = inputs(cfg, frames, rng)
    h = corrupt_csi(h, CsiErrorSpec(0.1), rng, cfg, full=True)
    const = build_constellation(cfg.mod_order)
    taps = np.ascontiguousarray(tap_table(cfg))

    def run(impl):
        rank = np.empty(frames, np.int64)
        ant = np.empty((frames, cfg.active_slots, cfg.groups), np.int64)
        sym = np.empty((frames, cfg.active_slots), np.int64)
        impl.joint_search(y, h, const.symbols, cfg.groups, cfg.group_size, cfg.amplitude, cfg.frame_slots, cfg.n_tx,
                          taps, rank, ant, sym, np.empty(frames))
        return rank, ant, sym
    return run


KERNELS = {"slot_search": (slot_case, 1.0), "joint_search": (joint_case, 0.1), "brute_force": (brute_case, 0.02)}


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--frames", type=int, default=2000, help="frames per slot_search call; other kernels scale it down")
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    backends = {"python": _pykernels}
    if _ckernels is None:
        print("compiled extension not importable; timing the numpy fallback only")
    else:
        backends["cython"] = _ckernels

    print(f"{'kernel':<13} {'config':<18} {'frames':>6} " + " ".join(f"{b + ' us/frame':>17}" for b in backends) + f" {'speedup':>8}")
    for kernel, (make, scale) in KERNELS.items():
        for name, raw in CONFIGS.items():
            cfg = validate(raw)
            frames = max(1, int(args.frames * scale))
            run = make(cfg, frames, np.random.default_rng(args.seed))
            results = {b: run(impl) for b, impl in backends.items()}
            if len(results) == 2:
                agree = all(np.array_equal(a, b) for a, b in zip(results["python"], results["cython"]))
                if not agree:
                    raise SystemExit(f"{kernel} on {name}: backends disagree")
            per_frame = {
                b: min(timeit.repeat(lambda impl=impl: run(impl), number=1, repeat=args.repeat)) / frames * 1e6
                for b, impl in backends.items()
            }
            speedup = per_frame["python"] / per_frame["cython"] if "cython" in per_frame else float("nan")
            cells = " ".join(f"{per_frame[b]:>17.1f}" for b in backends)
            print(f"{kernel:<13} {name:<18} {frames:>6} {cells} {speedup:>7.1f}x", flush=True)


if __name__ == "__main__":
    main()
