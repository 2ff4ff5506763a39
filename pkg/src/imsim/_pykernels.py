"""Pure numpy implementations of the detection kernels.

Same signatures and results as the compiled ``_ckernels`` module; used when
the extension is not built or ``IMSIM_PURE_PYTHON`` is set.
"""

import numpy as np

# frames per vectorized chunk; bounds the (F, T, N_r, combos, M) temporary
_CHUNK = 256


def antenna_combinations(groups, group_size):
    """All per-group antenna tuples, group 0 most significant, shape (N_tg**G, G)."""
    index = np.arange(group_size**groups)
    digits = [(index // group_size ** (groups - 1 - g)) % group_size for g in range(groups)]
    return np.stack(digits, axis=1).astype(np.int64)


def slot_search(y, h, symbols, groups, group_size, alpha, ant_out, sym_out, on_out, off_out):
    """Best single-slot hypothesis for every (frame, slot).

    y : (F, T, Nr) complex, h : (F, T, Nr, Nt) complex, symbols : (M,) complex.
    Writes the argmin antenna tuple (F, T, G), symbol label (F, T), its
    residual energy (F, T) and the empty-slot energy ``|y_t|^2`` (F, T).
    Hypotheses are scanned antennas-then-symbol; the first minimum wins.
    """
    combos = antenna_combinations(groups, group_size)
    columns = combos + np.arange(groups) * group_size
    scaled = alpha * np.asarray(symbols)
    n_sym = scaled.shape[0]
    for start in range(0, y.shape[0], _CHUNK):
        stop = min(start + _CHUNK, y.shape[0])
        yc = y[start:stop]
        v = h[start:stop][..., columns].sum(axis=-1)  # (f, T, Nr, combos)
        hyp = v[..., None] * scaled  # (f, T, Nr, combos, M)
        resid = yc[..., None, None] - hyp
        metric = (resid.real**2 + resid.imag**2).sum(axis=2)  # (f, T, combos, M)
        flat = metric.reshape(*metric.shape[:2], -1)
        best = np.argmin(flat, axis=-1)
        on_out[start:stop] = np.take_along_axis(flat, best[..., None], axis=-1)[..., 0]
        ant_out[start:stop] = combos[best // n_sym]
        sym_out[start:stop] = best % n_sym
        off_out[start:stop] = (yc.real**2 + yc.imag**2).sum(axis=-1)


def brute_force(y, h, positions, values, best_out, metric_out):
    """Exhaustive ``min ||y - H s||^2`` over a sparse codebook.

    y : (F, R) complex, h : (F, R, C) complex, positions : (K, nnz) column
    indices and values : (K, nnz) entries of each codeword. The first
    minimum in codebook order wins.
    """
    for f in range(y.shape[0]):
        hs = (h[f][:, positions] * values).sum(axis=-1)  # (R, K)
        resid = y[f][:, None] - hs
        metric = (resid.real**2 + resid.imag**2).sum(axis=0)
        k = int(np.argmin(metric))
        best_out[f] = k
        metric_out[f] = metric[k]


def joint_search(y, h, symbols, groups, group_size, alpha, n_slots, n_tx, taps, rank_out, ant_out, sym_out, metric_out):
    """Exact ML over every (TAP, per-slot hypothesis tuple) for an arbitrary
    frame matrix ``h`` (F, R, T*N_t); ``taps`` holds the usable patterns (P, T_a).

    Hypotheses of a slot are scanned antennas-then-symbol, slots in pattern
    order, patterns by rank; the first minimum wins.
    """
    combos = antenna_combinations(groups, group_size)
    n_combos = combos.shape[0]
    scaled = alpha * np.asarray(symbols)
    n_sym = scaled.shape[0]
    n_act = taps.shape[1]
    offsets = np.arange(groups) * group_size
    for f in range(y.shape[0]):
        best, best_rank, best_hyp = np.inf, 0, None
        for p, slots in enumerate(taps):
            # candidate contributions of every active slot, (n_hyp, R)
            resid = y[f]
            for t in slots:
                v = h[f][:, t * n_tx + combos + offsets].sum(axis=-1)  # (R, combos)
                cand = (v.T[:, None, :] * scaled[None, :, None]).reshape(n_combos * n_sym, -1)
                resid = resid[..., None, :] - cand
            metric = (resid.real**2 + resid.imag**2).sum(axis=-1).ravel()
            k = int(np.argmin(metric))
            if metric[k] < best:
                best, best_rank = metric[k], p
                best_hyp = np.unravel_index(k, (n_combos * n_sym,) * n_act)
        rank_out[f] = best_rank
        metric_out[f] = best
        for k, hyp in enumerate(best_hyp):
            ant_out[f, k] = combos[hyp // n_sym]
            sym_out[f, k] = hyp % n_sym
