# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled engine backend: reduced-precision kernels and the fused
per-cycle emulation loop.

Semantics are defined by the pure-Python reference implementation
(``rfemu._engine_ref`` and the module-level operations it composes);
this extension is a bitwise-identical fast twin.  It must be compiled
with floating-point contraction disabled (see setup.py) so that double
arithmetic rounds exactly like the interpreter's.
"""

import numpy as np

cimport numpy as cnp
from libc.stdint cimport int8_t, int32_t, int64_t, uint16_t, uint32_t, uint64_t

cnp.import_array()


# ======================================================================
# Scalar conversion kernels (round-to-nearest-even, saturating)
# ======================================================================

cdef inline uint64_t _dbits(double x) nogil:
    return (<uint64_t*> &x)[0]

cdef inline double _dval(uint64_t b) nogil:
    return (<double*> &b)[0]


cdef uint16_t c_f16_from_double(double x) nogil:
    cdef uint64_t d = _dbits(x)
    cdef uint64_t h_sgn = (d & 0x8000000000000000u) >> 48
    cdef uint64_t d_exp = d & 0x7FF0000000000000u
    cdef uint64_t d_sig, ret, h_sig
    if d_exp >= 0x40F0000000000000u:
        if d_exp == 0x7FF0000000000000u:
            d_sig = d & 0x000FFFFFFFFFFFFFu
            if d_sig != 0:
                ret = 0x7C00u + (d_sig >> 42)
                if ret == 0x7C00u:
                    ret += 1
                return <uint16_t> (h_sgn + ret)
            return <uint16_t> (h_sgn + 0x7BFFu)
        return <uint16_t> (h_sgn + 0x7BFFu)
    if d_exp <= 0x3F00000000000000u:
        if d_exp < 0x3E60000000000000u:
            return <uint16_t> h_sgn
        d_exp >>= 52
        d_sig = 0x0010000000000000u + (d & 0x000FFFFFFFFFFFFFu)
        d_sig >>= (1009 - d_exp)
        if (d_sig & 0x000007FFFFFFFFFFu) != 0x0000020000000000u:
            d_sig += 0x0000020000000000u
        return <uint16_t> (h_sgn + (d_sig >> 42))
    cdef uint64_t h_exp = (d_exp - 0x3F00000000000000u) >> 42
    d_sig = d & 0x000FFFFFFFFFFFFFu
    if (d_sig & 0x000007FFFFFFFFFFu) != 0x0000020000000000u:
        d_sig += 0x0000020000000000u
    h_sig = (d_sig >> 42) + h_exp
    if h_sig >= 0x7C00u:
        return <uint16_t> (h_sgn + 0x7BFFu)
    return <uint16_t> (h_sgn + h_sig)


cdef double c_f16_to_double(uint16_t h) nogil:
    cdef uint64_t h_exp = h & 0x7C00u
    cdef uint64_t d_sgn = (<uint64_t> (h >> 15)) << 63
    cdef uint64_t h_sig, d_exp, d_sig
    cdef int shift
    if h_exp == 0:
        h_sig = h & 0x03FFu
        if h_sig == 0:
            return _dval(d_sgn)
        shift = 0
        h_sig <<= 1
        while (h_sig & 0x0400u) == 0:
            h_sig <<= 1
            shift += 1
        d_exp = (<uint64_t> (1023 - 15 - shift)) << 52
        d_sig = (h_sig & 0x03FFu) << 42
        return _dval(d_sgn + d_exp + d_sig)
    if h_exp == 0x7C00u:
        return _dval(d_sgn + 0x7FF0000000000000u + ((<uint64_t> (h & 0x03FFu)) << 42))
    return _dval(d_sgn + (((<uint64_t> (h & 0x7FFFu)) + 0xFC000u) << 42))


cdef inline double c_q16(double x) nogil:
    return c_f16_to_double(c_f16_from_double(x))


cdef uint16_t c_f10_from_double(double x) nogil:
    cdef uint64_t d = _dbits(x)
    cdef uint64_t h_sgn = (d & 0x8000000000000000u) >> 54
    cdef uint64_t d_exp = d & 0x7FF0000000000000u
    cdef uint64_t d_sig, ret, h_sig
    if d_exp >= 0x40F0000000000000u:
        if d_exp == 0x7FF0000000000000u:
            d_sig = d & 0x000FFFFFFFFFFFFFu
            if d_sig != 0:
                ret = 0x1F0u + (d_sig >> 48)
                if ret == 0x1F0u:
                    ret += 1
                return <uint16_t> (h_sgn + ret)
            return <uint16_t> (h_sgn + 0x1EFu)
        return <uint16_t> (h_sgn + 0x1EFu)
    if d_exp <= 0x3F00000000000000u:
        if d_exp < 0x3EC0000000000000u:
            return <uint16_t> h_sgn
        d_exp >>= 52
        d_sig = 0x0010000000000000u + (d & 0x000FFFFFFFFFFFFFu)
        d_sig >>= (1009 - d_exp)
        if (d_sig & 0x0001FFFFFFFFFFFFu) != 0x0000800000000000u:
            d_sig += 0x0000800000000000u
        return <uint16_t> (h_sgn + (d_sig >> 48))
    cdef uint64_t h_exp = (d_exp - 0x3F00000000000000u) >> 48
    d_sig = d & 0x000FFFFFFFFFFFFFu
    if (d_sig & 0x0001FFFFFFFFFFFFu) != 0x0000800000000000u:
        d_sig += 0x0000800000000000u
    h_sig = (d_sig >> 48) + h_exp
    if h_sig >= 0x1F0u:
        return <uint16_t> (h_sgn + 0x1EFu)
    return <uint16_t> (h_sgn + h_sig)


cdef double c_f10_to_double(uint16_t h) nogil:
    cdef uint64_t h_exp = h & 0x1F0u
    cdef uint64_t d_sgn = (<uint64_t> ((h >> 9) & 1u)) << 63
    cdef uint64_t h_sig, d_exp, d_sig
    cdef int shift
    if h_exp == 0:
        h_sig = h & 0x000Fu
        if h_sig == 0:
            return _dval(d_sgn)
        shift = 0
        h_sig <<= 1
        while (h_sig & 0x0010u) == 0:
            h_sig <<= 1
            shift += 1
        d_exp = (<uint64_t> (1023 - 15 - shift)) << 52
        d_sig = (h_sig & 0x000Fu) << 48
        return _dval(d_sgn + d_exp + d_sig)
    if h_exp == 0x1F0u:
        return _dval(d_sgn + 0x7FF0000000000000u + ((<uint64_t> (h & 0x000Fu)) << 48))
    return _dval(d_sgn + (((<uint64_t> (h & 0x1FFu)) + 0x3F00u) << 48))


# ======================================================================
# Python-visible wrappers for cross-checking against rfemu.numerics
# ======================================================================

def f16_bits_from_double(double x):
    return c_f16_from_double(x)

def f16_bits_to_double(unsigned int h):
    return c_f16_to_double(<uint16_t> (h & 0xFFFFu))

def f10_bits_from_double(double x):
    return c_f10_from_double(x)

def f10_bits_to_double(unsigned int h):
    return c_f10_to_double(<uint16_t> (h & 0x3FFu))

def quantize_f16_value(double x):
    return c_q16(x)


def quantize_f16_array(cnp.ndarray x):
    """Vectorized double -> F16 quantization: (values, bits)."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xi = np.ascontiguousarray(x, dtype=np.float64).ravel()
    cdef Py_ssize_t n = xi.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] vals = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[cnp.uint16_t, ndim=1] bits = np.empty(n, dtype=np.uint16)
    cdef Py_ssize_t i
    cdef uint16_t b
    with nogil:
        for i in range(n):
            b = c_f16_from_double(xi[i])
            bits[i] = b
            vals[i] = c_f16_to_double(b)
    return vals, bits


def f16_bits_to_double_array(cnp.ndarray bits):
    cdef cnp.ndarray[cnp.uint16_t, ndim=1] bi = np.ascontiguousarray(bits, dtype=np.uint16).ravel()
    cdef Py_ssize_t n = bi.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] vals = np.empty(n, dtype=np.float64)
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            vals[i] = c_f16_to_double(bi[i])
    return vals


# ======================================================================
# Fused cycle engine
# ======================================================================
# One C loop per scenario span. Python prepares per-scenario tables
# (configs, collision groups, tap/gain/step vectors) with the same
# parser the reference engine uses, so grouping and mute/wrap policy
# are shared by construction; the loop below mirrors the reference
# cycle order exactly: boundary swap, Doppler commit, consumer trees,
# fetch/multicast/write plus staged prefetch, then the per-link
# filter, gain stage, rotation, and equalizer.

cdef inline int64_t _emod(int64_t a, int64_t m) nogil:
    cdef int64_t r = a % m
    if r < 0:
        r += m
    return r


cdef inline double c_lut_sin(const double* lut, int64_t p) nogil:
    cdef int64_t q, r
    p = p & 4095
    q = p >> 10
    r = p & 1023
    if q == 0:
        return 0.0 if r == 0 else lut[r - 1]
    if q == 1:
        return lut[1023 - r]
    if q == 2:
        return -0.0 if r == 0 else -lut[r - 1]
    return -lut[1023 - r]


# counter slots (python maps names at the end of a run)
DEF C_BANK_READS = 0
DEF C_BANK_WRITES = 1
DEF C_HANDOFFS = 2
DEF C_GROUPED = 3
DEF C_MUTED = 4
DEF C_SHARED_WRAP = 5
DEF C_RTR_READS = 6
DEF C_RTR_WRITES = 7
DEF C_PF_RESIDENT = 8
DEF C_PF_STREAMING = 9
DEF C_DOPPLER = 10
DEF N_COUNTERS = 11

_COUNTER_NAMES = (
    "bank_reads", "bank_writes", "lddc_handoffs", "grouped_outputs",
    "muted_outputs", "shared_bank_wrap", "rtr_reads", "rtr_writes",
    "prefetch_resident", "prefetch_streaming", "doppler_commits",
)


def _run_span(int64_t u0, int64_t u1, int64_t boundary, int64_t scen_start,
              dict st, dict cur, dict staged):
    """Run cycles [u0, u1) of one scenario. Returns 0 or raises."""
    # -- persistent engine state ---------------------------------------
    cdef double[::1] fifo_re = st["fifo_re"]
    cdef double[::1] fifo_im = st["fifo_im"]
    cdef double[::1] win_re = st["win_re"]
    cdef double[::1] win_im = st["win_im"]
    cdef double[::1] eq_re = st["eq_re"]
    cdef double[::1] eq_im = st["eq_im"]
    cdef int64_t[::1] eq_ptr = st["eq_ptr"]
    cdef double[::1] deliv_re = st["deliv_re"]
    cdef double[::1] deliv_im = st["deliv_im"]
    cdef int64_t[::1] phase = st["phase"]
    cdef double[::1] cre = st["cre"]
    cdef double[::1] cim = st["cim"]
    cdef int64_t[::1] owner = st["owner"]
    cdef int64_t[::1] counters = st["counters"]
    cdef double[::1] lut = st["lut"]
    cdef double[::1] src_re = st["src_re"]
    cdef double[::1] src_im = st["src_im"]
    cdef double[::1] fetch_re = st["fetch_re"]
    cdef double[::1] fetch_im = st["fetch_im"]
    cdef double[::1] tree_re = st["tree_re"]
    cdef double[::1] tree_im = st["tree_im"]
    cdef cnp.uint16_t[:, ::1] cap_re = st["cap_re"]
    cdef cnp.uint16_t[:, ::1] cap_im = st["cap_im"]
    # -- static structure ----------------------------------------------
    cdef signed char[::1] prod_is_tx = st["prod_is_tx"]
    cdef int64_t[::1] prod_node = st["prod_node"]
    cdef int64_t[::1] prod_period = st["prod_period"]
    cdef int64_t[::1] prod_pat_start = st["prod_pat_start"]
    cdef int64_t[::1] prod_pat_len = st["prod_pat_len"]
    cdef double[::1] pat_re = st["pat_re"]
    cdef double[::1] pat_im = st["pat_im"]
    cdef int64_t[::1] in_start = st["in_start"]
    cdef int64_t[::1] in_link = st["in_link"]
    cdef int64_t[::1] rec_node = st["rec_node"]
    cdef int64_t n_prod = st["n_prod"]
    cdef int64_t n_rec = st["n_rec"]
    cdef int64_t n_links = st["n_links"]
    cdef int64_t B = st["banks"]
    cdef int64_t S = st["bank_depth"]
    cdef int64_t T = st["total_depth"]
    cdef int64_t R = st["rtr_depth"]
    cdef int64_t E = st["eq_len"]
    # -- current scenario table ------------------------------------------
    cdef int64_t[::1] cfg_start = cur["cfg_start"]
    cdef int64_t[::1] cfg_link = cur["cfg_link"]
    cdef int64_t[::1] cfg_delay = cur["cfg_delay"]
    cdef signed char[::1] cfg_flags = cur["cfg_flags"]
    cdef int64_t[::1] grp_start = cur["grp_start"]
    cdef int64_t[::1] grp_hlink = cur["grp_hlink"]
    cdef int64_t[::1] grp_hdelay = cur["grp_hdelay"]
    cdef int64_t[::1] grp_mstart = cur["grp_mstart"]
    cdef int64_t[::1] mem_link = cur["mem_link"]
    cdef int64_t[::1] mem_off = cur["mem_off"]
    cdef double[::1] rtr_re = cur["rtr_re"]
    cdef double[::1] rtr_im = cur["rtr_im"]
    cdef double[::1] taps = cur["taps"]
    cdef double[::1] g_t = cur["g_t"]
    cdef double[::1] g_br = cur["beta_rho"]
    cdef double[::1] wgt = cur["wgt"]
    cdef int64_t[::1] step = cur["step"]
    # -- staged scenario table (prefetch targets) ------------------------
    cdef bint has_staged = staged is not None
    cdef int64_t[::1] sg_start = cur["grp_start"]
    cdef int64_t[::1] sg_hdelay = cur["grp_hdelay"]
    cdef int64_t[::1] sg_maxoff = cur["grp_maxoff"]
    cdef double[::1] sg_rtr_re = cur["rtr_re"]
    cdef double[::1] sg_rtr_im = cur["rtr_im"]
    cdef int64_t[::1] grp_maxoff = cur["grp_maxoff"]
    if has_staged:
        sg_start = staged["grp_start"]
        sg_hdelay = staged["grp_hdelay"]
        sg_maxoff = staged["grp_maxoff"]
        sg_rtr_re = staged["rtr_re"]
        sg_rtr_im = staged["rtr_im"]

    cdef int64_t u, p, i, ci, gi, mi, k, ri, node, m, width, half, j
    cdef int64_t pos, slot, bank, write_bank, write_slot, ob, off, idx
    cdef int64_t src_idx, base, hl
    cdef uint64_t read_mask, bit
    cdef double sre, sim_v, g, acc_re, acc_im, yre, yim
    cdef double zr, zi, ccre, ccim, t0, t1, t2, t3
    cdef int64_t err_bank = -1, err_cycle = -1
    cdef int err_kind = 0
    cdef int64_t phase_mask = 0xFFFFFFFF

    with nogil:
        for u in range(u0, u1):
            # -- Doppler commit -----------------------------------------
            if u > 0 and (u % 256) == 0:
                for k in range(n_links):
                    phase[k] = (phase[k] + step[k]) & phase_mask
                    idx = ((phase[k] + 524288) >> 20) & 4095
                    cre[k] = c_lut_sin(&lut[0], idx + 1024)
                    cim[k] = -c_lut_sin(&lut[0], idx)
                counters[C_DOPPLER] += 1

            # -- consumers read last cycle's deliveries -------------------
            for p in range(n_prod):
                if prod_is_tx[p]:
                    slot = u % prod_period[p]
                    if slot < prod_pat_len[p]:
                        src_re[p] = pat_re[prod_pat_start[p] + slot]
                        src_im[p] = pat_im[prod_pat_start[p] + slot]
                    else:
                        src_re[p] = 0.0
                        src_im[p] = 0.0
                else:
                    node = prod_node[p]
                    m = in_start[node + 1] - in_start[node]
                    if m == 0:
                        src_re[p] = 0.0
                        src_im[p] = 0.0
                    else:
                        width = 1
                        while width < m:
                            width <<= 1
                        for j in range(m):
                            k = in_link[in_start[node] + j]
                            g = wgt[k]
                            tree_re[j] = c_q16(g * deliv_re[k])
                            tree_im[j] = c_q16(g * deliv_im[k])
                        for j in range(m, width):
                            tree_re[j] = 0.0
                            tree_im[j] = 0.0
                        while width > 1:
                            half = width >> 1
                            for j in range(half):
                                tree_re[j] = c_q16(tree_re[2 * j] + tree_re[2 * j + 1])
                                tree_im[j] = c_q16(tree_im[2 * j] + tree_im[2 * j + 1])
                            width = half
                        src_re[p] = tree_re[0]
                        src_im[p] = tree_im[0]
            for ri in range(n_rec):
                node = rec_node[ri]
                m = in_start[node + 1] - in_start[node]
                if m == 0:
                    cap_re[ri, u] = 0
                    cap_im[ri, u] = 0
                else:
                    width = 1
                    while width < m:
                        width <<= 1
                    for j in range(m):
                        k = in_link[in_start[node] + j]
                        g = wgt[k]
                        tree_re[j] = c_q16(g * deliv_re[k])
                        tree_im[j] = c_q16(g * deliv_im[k])
                    for j in range(m, width):
                        tree_re[j] = 0.0
                        tree_im[j] = 0.0
                    while width > 1:
                        half = width >> 1
                        for j in range(half):
                            tree_re[j] = c_q16(tree_re[2 * j] + tree_re[2 * j + 1])
                            tree_im[j] = c_q16(tree_im[2 * j] + tree_im[2 * j + 1])
                        width = half
                    cap_re[ri, u] = c_f16_from_double(tree_re[0])
                    cap_im[ri, u] = c_f16_from_double(tree_im[0])

            # -- producers: fetch, multicast, write, staged prefetch ------
            for p in range(n_prod):
                write_slot = u % T
                write_bank = write_slot / S
                read_mask = 0
                base = p * T
                for ci in range(cfg_start[p], cfg_start[p + 1]):
                    k = cfg_link[ci]
                    if cfg_flags[ci] & 1:  # muted
                        fetch_re[k] = 0.0
                        fetch_im[k] = 0.0
                        counters[C_MUTED] += 1
                        continue
                    pos = u - cfg_delay[ci]
                    slot = _emod(pos, T)
                    bank = slot / S
                    bit = (<uint64_t> 1) << bank
                    if read_mask & bit:
                        err_kind = 1
                        err_bank = bank
                        err_cycle = u
                        break
                    read_mask |= bit
                    if bank == write_bank:
                        if cfg_flags[ci] & 2:  # wrap zone
                            counters[C_SHARED_WRAP] += 1
                        else:
                            err_kind = 2
                            err_bank = bank
                            err_cycle = u
                            break
                    counters[C_BANK_READS] += 1
                    ob = owner[k]
                    if ob != bank:
                        if ob == (bank - 1 + B) % B:
                            counters[C_HANDOFFS] += 1
                        owner[k] = bank
                    fetch_re[k] = fifo_re[base + slot]
                    fetch_im[k] = fifo_im[base + slot]
                if err_kind:
                    break
                for gi in range(grp_start[p], grp_start[p + 1]):
                    hl = grp_hlink[gi]
                    counters[C_RTR_WRITES] += 1
                    counters[C_RTR_READS] += grp_mstart[gi + 1] - grp_mstart[gi]
                    slot = u % R
                    rtr_re[gi * R + slot] = fetch_re[hl]
                    rtr_im[gi * R + slot] = fetch_im[hl]
                    for mi in range(grp_mstart[gi], grp_mstart[gi + 1]):
                        k = mem_link[mi]
                        off = mem_off[mi]
                        slot = _emod(u - off, R)
                        fetch_re[k] = rtr_re[gi * R + slot]
                        fetch_im[k] = rtr_im[gi * R + slot]
                fifo_re[base + write_slot] = src_re[p]
                fifo_im[base + write_slot] = src_im[p]
                counters[C_BANK_WRITES] += 1
                if has_staged:
                    for gi in range(sg_start[p], sg_start[p + 1]):
                        if sg_maxoff[gi] == 0 or u < boundary - sg_maxoff[gi]:
                            continue
                        src_idx = u - sg_hdelay[gi]
                        slot = u % R
                        if src_idx >= 0:
                            sg_rtr_re[gi * R + slot] = fifo_re[base + _emod(src_idx, T)]
                            sg_rtr_im[gi * R + slot] = fifo_im[base + _emod(src_idx, T)]
                        else:
                            sg_rtr_re[gi * R + slot] = 0.0
                            sg_rtr_im[gi * R + slot] = 0.0
                        if src_idx >= scen_start:
                            counters[C_PF_STREAMING] += 1
                        else:
                            counters[C_PF_RESIDENT] += 1
            if err_kind:
                break

            # -- per-link filter, gain stage, rotation, equalizer ---------
            for k in range(n_links):
                win_re[4 * k + 3] = win_re[4 * k + 2]
                win_re[4 * k + 2] = win_re[4 * k + 1]
                win_re[4 * k + 1] = win_re[4 * k]
                win_re[4 * k] = fetch_re[k]
                win_im[4 * k + 3] = win_im[4 * k + 2]
                win_im[4 * k + 2] = win_im[4 * k + 1]
                win_im[4 * k + 1] = win_im[4 * k]
                win_im[4 * k] = fetch_im[k]
                t0 = taps[4 * k]
                t1 = taps[4 * k + 1]
                t2 = taps[4 * k + 2]
                t3 = taps[4 * k + 3]
                acc_re = 0.0
                acc_im = 0.0
                acc_re += t0 * win_re[4 * k]
                acc_im += t0 * win_im[4 * k]
                acc_re += t1 * win_re[4 * k + 1]
                acc_im += t1 * win_im[4 * k + 1]
                acc_re += t2 * win_re[4 * k + 2]
                acc_im += t2 * win_im[4 * k + 2]
                acc_re += t3 * win_re[4 * k + 3]
                acc_im += t3 * win_im[4 * k + 3]
                yre = c_q16(acc_re)
                yim = c_q16(acc_im)
                zr = c_q16(g_t[k] * yre + g_br[k] * yre)
                zi = c_q16(g_t[k] * yim + g_br[k] * yim)
                ccre = cre[k]
                ccim = cim[k]
                yre = c_q16(zr * ccre - zi * ccim)
                yim = c_q16(zr * ccim + zi * ccre)
                if E > 0:
                    j = eq_ptr[k]
                    sre = eq_re[k * E + j]
                    sim_v = eq_im[k * E + j]
                    eq_re[k * E + j] = yre
                    eq_im[k * E + j] = yim
                    eq_ptr[k] = (j + 1) % E
                    yre = sre
                    yim = sim_v
                deliv_re[k] = yre
                deliv_im[k] = yim

    if err_kind == 1:
        from rfemu.errors import ContractViolation
        raise ContractViolation(
            f"single-port violation: bank {err_bank} read twice in cycle "
            f"{err_cycle}")
    if err_kind == 2:
        from rfemu.errors import ContractViolation
        raise ContractViolation(
            f"single-port violation: bank {err_bank} read and written in "
            f"cycle {err_cycle} outside the wrap zone")
    return 0


class CycleEngine:
    """Compiled cycle engine; behaviorally identical to the reference."""

    backend = "compiled"

    def __init__(self, config):
        from rfemu import datapath as _dp
        from rfemu.controlpath import gddc_parse
        from rfemu.errors import ConfigurationError

        self.config = config
        geo = config.geometry
        if geo.banks > 64:
            raise ConfigurationError(
                "compiled backend audits at most 64 banks per node")
        # constants assumed by the C loop
        assert _dp.DOPPLER_UPDATE_PERIOD == 256
        assert _dp.LUT_DEPTH == 1024
        assert _dp.PHASE_BITS == 32

        n_nodes = len(config.roles)
        n_links = len(config.links)
        sl = config.scenario_length
        n_used = config.scenarios_needed

        producers = [i for i in range(n_nodes)
                     if config.roles[i] != "receiver"]
        receivers = [i for i in range(n_nodes)
                     if config.roles[i] == "receiver"]
        self._producers = producers
        self._receivers = receivers
        outlinks = {i: [k for k in range(n_links) if config.links[k][0] == i]
                    for i in producers}
        inlinks = {i: [k for k in range(n_links) if config.links[k][1] == i]
                   for i in range(n_nodes)}

        # static structure arrays
        n_prod = len(producers)
        self._struct = st = {}
        st["n_prod"] = n_prod
        st["n_rec"] = len(receivers)
        st["n_links"] = n_links
        st["banks"] = geo.banks
        st["bank_depth"] = geo.bank_depth
        st["total_depth"] = geo.total_depth
        st["rtr_depth"] = geo.rtr_depth
        st["eq_len"] = geo.compute_latency - 2
        st["prod_node"] = np.asarray(producers, dtype=np.int64)
        st["prod_is_tx"] = np.asarray(
            [1 if config.roles[i] == "transmitter" else 0 for i in producers],
            dtype=np.int8)
        periods, pstarts, plens, pre, pim = [], [], [], [], []
        off = 0
        for i in producers:
            gen = config.drfg[i]
            if gen is None:
                periods.append(1)
                pstarts.append(off)
                plens.append(0)
            else:
                periods.append(gen.period)
                pstarts.append(off)
                plens.append(len(gen.iq_pattern))
                for smp in gen.iq_pattern:
                    pre.append(smp.re.value)
                    pim.append(smp.im.value)
                off += len(gen.iq_pattern)
        st["prod_period"] = np.asarray(periods, dtype=np.int64)
        st["prod_pat_start"] = np.asarray(pstarts, dtype=np.int64)
        st["prod_pat_len"] = np.asarray(plens, dtype=np.int64)
        st["pat_re"] = np.asarray(pre, dtype=np.float64)
        st["pat_im"] = np.asarray(pim, dtype=np.float64)
        instart, inlink = [0], []
        for i in range(n_nodes):
            inlink.extend(inlinks[i])
            instart.append(len(inlink))
        st["in_start"] = np.asarray(instart, dtype=np.int64)
        st["in_link"] = np.asarray(inlink, dtype=np.int64)
        st["rec_node"] = np.asarray(receivers, dtype=np.int64)
        st["lut"] = np.asarray([e.value for e in _dp.doppler_lut()],
                               dtype=np.float64)
        max_in = max((len(inlinks[i]) for i in range(n_nodes)), default=0)
        width = 1
        while width < max(max_in, 1):
            width *= 2
        st["tree_width"] = width

        # per-scenario tables: shared parser, flattened for the C loop
        update_rate = config.sample_rate_hz / _dp.DOPPLER_UPDATE_PERIOD
        self._tables = []
        self._grouped_counts = []
        for s in range(n_used):
            scp = config.scps[s]
            tbl = {}
            cfg_start, cfg_link, cfg_delay, cfg_flags = [0], [], [], []
            grp_start, grp_hlink, grp_hdelay, grp_maxoff = [0], [], [], []
            grp_mstart, mem_link, mem_off = [0], [], []
            grouped = 0
            for i in producers:
                pairs = [(k, scp.links[k].buffer_delay) for k in outlinks[i]]
                configs, groups, plan = gddc_parse(
                    pairs, geo, write_index=s * sl,
                    scenario_start=0 if s == 0 else (s - 1) * sl,
                    boundary=s * sl)
                if plan.window >= sl:
                    raise ConfigurationError(
                        f"collision offsets span {plan.window} samples but "
                        f"the scenario is only {sl} cycles; prefetch cannot "
                        "complete in one scenario")
                for c in configs:
                    cfg_link.append(c.output_id)
                    cfg_delay.append(c.buffer_delay)
                    cfg_flags.append(
                        (1 if c.muted else 0) | (2 if c.wrap_zone else 0))
                cfg_start.append(len(cfg_link))
                for grp in groups:
                    grp_hlink.append(grp.header_id)
                    grp_hdelay.append(grp.header_delay)
                    grp_maxoff.append(grp.max_offset)
                    grouped += len(grp.members) + 1
                    for mid, moff in grp.members:
                        mem_link.append(mid)
                        mem_off.append(moff)
                    grp_mstart.append(len(mem_link))
                grp_start.append(len(grp_hlink))
            tbl["cfg_start"] = np.asarray(cfg_start, dtype=np.int64)
            tbl["cfg_link"] = np.asarray(cfg_link, dtype=np.int64)
            tbl["cfg_delay"] = np.asarray(cfg_delay, dtype=np.int64)
            tbl["cfg_flags"] = np.asarray(cfg_flags, dtype=np.int8)
            tbl["grp_start"] = np.asarray(grp_start, dtype=np.int64)
            tbl["grp_hlink"] = np.asarray(grp_hlink, dtype=np.int64)
            tbl["grp_hdelay"] = np.asarray(grp_hdelay, dtype=np.int64)
            tbl["grp_maxoff"] = np.asarray(grp_maxoff, dtype=np.int64)
            tbl["grp_mstart"] = np.asarray(grp_mstart, dtype=np.int64)
            tbl["mem_link"] = np.asarray(mem_link, dtype=np.int64)
            tbl["mem_off"] = np.asarray(mem_off, dtype=np.int64)
            tbl["n_groups"] = len(grp_hlink)
            taps, gts, brs, wgts, steps = [], [], [], [], []
            for k, ln in enumerate(scp.links):
                for t in ln.taps:
                    taps.append(t.widen().value)
                gts.append(ln.g_t.value)
                brs.append(ln.beta_rho.value)
                dst_role = config.roles[config.links[k][1]]
                wgts.append(ln.g_r.value if dst_role == "receiver"
                            else ln.alpha.value)
                steps.append(_dp.doppler_phase_step(
                    ln.doppler_mhz * 1e6, update_rate))
            tbl["taps"] = np.asarray(taps, dtype=np.float64)
            tbl["g_t"] = np.asarray(gts, dtype=np.float64)
            tbl["beta_rho"] = np.asarray(brs, dtype=np.float64)
            tbl["wgt"] = np.asarray(wgts, dtype=np.float64)
            tbl["step"] = np.asarray(steps, dtype=np.int64)
            self._tables.append(tbl)
            self._grouped_counts.append(grouped)

    def run(self):
        from rfemu._engine_ref import CaptureStream, RunResult

        config = self.config
        st = dict(self._struct)
        geo = config.geometry
        n_prod = st["n_prod"]
        n_rec = st["n_rec"]
        n_links = st["n_links"]
        T = st["total_depth"]
        E = st["eq_len"]
        R = st["rtr_depth"]
        n = config.n_cycles
        sl = config.scenario_length
        n_used = config.scenarios_needed

        st["fifo_re"] = np.zeros(n_prod * T, dtype=np.float64)
        st["fifo_im"] = np.zeros(n_prod * T, dtype=np.float64)
        st["win_re"] = np.zeros(n_links * 4, dtype=np.float64)
        st["win_im"] = np.zeros(n_links * 4, dtype=np.float64)
        st["eq_re"] = np.zeros(max(n_links * E, 1), dtype=np.float64)
        st["eq_im"] = np.zeros(max(n_links * E, 1), dtype=np.float64)
        st["eq_ptr"] = np.zeros(n_links, dtype=np.int64)
        st["deliv_re"] = np.zeros(n_links, dtype=np.float64)
        st["deliv_im"] = np.zeros(n_links, dtype=np.float64)
        st["phase"] = np.zeros(n_links, dtype=np.int64)
        lut = st["lut"]
        st["cre"] = np.full(n_links, lut[1023], dtype=np.float64)
        st["cim"] = np.full(n_links, -0.0, dtype=np.float64)
        st["owner"] = np.full(n_links, -1, dtype=np.int64)
        st["counters"] = np.zeros(16, dtype=np.int64)
        st["src_re"] = np.zeros(max(n_prod, 1), dtype=np.float64)
        st["src_im"] = np.zeros(max(n_prod, 1), dtype=np.float64)
        st["fetch_re"] = np.zeros(max(n_links, 1), dtype=np.float64)
        st["fetch_im"] = np.zeros(max(n_links, 1), dtype=np.float64)
        st["tree_re"] = np.zeros(st["tree_width"], dtype=np.float64)
        st["tree_im"] = np.zeros(st["tree_width"], dtype=np.float64)
        st["cap_re"] = np.zeros((max(n_rec, 1), n), dtype=np.uint16)
        st["cap_im"] = np.zeros((max(n_rec, 1), n), dtype=np.uint16)

        counters = st["counters"]
        tbl = dict(self._tables[0])
        ng = tbl["n_groups"]
        tbl["rtr_re"] = np.zeros(max(ng * R, 1), dtype=np.float64)
        tbl["rtr_im"] = np.zeros(max(ng * R, 1), dtype=np.float64)
        for s in range(n_used):
            u0, u1 = s * sl, min((s + 1) * sl, n)
            if s:
                st["owner"][:] = -1
            counters[C_GROUPED] += self._grouped_counts[s]
            staged = None
            if s + 1 < n_used:
                staged = dict(self._tables[s + 1])
                sng = staged["n_groups"]
                staged["rtr_re"] = np.zeros(max(sng * R, 1), dtype=np.float64)
                staged["rtr_im"] = np.zeros(max(sng * R, 1), dtype=np.float64)
            _run_span(u0, u1, (s + 1) * sl, s * sl, st, tbl, staged)
            if staged is not None:
                tbl = staged

        names_counts = {}
        names_counts["cycles"] = n
        names_counts["doppler_commits"] = int(counters[C_DOPPLER])
        names_counts["scenarios"] = n_used
        for j, name in enumerate(_COUNTER_NAMES):
            if name == "doppler_commits":
                continue
            names_counts[name] = int(counters[j])
        captures = {}
        for ri, node in enumerate(self._receivers):
            captures[node] = CaptureStream(
                st["cap_re"][ri].copy(), st["cap_im"][ri].copy())
        return RunResult(n_cycles=n, backend=self.backend,
                         captures=captures, counters=names_counts)
