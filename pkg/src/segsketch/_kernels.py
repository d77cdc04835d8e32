"""Compiled batch update path for the sketch.

Mirrors ``SegSketch.update`` operation for operation on the same numpy
state arrays, including the replacement RNG stream, so a trace fed
through here leaves byte-identical state and outcomes to the scalar
reference. Every constant below must stay in sync with ``hashing``.

All arithmetic is pinned to uint64 explicitly: numba follows numpy's
promotion rules, and a stray int64 operand would silently promote a
hash computation to float64.
"""

import math

import numpy as np
from numba import njit

_U0 = np.uint64(0)
_U1 = np.uint64(1)
_FULL = np.uint64(0xFFFFFFFFFFFFFFFF)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


@njit(cache=True, inline="always")
def _hash64(value, seed):
    z = value + seed * _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@njit(cache=True, inline="always")
def _next_uniform(rng_state):
    state = rng_state[0] + _GOLDEN
    rng_state[0] = state
    z = (state ^ (state >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)) * 2.0**-53


@njit(cache=True, inline="always")
def _subnet_any(words, lo, hi):
    for w in range(lo >> 6, ((hi - 1) >> 6) + 1):
        base = w << 6
        w_lo = lo - base
        if w_lo < 0:
            w_lo = 0
        w_hi = hi - base
        if w_hi > 64:
            w_hi = 64
        if w_hi - w_lo >= 64:
            mask = _FULL
        else:
            mask = ((_U1 << np.uint64(w_hi - w_lo)) - _U1) << np.uint64(w_lo)
        if words[w] & mask != _U0:
            return True
    return False


@njit(cache=True, inline="always")
def _segment_hash_bit(peer, d, seg_bits, level_salt, seed):
    lo = 32 - d * seg_bits
    val = (peer >> np.uint64(lo)) & np.uint64((1 << seg_bits) - 1)
    if level_salt == 1:
        val = val | (np.uint64(d) << np.uint64(32))
    return _hash64(val, seed) & _U1


@njit(cache=True)
def _subnet_insert(words, peer, depth, seg_bits, level_salt, cell_count, seed):
    lo = 0
    hi = cell_count
    for d in range(1, depth + 1):
        mid = (lo + hi) // 2
        if _segment_hash_bit(peer, d, seg_bits, level_salt, seed) == _U1:
            own_lo, own_hi, sib_lo, sib_hi = mid, hi, lo, mid
        else:
            own_lo, own_hi, sib_lo, sib_hi = lo, mid, mid, hi
        if _subnet_any(words, sib_lo, sib_hi):
            words[own_lo >> 6] |= _U1 << np.uint64(own_lo & 63)
            return d
        lo = own_lo
        hi = own_hi
    words[lo >> 6] |= _U1 << np.uint64(lo & 63)
    return depth + 1


@njit(cache=True)
def _derive_prefix(words, depth, seg_bits, cell_count):
    lo = 0
    hi = cell_count
    for d in range(1, depth + 1):
        mid = (lo + hi) // 2
        left = _subnet_any(words, lo, mid)
        right = _subnet_any(words, mid, hi)
        if left and right:
            return (d - 1) * seg_bits
        if left:
            hi = mid
        else:
            lo = mid
    return depth * seg_bits


@njit(cache=True)
def update_batch(
    srcs,
    dsts,
    keys,
    occupied,
    subnet_bits,
    host_bits,
    host_set_count,
    rng_state,
    row_seeds,
    subnet_seed,
    host_seed,
    depth,
    seg_bits,
    level_salt,
    cell_count,
    host_bitmap_bits,
    receiver,
    clear_host,
    outcomes,
):
    rows = keys.shape[0]
    cols = keys.shape[1]
    ucols = np.uint64(cols)
    ubits = np.uint64(host_bitmap_bits)
    bits_f = float(host_bitmap_bits)
    hashed = np.empty(rows, dtype=np.int64)

    for t in range(srcs.size):
        if receiver == 1:
            host = np.uint64(dsts[t])
            peer = np.uint64(srcs[t])
        else:
            host = np.uint64(srcs[t])
            peer = np.uint64(dsts[t])

        for i in range(rows):
            hashed[i] = np.int64(_hash64(host, row_seeds[i]) % ucols)

        outcome = np.uint8(3)  # DROPPED unless a case below fires

        # Case 1: host already resident in one of its hashed buckets.
        found = False
        for i in range(rows):
            j = hashed[i]
            if occupied[i, j] == 1 and np.uint64(keys[i, j]) == host:
                sw = subnet_bits[i, j]
                _subnet_insert(sw, peer, depth, seg_bits, level_salt, cell_count, subnet_seed)
                prefix = _derive_prefix(sw, depth, seg_bits, cell_count)
                if prefix == 0:
                    suffix = peer
                else:
                    suffix = peer & ((_U1 << np.uint64(32 - prefix)) - _U1)
                idx = _hash64(suffix, host_seed) % ubits
                w = np.int64(idx >> np.uint64(6))
                bit = _U1 << (idx & np.uint64(63))
                if host_bits[i, j, w] & bit == _U0:
                    host_bits[i, j, w] |= bit
                    host_set_count[i, j] += 1
                outcome = np.uint8(0)
                found = True
                break
        if found:
            outcomes[t] = outcome
            continue

        # Case 2: claim the first empty hashed bucket.
        for i in range(rows):
            j = hashed[i]
            if occupied[i, j] == 0:
                occupied[i, j] = 1
                keys[i, j] = np.uint32(host)
                sw = subnet_bits[i, j]
                _subnet_insert(sw, peer, depth, seg_bits, level_salt, cell_count, subnet_seed)
                idx = _hash64(peer, host_seed) % ubits
                w = np.int64(idx >> np.uint64(6))
                bit = _U1 << (idx & np.uint64(63))
                if host_bits[i, j, w] & bit == _U0:
                    host_bits[i, j, w] |= bit
                    host_set_count[i, j] += 1
                outcome = np.uint8(1)
                found = True
                break
        if found:
            outcomes[t] = outcome
            continue

        # Case 3: probabilistic replacement of the smallest-estimate bucket.
        best_row = 0
        best_est = 1e308
        for i in range(rows):
            j = hashed[i]
            zeros = host_bitmap_bits - host_set_count[i, j]
            if zeros <= 0:
                zeros = 1
            est = bits_f * math.log(bits_f / zeros)
            if est < best_est:
                best_est = est
                best_row = i
        if _next_uniform(rng_state) < 1.0 / (best_est + 1.0):
            j = hashed[best_row]
            keys[best_row, j] = np.uint32(host)
            for w in range(subnet_bits.shape[2]):
                subnet_bits[best_row, j, w] = _U0
            if clear_host == 1:
                for w in range(host_bits.shape[2]):
                    host_bits[best_row, j, w] = _U0
                host_set_count[best_row, j] = 0
            sw = subnet_bits[best_row, j]
            _subnet_insert(sw, peer, depth, seg_bits, level_salt, cell_count, subnet_seed)
            idx = _hash64(peer, host_seed) % ubits
            w = np.int64(idx >> np.uint64(6))
            bit = _U1 << (idx & np.uint64(63))
            if host_bits[best_row, j, w] & bit == _U0:
                host_bits[best_row, j, w] |= bit
                host_set_count[best_row, j] += 1
            outcome = np.uint8(2)
        outcomes[t] = outcome
