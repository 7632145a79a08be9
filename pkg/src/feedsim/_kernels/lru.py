"""LRU edge-cache kernel.

The cache is modelled as a doubly linked list over file slots plus two
sentinel nodes, so hit/miss/evict are O(1) per request regardless of
catalog size. Requests reference files by dense integer id.
"""

import numpy as np

from . import maybe_jit


def lru_simulate_py(file_ids, file_bytes, capacity_bytes):
    """Replay a request stream against one LRU cache.

    file_ids: int64[n_req] dense ids in [0, n_files)
    file_bytes: float64[n_files] size of each file
    capacity_bytes: cache capacity

    Returns (hits uint8[n_req], oversize uint8[n_files]) where oversize
    marks files larger than the whole cache (always-miss).
    """
    n_req = file_ids.shape[0]
    n_files = file_bytes.shape[0]
    hits = np.zeros(n_req, dtype=np.uint8)
    oversize = np.zeros(n_files, dtype=np.uint8)

    # Node layout: 0..n_files-1 are files, n_files is HEAD (MRU side),
    # n_files+1 is TAIL (LRU side).
    head = n_files
    tail = n_files + 1
    nxt = np.full(n_files + 2, -1, dtype=np.int64)
    prv = np.full(n_files + 2, -1, dtype=np.int64)
    in_cache = np.zeros(n_files, dtype=np.uint8)
    nxt[head] = tail
    prv[tail] = head
    used = 0.0

    for r in range(n_req):
        f = file_ids[r]
        if in_cache[f] == 1:
            hits[r] = 1
            # unlink and move to MRU position
            prv[nxt[f]] = prv[f]
            nxt[prv[f]] = nxt[f]
            nxt[f] = nxt[head]
            prv[f] = head
            prv[nxt[head]] = f
            nxt[head] = f
        else:
            size = file_bytes[f]
            if size > capacity_bytes:
                oversize[f] = 1
                continue
            while used + size > capacity_bytes:
                victim = prv[tail]
                prv[tail] = prv[victim]
                nxt[prv[victim]] = tail
                in_cache[victim] = 0
                used -= file_bytes[victim]
            nxt[f] = nxt[head]
            prv[f] = head
            prv[nxt[head]] = f
            nxt[head] = f
            in_cache[f] = 1
            used += size
    return hits, oversize


lru_simulate = maybe_jit(lru_simulate_py)
