"""Fluid-flow playback kernel: advance one item from download to swipe.

Slot semantics (fixed step, download first, then play):
  1. The slot's byte budget is bandwidth * step.
  2. The current item downloads up to its cap (the cap is ignored while the
     buffer sits below the refill threshold, so a short prefetch cap cannot
     starve playback forever).
  3. Leftover budget pre-downloads the startup prefixes of upcoming items.
  4. Playback consumes buffer in real time, but only from the slot after
     the startup prefix completed; time short of a full step while the item
     is unfinished counts as rebuffering.

First frame is the end of the slot in which the startup prefix completes
(0 when the prefix was already present at item start).
"""

import numpy as np

from . import maybe_jit

EPS = 1e-9


def advance_item_py(
    bw_kbps,
    start_slot,
    step_s,
    media_bytes,
    bytes_per_sec,
    startup_bytes,
    init_bytes,
    playtime_s,
    cap_bytes,
    dl_budget,
    refill_buffer_s,
    pre_needed,
    pre_got,
    out_buffer,
    out_downloaded,
    out_rebuffer,
):
    """Returns (end_slot, played_s, rebuffer_s, first_frame_ms, item_dl_bytes, truncated).

    dl_budget is a hard byte allowance for everything downloaded during
    this advance (the session-level traffic cap); the prefetch cap lift
    never pierces it.
    """
    n_slots = bw_kbps.shape[0]
    n_pre = pre_needed.shape[0]
    got = init_bytes
    played = 0.0
    rebuffer = 0.0
    dl = 0.0
    started = got >= startup_bytes - EPS
    ff_ms = 0.0 if started else -1.0
    slot = start_slot
    truncated = 0
    allowance = dl_budget

    while played < playtime_s - EPS:
        if slot >= n_slots:
            truncated = 1
            break
        play_active = started
        budget = bw_kbps[slot] * 125.0 * step_s
        if budget > allowance:
            budget = allowance

        buffer_s = got / bytes_per_sec - played
        limit = cap_bytes
        if buffer_s < refill_buffer_s:
            limit = media_bytes
        take = limit - got
        if media_bytes - got < take:
            take = media_bytes - got
        if budget < take:
            take = budget
        if take < 0.0:
            take = 0.0
        got += take
        budget -= take
        dl += take
        if not started and got >= startup_bytes - EPS:
            started = True
            ff_ms = (slot - start_slot + 1) * step_s * 1000.0

        pre_take = 0.0
        for k in range(n_pre):
            if budget <= EPS:
                break
            need = pre_needed[k] - pre_got[k]
            if need > EPS:
                t = need if need < budget else budget
                pre_got[k] += t
                budget -= t
                pre_take += t
        allowance -= take + pre_take
        if allowance < 0.0:
            allowance = 0.0

        if play_active:
            buffer_s = got / bytes_per_sec - played
            play = step_s
            if buffer_s < play:
                play = buffer_s
            remaining = playtime_s - played
            if remaining < play:
                play = remaining
            if play < 0.0:
                play = 0.0
            played += play
            if played < playtime_s - EPS and play < step_s - EPS:
                rebuffer += step_s - play
                out_rebuffer[slot] = 1

        out_downloaded[slot] += take + pre_take
        buf_end = got / bytes_per_sec - played
        if buf_end < 0.0:
            buf_end = 0.0
        out_buffer[slot] = buf_end
        slot += 1

    return slot, played, rebuffer, ff_ms, dl, truncated


advance_item = maybe_jit(advance_item_py)
