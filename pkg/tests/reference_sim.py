"""Literal slot-by-slot cascade simulator used as a behavioral oracle.

Unlike the package's vectorized recursion, this walks time one slot at
a time with explicit FIFO queues, following the event ordering of the
simulator's contract: arrivals join first, then nodes are visited in
cascade order, each flipping one coin for its head-of-line packet if
that packet is transmittable this slot.  A success hands the packet to
the next queue for the following slot; with ``instantaneous`` set, the
hand-off happens within the same slot, so a packet can cross several
idle nodes in one slot (each downstream node is visited later in the
same sweep).  Deliberately slow and obvious.
"""

from __future__ import annotations

import numpy as np


def run_slots(
    p_seq,
    arrival_slots,
    rng: np.random.Generator,
    instantaneous: bool = False,
    max_slots: int = 10**6,
):
    """Return (B, node_waits) for the given arrival slots.

    ``B[i]`` is the delivery slot of packet ``i``; ``node_waits[j][i]``
    spans from packet ``i`` becoming available at node ``j`` to its
    success there, inclusive (instantaneous mode scores a same-slot
    relay as zero), so the per-packet waits sum to the end-to-end
    delay.
    """
    r = len(p_seq)
    n = len(arrival_slots)
    queues: list[list[int]] = [[] for _ in range(r)]
    avail_at = np.zeros((n, r), dtype=np.int64)
    done_at = np.zeros((n, r), dtype=np.int64)
    # a node that succeeded in slot t serves its next packet at t+1
    blocked_until = [0] * r
    B = np.zeros(n, dtype=np.int64)
    pending = sorted(range(n), key=lambda i: arrival_slots[i])
    delivered = 0
    t = 0
    while delivered < n:
        t += 1
        if t > max_slots:
            raise RuntimeError("reference simulation exceeded the slot budget")
        while pending and arrival_slots[pending[0]] == t:
            i = pending.pop(0)
            queues[0].append(i)
            avail_at[i, 0] = t
        for j in range(r):
            if not queues[j]:
                continue
            i = queues[j][0]
            if avail_at[i, j] > t or blocked_until[j] > t:
                continue
            if rng.random() < p_seq[j]:
                continue
            queues[j].pop(0)
            done_at[i, j] = t
            blocked_until[j] = t + 1
            hand_off = t if instantaneous else t + 1
            if j + 1 < r:
                queues[j + 1].append(i)
                avail_at[i, j + 1] = hand_off
            else:
                B[i] = hand_off
                delivered += 1
    extra = 0 if instantaneous else 1
    waits = [done_at[:, j] - avail_at[:, j] + extra for j in range(r)]
    return B, waits
