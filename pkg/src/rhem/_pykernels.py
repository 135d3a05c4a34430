"""Pure-Python statistic kernels.

Mirrors ``rhem._kernels`` (Cython) operation for operation, including the
order of floating-point accumulation, so both backends agree to rounding.
"""
import bisect
import math

SUB_REP = 0
PRIOR_SUCC = 1
CLOSURE = 2
SUCC_DISPARITY = 3
NUM_COLLAB = 4
NUM_COLLAB_SUCC = 5
NUM_AUTH = 6


def _binom_table(k, orders):
    # table[c][j] = C(c, orders[j]) for 0 <= c <= k, multiplicative form
    table = []
    for c in range(k + 1):
        row = []
        for p in orders:
            if p > c:
                row.append(0.0)
                continue
            b = 1.0
            for i in range(1, p + 1):
                b = b * (c - p + i) / i
            row.append(b)
        table.append(row)
    return table


class KernelState:
    """Append-only event storage with per-actor incidence lists."""

    def __init__(self):
        self.ev_time = []
        self.ev_size = []
        self.ev_outcome = []
        self.ev_members = []
        self.actor_events = []

    @property
    def n_events(self):
        return len(self.ev_time)

    @property
    def n_actors(self):
        return len(self.actor_events)

    def ensure_actors(self, n):
        while len(self.actor_events) < n:
            self.actor_events.append([])

    def add_event(self, members, time, outcome):
        e = len(self.ev_time)
        members = [int(m) for m in members]
        self.ensure_actors(max(members) + 1)
        self.ev_time.append(float(time))
        self.ev_size.append(len(members))
        self.ev_outcome.append(float(outcome))
        self.ev_members.append(tuple(members))
        for a in members:
            self.actor_events[a].append(e)

    def n_visible(self, t):
        return bisect.bisect_left(self.ev_time, t)

    def events_of(self, actor):
        if actor < 0 or actor >= len(self.actor_events):
            return []
        return list(self.actor_events[actor])

    def event(self, e):
        return self.ev_time[e], self.ev_size[e], self.ev_outcome[e], self.ev_members[e]

    def evaluate(self, q_ptr, q_members, t, half_life, kinds, orders):
        """Evaluate statistics for a CSR batch of query hyperedges.

        Returns a list of rows aligned with ``kinds``/``orders``.  Member ids
        of ``-1`` denote actors without any history.
        """
        t = float(t)
        n_vis = self.n_visible(t)
        decay = half_life is not None and half_life > 0
        ev_time = self.ev_time
        ev_size = self.ev_size
        ev_out = self.ev_outcome
        ev_mem = self.ev_members
        act_ev = self.actor_events
        n_act = len(act_ev)

        need_orders = sorted({o for kd, o in zip(kinds, orders) if kd in (SUB_REP, PRIOR_SUCC)})
        order_pos = {p: j for j, p in enumerate(need_orders)}
        need_closure = CLOSURE in kinds

        out = []
        for q in range(len(q_ptr) - 1):
            mem = q_members[q_ptr[q]:q_ptr[q + 1]]
            k = len(mem)
            count = {}
            touched = []
            wcache = {}
            perf = [0.0] * k
            collab = [0.0] * k
            collab_succ = [0.0] * k
            slot = {}
            triples = []
            for i in range(k):
                a = mem[i]
                if a < 0 or a >= n_act:
                    continue
                evs = act_ev[a]
                for idx in range(len(evs) - 1, -1, -1):
                    e = evs[idx]
                    if e >= n_vis:
                        continue
                    if decay:
                        w = 2.0 ** (-(t - ev_time[e]) / half_life)
                    else:
                        w = 1.0
                    y = ev_out[e]
                    s1 = ev_size[e] - 1
                    perf[i] += w * y
                    collab[i] += w * s1
                    collab_succ[i] += w * y * s1
                    c = count.get(e)
                    if c is None:
                        touched.append(e)
                        wcache[e] = w
                        count[e] = 1
                    else:
                        count[e] = c + 1
                    if need_closure:
                        for b in ev_mem[e]:
                            if b == a:
                                continue
                            s = slot.get(b)
                            if s is None:
                                s = len(slot)
                                slot[b] = s
                            triples.append((i, s, w))

            den = [0.0] * len(need_orders)
            num = [0.0] * len(need_orders)
            if need_orders:
                table = _binom_table(k, need_orders)
                for e in touched:
                    row = table[count[e]]
                    w = wcache[e]
                    wy = w * ev_out[e]
                    for j in range(len(need_orders)):
                        b = row[j]
                        den[j] += w * b
                        num[j] += wy * b
                ktab = table[k]
            closure_total = 0.0
            if need_closure and k >= 2:
                L = len(slot)
                W = [0.0] * (k * L)
                seen = [False] * (k * L)
                nz = [[] for _ in range(k)]
                for i, s, w in triples:
                    c = i * L + s
                    if not seen[c]:
                        seen[c] = True
                        nz[i].append(s)
                    W[c] += w
                # min is zero off the shorter member's support
                for i in range(k):
                    bi = i * L
                    for j in range(i + 1, k):
                        bj = j * L
                        short = nz[j] if len(nz[j]) < len(nz[i]) else nz[i]
                        acc = 0.0
                        for s in short:
                            x = W[bi + s]
                            z = W[bj + s]
                            acc += x if x < z else z
                        closure_total += acc

            row_out = []
            for kd, p in zip(kinds, orders):
                if kd == SUB_REP:
                    j = order_pos[p]
                    row_out.append(den[j] / ktab[j] if p <= k else 0.0)
                elif kd == PRIOR_SUCC:
                    j = order_pos[p]
                    row_out.append(num[j] / den[j] if den[j] != 0.0 else 0.0)
                elif kd == CLOSURE:
                    row_out.append(closure_total / (k * (k - 1) / 2.0) if k >= 2 else 0.0)
                elif kd == SUCC_DISPARITY:
                    if k < 2:
                        row_out.append(0.0)
                    else:
                        mean = 0.0
                        for v in perf:
                            mean += v
                        mean /= k
                        ss = 0.0
                        for v in perf:
                            ss += (v - mean) * (v - mean)
                        row_out.append(math.sqrt(ss / (k - 1)))
                elif kd == NUM_COLLAB:
                    acc = 0.0
                    for v in collab:
                        acc += v
                    row_out.append(acc / k)
                elif kd == NUM_COLLAB_SUCC:
                    acc = 0.0
                    for v in collab_succ:
                        acc += v
                    row_out.append(acc / k)
                elif kd == NUM_AUTH:
                    row_out.append(float(k))
                else:
                    raise ValueError(f"unknown statistic kind {kd}")
            out.append(row_out)
        return out
