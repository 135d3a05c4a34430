# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
# distutils: language = c++
"""Compiled statistic kernels.

Same interface and accumulation order as ``rhem._pykernels``.
"""
from libc.math cimport pow, sqrt
from libcpp.vector cimport vector

import numpy as np
cimport numpy as cnp

cnp.import_array()

cdef enum:
    SUB_REP = 0
    PRIOR_SUCC = 1
    CLOSURE = 2
    SUCC_DISPARITY = 3
    NUM_COLLAB = 4
    NUM_COLLAB_SUCC = 5
    NUM_AUTH = 6


cdef class KernelState:
    cdef vector[double] ev_time
    cdef vector[int] ev_size
    cdef vector[double] ev_outcome
    cdef vector[long] ev_ptr
    cdef vector[int] ev_members
    cdef vector[vector[int]] actor_events
    # scratch, all zero / -1 between queries
    cdef vector[int] count
    cdef vector[double] wcache
    cdef vector[int] slot

    def __cinit__(self):
        self.ev_ptr.push_back(0)

    @property
    def n_events(self):
        return self.ev_time.size()

    @property
    def n_actors(self):
        return self.actor_events.size()

    cpdef ensure_actors(self, long n):
        while <long>self.actor_events.size() < n:
            self.actor_events.push_back(vector[int]())
            self.slot.push_back(-1)

    def add_event(self, members, double time, double outcome):
        cdef int e = self.ev_time.size()
        cdef int a
        cdef list mem = [int(m) for m in members]
        self.ensure_actors(max(mem) + 1)
        self.ev_time.push_back(time)
        self.ev_size.push_back(len(mem))
        self.ev_outcome.push_back(outcome)
        for a in mem:
            self.ev_members.push_back(a)
            self.actor_events[a].push_back(e)
        self.ev_ptr.push_back(self.ev_members.size())
        self.count.push_back(0)
        self.wcache.push_back(0.0)

    cdef long _n_visible(self, double t) nogil:
        # first index with ev_time >= t
        cdef long lo = 0, hi = self.ev_time.size(), mid
        while lo < hi:
            mid = (lo + hi) // 2
            if self.ev_time[mid] < t:
                lo = mid + 1
            else:
                hi = mid
        return lo

    def n_visible(self, double t):
        return self._n_visible(t)

    def events_of(self, long actor):
        if actor < 0 or actor >= <long>self.actor_events.size():
            return []
        return list(self.actor_events[actor])

    def event(self, long e):
        mem = tuple(self.ev_members[i] for i in range(self.ev_ptr[e], self.ev_ptr[e + 1]))
        return self.ev_time[e], self.ev_size[e], self.ev_outcome[e], mem

    def evaluate(self, q_ptr, q_members, double t, half_life, kinds, orders):
        cdef long[::1] qp = np.ascontiguousarray(q_ptr, dtype=np.int64).astype(np.int_)
        cdef int[::1] qm = np.ascontiguousarray(q_members, dtype=np.intc)
        cdef int[::1] kd = np.ascontiguousarray(kinds, dtype=np.intc)
        cdef int[::1] od = np.ascontiguousarray(orders, dtype=np.intc)
        cdef double hl = 0.0 if half_life is None else float(half_life)
        need = sorted({int(o) for k, o in zip(kinds, orders) if k in (SUB_REP, PRIOR_SUCC)})
        cdef int[::1] need_orders = np.asarray(need if need else [0], dtype=np.intc)
        cdef int n_orders = len(need)
        cdef int[::1] order_pos = np.zeros(max([0] + need) + 1, dtype=np.intc)
        for j, p in enumerate(need):
            order_pos[p] = j
        cdef bint need_closure = CLOSURE in list(kinds)
        cdef long nq = qp.shape[0] - 1
        out = np.zeros((nq, kd.shape[0]), dtype=np.float64)
        cdef double[:, ::1] res = out
        with nogil:
            self._evaluate(qp, qm, t, hl, kd, od, need_orders, n_orders, order_pos,
                           need_closure, res)
        return out

    cdef void _evaluate(self, long[::1] qp, int[::1] qm, double t, double hl,
                        int[::1] kd, int[::1] od, int[::1] need_orders, int n_orders,
                        int[::1] order_pos, bint need_closure,
                        double[:, ::1] res) noexcept nogil:
        cdef long n_vis = self._n_visible(t)
        cdef bint decay = hl > 0
        cdef long nq = qp.shape[0] - 1
        cdef long n_act = self.actor_events.size()
        cdef long q, start, idx, node, s, L, bi, bj, c, r
        cdef int i, j, k, a, b, e, p, m, kind, ns = kd.shape[0]
        cdef double w, y, s1, acc, x, z, mean, ss, closure_total, bval
        cdef vector[int] touched
        cdef vector[double] perf, collab, collab_succ
        cdef vector[double] den, num, table
        cdef vector[int] tri_i, tri_s, touched_act
        cdef vector[double] tri_w, W
        cdef vector[long] nz_ptr, nz, nz_fill
        cdef vector[char] Wseen
        cdef long lo, hi
        den.resize(n_orders)
        num.resize(n_orders)

        for q in range(nq):
            start = qp[q]
            k = <int>(qp[q + 1] - start)
            perf.assign(k, 0.0)
            collab.assign(k, 0.0)
            collab_succ.assign(k, 0.0)
            touched.clear()
            tri_i.clear()
            tri_s.clear()
            tri_w.clear()
            touched_act.clear()
            L = 0
            for i in range(k):
                a = qm[start + i]
                if a < 0 or a >= n_act:
                    continue
                for idx in range(<long>self.actor_events[a].size() - 1, -1, -1):
                    e = self.actor_events[a][idx]
                    if e >= n_vis:
                        continue
                    if decay:
                        w = pow(2.0, -(t - self.ev_time[e]) / hl)
                    else:
                        w = 1.0
                    y = self.ev_outcome[e]
                    s1 = self.ev_size[e] - 1
                    perf[i] += w * y
                    collab[i] += w * s1
                    collab_succ[i] += w * y * s1
                    if self.count[e] == 0:
                        touched.push_back(e)
                        self.wcache[e] = w
                    self.count[e] += 1
                    if need_closure:
                        for node in range(self.ev_ptr[e], self.ev_ptr[e + 1]):
                            b = self.ev_members[node]
                            if b == a:
                                continue
                            s = self.slot[b]
                            if s < 0:
                                s = L
                                self.slot[b] = <int>L
                                touched_act.push_back(b)
                                L += 1
                            tri_i.push_back(i)
                            tri_s.push_back(<int>s)
                            tri_w.push_back(w)

            # binomial table C(c, need_orders[j]) for c in 0..k
            table.assign((k + 1) * n_orders, 0.0)
            for c in range(k + 1):
                for j in range(n_orders):
                    p = need_orders[j]
                    if p > c:
                        continue
                    bval = 1.0
                    for m in range(1, p + 1):
                        bval = bval * (c - p + m) / m
                    table[c * n_orders + j] = bval
            for j in range(n_orders):
                den[j] = 0.0
                num[j] = 0.0
            for r in range(<long>touched.size()):
                e = touched[r]
                c = self.count[e]
                w = self.wcache[e]
                y = w * self.ev_outcome[e]
                for j in range(n_orders):
                    bval = table[c * n_orders + j]
                    den[j] += w * bval
                    num[j] += y * bval
                self.count[e] = 0

            closure_total = 0.0
            if need_closure and k >= 2:
                W.assign(k * L, 0.0)
                nz_ptr.assign(k + 1, 0)
                for r in range(<long>tri_i.size()):
                    c = tri_i[r] * L + tri_s[r]
                    if W[c] == 0.0:
                        nz_ptr[tri_i[r] + 1] += 1
                    W[c] += tri_w[r]
                # per-member support lists in first-touch order (CSR)
                for i in range(k):
                    nz_ptr[i + 1] += nz_ptr[i]
                nz.resize(nz_ptr[k])
                nz_fill.assign(k, 0)
                Wseen.assign(k * L, 0)
                for r in range(<long>tri_i.size()):
                    c = tri_i[r] * L + tri_s[r]
                    if Wseen[c] == 0:
                        Wseen[c] = 1
                        nz[nz_ptr[tri_i[r]] + nz_fill[tri_i[r]]] = tri_s[r]
                        nz_fill[tri_i[r]] += 1
                for i in range(k):
                    bi = i * L
                    for j in range(i + 1, k):
                        bj = j * L
                        # min is zero off the shorter member's support
                        if nz_ptr[j + 1] - nz_ptr[j] < nz_ptr[i + 1] - nz_ptr[i]:
                            lo = nz_ptr[j]
                            hi = nz_ptr[j + 1]
                        else:
                            lo = nz_ptr[i]
                            hi = nz_ptr[i + 1]
                        acc = 0.0
                        for r in range(lo, hi):
                            s = nz[r]
                            x = W[bi + s]
                            z = W[bj + s]
                            acc += x if x < z else z
                        closure_total += acc
            for r in range(<long>touched_act.size()):
                self.slot[touched_act[r]] = -1

            for m in range(ns):
                kind = kd[m]
                p = od[m]
                if kind == SUB_REP:
                    if p <= k:
                        j = order_pos[p]
                        res[q, m] = den[j] / table[k * n_orders + j]
                    else:
                        res[q, m] = 0.0
                elif kind == PRIOR_SUCC:
                    j = order_pos[p]
                    res[q, m] = num[j] / den[j] if den[j] != 0.0 else 0.0
                elif kind == CLOSURE:
                    res[q, m] = closure_total / (k * (k - 1) / 2.0) if k >= 2 else 0.0
                elif kind == SUCC_DISPARITY:
                    if k < 2:
                        res[q, m] = 0.0
                    else:
                        mean = 0.0
                        for i in range(k):
                            mean += perf[i]
                        mean /= k
                        ss = 0.0
                        for i in range(k):
                            ss += (perf[i] - mean) * (perf[i] - mean)
                        res[q, m] = sqrt(ss / (k - 1))
                elif kind == NUM_COLLAB:
                    acc = 0.0
                    for i in range(k):
                        acc += collab[i]
                    res[q, m] = acc / k
                elif kind == NUM_COLLAB_SUCC:
                    acc = 0.0
                    for i in range(k):
                        acc += collab_succ[i]
                    res[q, m] = acc / k
                elif kind == NUM_AUTH:
                    res[q, m] = k
