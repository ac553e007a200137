"""Flattened cycle-accurate network engine.

This module is plain Python and also the source of the compiled extension:
``_engine.pxd`` adds static types and the build cythonizes this file.  The
engine works on integer arrays prepared by :mod:`hetnoc.sim`; nothing in
here knows about files, reports or configuration.

Indexing
--------
nodes      routers and PEs, ``0 .. n_nodes-1``
ports      input side of every connection end, contiguous per node
vcs        global virtual-channel index; each port owns ``vc_count`` of them
links      unidirectional; ``port_out_link[p]`` leaves port ``p`` towards its
           peer, ``port_in_link[p]`` arrives at ``p``

A flit is the integer ``packet_id * stride + sequence``.

Schedule
--------
At each timestamp the firing nodes run a sample pass, then a compute pass,
both in ascending node id.  Whatever a node writes at ``t`` (flits into a
link register, credits into a link's credit queue) becomes visible to the
other side at its first edge strictly after ``t``.
"""

from array import array

from .errors import SimulationError

N_EVENTS = 5
EV_BUFFER_WRITE = 0
EV_BUFFER_READ = 1
EV_BUFFER_POP = 2
EV_ROUTING = 3
EV_CROSSBAR = 4


def _filled(n, value):
    return array("q", [value]) * n


class Engine:
    """Mutable simulation state plus the per-edge transition function."""

    def __init__(self, layout, hook=None, trace_links=False, trace_edges=False):
        n = layout["n_nodes"]
        self.n_nodes = n
        self.n_ports = layout["n_ports"]
        self.n_vcs = layout["n_vcs"]
        self.n_links = layout["n_links"]
        self.stride = layout["stride"]
        self.n_colors = layout["n_colors"]
        self.n_states = 2 * self.n_colors + 3
        self.vmax = layout["vmax"]
        self.dmax = layout["dmax"]
        self.maxp = layout["maxp"]

        self.node_is_router = array("q", layout["node_is_router"])
        self.node_period = array("q", layout["node_period"])
        self.node_port_start = array("q", layout["node_port_start"])
        self.node_port_count = array("q", layout["node_port_count"])
        self.node_has_tasks = array("q", layout["node_has_tasks"])
        self.port_peer = array("q", layout["port_peer"])
        self.port_vc_count = array("q", layout["port_vc_count"])
        self.port_vc_base = array("q", layout["port_vc_base"])
        self.port_in_link = array("q", layout["port_in_link"])
        self.port_out_link = array("q", layout["port_out_link"])
        self.vc_depth = array("q", layout["vc_depth"])
        self.vc_buf_base = array("q", layout["vc_buf_base"])
        self.route_port = array("q", layout["route_port"])
        self.link_cq_base = array("q", layout["link_cq_base"])
        self.link_cq_cap = array("q", layout["link_cq_cap"])

        node_vc_start = _filled(n, 0)
        node_vc_count = _filled(n, 0)
        for i in range(n):
            ps = self.node_port_start[i]
            pc = self.node_port_count[i]
            if pc > 0:
                node_vc_start[i] = self.port_vc_base[ps]
                node_vc_count[i] = (
                    self.port_vc_base[ps + pc - 1] + self.port_vc_count[ps + pc - 1] - self.port_vc_base[ps]
                )
        self.node_vc_start = node_vc_start
        self.node_vc_count = node_vc_count

        nv = self.n_vcs
        self.buf = _filled(layout["buf_total"], -1)
        self.buf_time = _filled(layout["buf_total"], -1)
        self.vc_head = _filled(nv, 0)
        self.vc_count = _filled(nv, 0)
        self.vc_route = _filled(nv, -1)
        self.vc_out_vc = _filled(nv, -1)
        self.vc_va_time = _filled(nv, -1)
        self.vc_last = _filled(nv, -1)
        self.vc_owner = _filled(nv, -1)
        self.credits = array("q", layout["vc_depth"])

        nl = self.n_links
        self.reg_flit = _filled(nl, -1)
        self.reg_vc = _filled(nl, -1)
        self.reg_time = _filled(nl, -1)
        cq_total = 0
        for i in range(nl):
            cq_total += self.link_cq_cap[i]
        self.cq_vc = _filled(cq_total, -1)
        self.cq_time = _filled(cq_total, -1)
        self.cq_head = _filled(nl, 0)
        self.cq_len = _filled(nl, 0)
        self.link_state = _filled(nl, 0)
        s = self.n_states
        self.link_counts = _filled(nl * s * s, 0)
        self.link_flits = _filled(nl, 0)

        np_ = self.n_ports
        self.rr_in = _filled(np_, 0)
        self.rr_out = _filled(np_, 0)
        self.va_rr = _filled(np_, 0)
        self.nom = _filled(np_, -1)
        self.turn_counts = _filled(np_ * self.maxp, 0)
        self.vc_usage = _filled(np_ * (self.vmax + 1), 0)
        self.buff_hist = _filled(nv * self.dmax, 0)
        self.events = _filled(n * N_EVENTS, 0)
        self.router_occ = _filled(n, 0)
        max_router_vcs = 1
        for i in range(n):
            if node_vc_count[i] > max_router_vcs:
                max_router_vcs = node_vc_count[i]
        self.va_list = _filled(max_router_vcs, -1)

        self.pe_pkt = _filled(n, -1)
        self.pe_seq = _filled(n, 0)
        self.pe_vc = _filled(n, -1)
        self.q_head = _filled(n, -1)
        self.q_tail = _filled(n, -1)

        self.pkt_count = 0
        self.pkt_cap = 0
        self._pkt_py = []
        self._grow_packets(max(16, layout.get("packet_hint", 16)))

        periods = sorted(set(layout["node_period"]))
        self.n_domains = len(periods)
        if self.n_domains > 62:
            raise SimulationError("more than 62 distinct clock periods")
        self.dom_period = array("q", periods)
        self.dom_next = _filled(self.n_domains, 0)
        self.dom_edges = _filled(self.n_domains, 0)
        node_domain = _filled(n, 0)
        for i in range(n):
            node_domain[i] = periods.index(self.node_period[i])
        self.node_domain = node_domain
        self.orders = {}

        self.injected_flits = 0
        self.ejected_flits = 0
        self.now = -1
        self.hook = hook
        self.flit_latencies = []
        self.completed = []
        self.trace_links_on = 1 if trace_links else 0
        self.trace_edges_on = 1 if trace_edges else 0
        self.link_trace = []
        self.edge_trace = []

    # -- packets ---------------------------------------------------------

    def _grow_packets(self, cap):
        fills = (-1, -1, -1, 0, -1, -1, -1, 0, -1)
        if not self._pkt_py:
            grown = [_filled(cap, f) for f in fills]
        else:
            grown = []
            for old, fill in zip(self._pkt_py, fills):
                new = array("q", old)
                new.extend(_filled(cap - len(old), fill))
                grown.append(new)
        self._pkt_py = grown
        self.pkt_src = grown[0]
        self.pkt_dst = grown[1]
        self.pkt_color = grown[2]
        self.pkt_len = grown[3]
        self.pkt_created = grown[4]
        self.pkt_injected = grown[5]
        self.pkt_ejected = grown[6]
        self.pkt_measured = grown[7]
        self.pkt_next = grown[8]
        self.pkt_cap = cap

    def add_packet(self, src, dst, color, length, created, measured):
        """Append a packet to the source queue of PE ``src``; returns its id."""
        if length < 1 or length > self.stride:
            raise SimulationError(f"packet length {length} outside 1..{self.stride}")
        if color < 0 or color >= self.n_colors:
            raise SimulationError(f"undeclared color index {color}")
        if self.node_is_router[src] or self.node_is_router[dst] or src == dst:
            raise SimulationError(f"packet endpoints {src}->{dst} must be two distinct PEs")
        tail = self.q_tail[src]
        if tail >= 0 and self.pkt_created[tail] > created:
            raise SimulationError("source queue creation times must be non-decreasing")
        if self.pkt_count == self.pkt_cap:
            self._grow_packets(self.pkt_cap * 2)
        pid = self.pkt_count
        self.pkt_count = pid + 1
        self.pkt_src[pid] = src
        self.pkt_dst[pid] = dst
        self.pkt_color[pid] = color
        self.pkt_len[pid] = length
        self.pkt_created[pid] = created
        self.pkt_measured[pid] = 1 if measured else 0
        if tail >= 0:
            self.pkt_next[tail] = pid
        else:
            self.q_head[src] = pid
        self.q_tail[src] = pid
        return pid

    # -- kernel ----------------------------------------------------------

    def _order(self, mask):
        order = self.orders.get(mask)
        if order is None:
            order = array("q")
            for i in range(self.n_nodes):
                if (mask >> self.node_domain[i]) & 1:
                    order.append(i)
            self.orders[mask] = order
        return order

    def run(self, until):
        """Advance through every edge ``<= until``; returns timestamps processed."""
        steps = 0
        while True:
            t = -1
            for d in range(self.n_domains):
                if t < 0 or self.dom_next[d] < t:
                    t = self.dom_next[d]
            if t > until:
                break
            if t < self.now:
                raise SimulationError(f"event at {t} ps scheduled in the past")
            mask = 0
            for d in range(self.n_domains):
                if self.dom_next[d] == t:
                    mask |= 1 << d
            order = self._order(mask)
            self.now = t
            n_fire = len(order)
            for i in range(n_fire):
                node = order[i]
                if self.node_is_router[node]:
                    self._sample_router(node, t)
                else:
                    self._sample_pe(node, t)
            for i in range(n_fire):
                node = order[i]
                if self.node_is_router[node]:
                    self._compute_router(node, t)
                    self._sample_usage(node)
                else:
                    self._compute_pe(node, t)
                self._observe(node, t)
                if self.trace_edges_on:
                    self.edge_trace.append((t, node))
            for d in range(self.n_domains):
                if self.dom_next[d] == t:
                    self.dom_next[d] = t + self.dom_period[d]
                    self.dom_edges[d] += 1
            steps += 1
        return steps

    # -- links -----------------------------------------------------------

    def _push_credit(self, link, vc, now):
        n = self.cq_len[link]
        cap = self.link_cq_cap[link]
        if n >= cap:
            raise SimulationError(f"credit queue overflow on link {link}")
        pos = self.link_cq_base[link] + (self.cq_head[link] + n) % cap
        self.cq_vc[pos] = vc
        self.cq_time[pos] = now
        self.cq_len[link] = n + 1
        return 0

    def _take_credits(self, node, now):
        ps = self.node_port_start[node]
        for p in range(ps, ps + self.node_port_count[node]):
            link = self.port_out_link[p]
            cap = self.link_cq_cap[link]
            base = self.link_cq_base[link]
            while self.cq_len[link] > 0:
                pos = base + self.cq_head[link]
                if self.cq_time[pos] >= now:
                    break
                g = self.cq_vc[pos]
                self.credits[g] += 1
                if self.credits[g] > self.vc_depth[g]:
                    raise SimulationError(f"credit counter of vc {g} exceeds its depth")
                self.cq_head[link] = (self.cq_head[link] + 1) % cap
                self.cq_len[link] -= 1
        return 0

    def _check_wormhole(self, g, f):
        seq = f % self.stride
        last = self.vc_last[g]
        if seq == 0:
            if last >= 0:
                raise SimulationError(f"head flit {f} interleaves an open packet on vc {g}")
        elif last != f - 1:
            raise SimulationError(f"flit {f} on vc {g} does not continue flit {last}")
        if seq == self.pkt_len[f // self.stride] - 1:
            self.vc_last[g] = -1
        else:
            self.vc_last[g] = f
        return 0

    def _observe(self, node, now):
        ps = self.node_port_start[node]
        s = self.n_states
        for p in range(ps, ps + self.node_port_count[node]):
            link = self.port_out_link[p]
            prev = self.link_state[link]
            f = self.reg_flit[link]
            if f >= 0 and self.reg_time[link] == now:
                if f % self.stride == 0:
                    new = 1
                else:
                    new = 3 + 2 * self.pkt_color[f // self.stride]
                self.link_flits[link] += 1
                if self.trace_links_on:
                    self.link_trace.append((link, now, f))
            elif prev == 0:
                new = 0
            elif prev <= 2:
                new = 2
            else:
                new = 4 + 2 * ((prev - 3) // 2)
            self.link_counts[(link * s + prev) * s + new] += 1
            self.link_state[link] = new
        return 0

    # -- routers ---------------------------------------------------------

    def _sample_router(self, r, now):
        ps = self.node_port_start[r]
        for p in range(ps, ps + self.node_port_count[r]):
            link = self.port_in_link[p]
            f = self.reg_flit[link]
            if f >= 0 and self.reg_time[link] < now:
                g = self.reg_vc[link]
                c = self.vc_count[g]
                depth = self.vc_depth[g]
                if c >= depth:
                    raise SimulationError(f"flit {f} arrived at full vc {g} of router {r}")
                self._check_wormhole(g, f)
                pos = self.vc_buf_base[g] + (self.vc_head[g] + c) % depth
                self.buf[pos] = f
                self.buf_time[pos] = now
                self.vc_count[g] = c + 1
                self.router_occ[r] += 1
                self.events[r * N_EVENTS + EV_BUFFER_WRITE] += 1
                self.reg_flit[link] = -1
        self._take_credits(r, now)
        return 0

    def _compute_router(self, r, now):
        if self.router_occ[r] == 0:
            return 0
        ps = self.node_port_start[r]
        pc = self.node_port_count[r]
        v0 = self.node_vc_start[r]
        nvc = self.node_vc_count[r]
        stride = self.stride

        # route computation, collecting heads that wait for a VC
        nreq = 0
        for g in range(v0, v0 + nvc):
            if self.vc_count[g] == 0:
                continue
            pos = self.vc_buf_base[g] + self.vc_head[g]
            f = self.buf[pos]
            if f % stride != 0 or self.buf_time[pos] >= now:
                continue
            if self.vc_route[g] < 0:
                out = self.route_port[r * self.n_nodes + self.pkt_dst[f // stride]]
                if out < 0:
                    raise SimulationError(f"router {r} has no route for packet {f // stride}")
                self.vc_route[g] = out
                self.events[r * N_EVENTS + EV_ROUTING] += 1
            if self.vc_out_vc[g] < 0:
                self.va_list[nreq] = g
                nreq += 1

        # VC allocation: round robin over requesters, lowest free VC wins
        if nreq > 0:
            for o in range(ps, ps + pc):
                q = self.port_peer[o]
                qbase = self.port_vc_base[q]
                qn = self.port_vc_count[q]
                start = v0 + self.va_rr[o]
                j0 = 0
                while j0 < nreq and self.va_list[j0] < start:
                    j0 += 1
                for k in range(nreq):
                    g = self.va_list[(j0 + k) % nreq]
                    if self.vc_route[g] != o or self.vc_out_vc[g] >= 0:
                        continue
                    d = -1
                    for v in range(qn):
                        if self.vc_owner[qbase + v] == -1:
                            d = qbase + v
                            break
                    if d < 0:
                        break
                    self.vc_owner[d] = g
                    self.vc_out_vc[g] = d
                    self.vc_va_time[g] = now
                    self.va_rr[o] = (g - v0 + 1) % nvc

        # switch allocation, input first
        any_nom = 0
        for p in range(ps, ps + pc):
            self.nom[p] = -1
            n_in = self.port_vc_count[p]
            base = self.port_vc_base[p]
            start = self.rr_in[p]
            for k in range(n_in):
                g = base + (start + k) % n_in
                if self.vc_count[g] == 0:
                    continue
                d = self.vc_out_vc[g]
                if d < 0 or self.vc_va_time[g] >= now:
                    continue
                if self.buf_time[self.vc_buf_base[g] + self.vc_head[g]] >= now:
                    continue
                if self.credits[d] <= 0:
                    continue
                if self.reg_flit[self.port_out_link[self.vc_route[g]]] >= 0:
                    continue
                self.nom[p] = g
                any_nom = 1
                break
        if any_nom == 0:
            return 0
        for o in range(ps, ps + pc):
            start = self.rr_out[o]
            for k in range(pc):
                p = ps + (start + k) % pc
                g = self.nom[p]
                if g >= 0 and self.vc_route[g] == o:
                    self.rr_out[o] = (p - ps + 1) % pc
                    self.rr_in[p] = (g - self.port_vc_base[p] + 1) % self.port_vc_count[p]
                    self.nom[p] = -1
                    self._traverse(r, p, g, o, now)
                    break
        return 0

    def _traverse(self, r, p, g, o, now):
        depth = self.vc_depth[g]
        pos = self.vc_buf_base[g] + self.vc_head[g]
        f = self.buf[pos]
        self.buf[pos] = -1
        self.vc_head[g] = (self.vc_head[g] + 1) % depth
        self.vc_count[g] -= 1
        self.router_occ[r] -= 1
        ev = r * N_EVENTS
        self.events[ev + EV_BUFFER_READ] += 1
        self.events[ev + EV_BUFFER_POP] += 1
        self.events[ev + EV_CROSSBAR] += 1
        d = self.vc_out_vc[g]
        self.credits[d] -= 1
        link = self.port_out_link[o]
        self.reg_flit[link] = f
        self.reg_vc[link] = d
        self.reg_time[link] = now
        self._push_credit(self.port_in_link[p], g, now)
        self.turn_counts[p * self.maxp + (o - self.node_port_start[r])] += 1
        if f % self.stride == self.pkt_len[f // self.stride] - 1:
            self.vc_owner[d] = -1
            self.vc_route[g] = -1
            self.vc_out_vc[g] = -1
        return 0

    def _sample_usage(self, r):
        ps = self.node_port_start[r]
        row = self.vmax + 1
        if self.router_occ[r] == 0:
            for p in range(ps, ps + self.node_port_count[r]):
                self.vc_usage[p * row] += 1
            return 0
        for p in range(ps, ps + self.node_port_count[r]):
            occ = 0
            base = self.port_vc_base[p]
            for g in range(base, base + self.port_vc_count[p]):
                c = self.vc_count[g]
                if c > 0:
                    occ += 1
                    self.buff_hist[g * self.dmax + c - 1] += 1
            self.vc_usage[p * row + occ] += 1
        return 0

    # -- processing elements ----------------------------------------------

    def _sample_pe(self, n, now):
        if self.node_port_count[n] == 0:
            return 0
        p = self.node_port_start[n]
        link = self.port_in_link[p]
        f = self.reg_flit[link]
        if f >= 0 and self.reg_time[link] < now:
            g = self.reg_vc[link]
            pid = f // self.stride
            if self.pkt_dst[pid] != n:
                raise SimulationError(f"packet {pid} for node {self.pkt_dst[pid]} ejected at node {n}")
            self._check_wormhole(g, f)
            self.reg_flit[link] = -1
            self.ejected_flits += 1
            self._push_credit(link, g, now)
            if self.pkt_measured[pid]:
                self.flit_latencies.append(now - self.pkt_created[pid])
            if f % self.stride == self.pkt_len[pid] - 1:
                self.pkt_ejected[pid] = now
                self.completed.append(pid)
                if self.hook is not None:
                    self.hook.on_delivery(pid, now)
        self._take_credits(n, now)
        return 0

    def _compute_pe(self, n, now):
        if self.node_port_count[n] == 0:
            return 0
        if self.node_has_tasks[n] and self.hook is not None:
            self.hook.on_edge(n, now)
        pid = self.pe_pkt[n]
        if pid < 0:
            pid = self.q_head[n]
            if pid < 0 or self.pkt_created[pid] > now:
                return 0
            self.q_head[n] = self.pkt_next[pid]
            if self.q_head[n] < 0:
                self.q_tail[n] = -1
            self.pe_pkt[n] = pid
            self.pe_seq[n] = 0
            self.pe_vc[n] = -1
        p = self.node_port_start[n]
        d = self.pe_vc[n]
        if d < 0:
            q = self.port_peer[p]
            qbase = self.port_vc_base[q]
            for v in range(self.port_vc_count[q]):
                if self.vc_owner[qbase + v] == -1:
                    d = qbase + v
                    break
            if d < 0:
                return 0
            self.vc_owner[d] = -2
            self.pe_vc[n] = d
        link = self.port_out_link[p]
        if self.reg_flit[link] >= 0 or self.credits[d] <= 0:
            return 0
        seq = self.pe_seq[n]
        self.reg_flit[link] = pid * self.stride + seq
        self.reg_vc[link] = d
        self.reg_time[link] = now
        self.credits[d] -= 1
        self.injected_flits += 1
        if seq == 0:
            self.pkt_injected[pid] = now
        seq += 1
        if seq == self.pkt_len[pid]:
            self.vc_owner[d] = -1
            self.pe_pkt[n] = -1
            self.pe_vc[n] = -1
            self.pe_seq[n] = 0
        else:
            self.pe_seq[n] = seq
        return 0

    # -- checks ----------------------------------------------------------

    def resident_flits(self):
        total = 0
        for g in range(self.n_vcs):
            total += self.vc_count[g]
        for link in range(self.n_links):
            if self.reg_flit[link] >= 0:
                total += 1
        return total

    def check_credits(self):
        """First vc violating credit soundness, or -1."""
        for p in range(self.n_ports):
            link = self.port_in_link[p]
            base = self.port_vc_base[p]
            cap = self.link_cq_cap[link]
            cq_base = self.link_cq_base[link]
            for g in range(base, base + self.port_vc_count[p]):
                total = self.vc_count[g] + self.credits[g]
                for k in range(self.cq_len[link]):
                    if self.cq_vc[cq_base + (self.cq_head[link] + k) % cap] == g:
                        total += 1
                if self.reg_flit[link] >= 0 and self.reg_vc[link] == g:
                    total += 1
                if total != self.vc_depth[g]:
                    return g
        return -1

    def drain_latencies(self):
        out = self.flit_latencies
        self.flit_latencies = []
        return out

    def drain_completed(self):
        out = self.completed
        self.completed = []
        return out

    def arrays(self):
        """Named views of the state arrays (read-only use intended)."""
        return {
            "node_domain": self.node_domain,
            "dom_period": self.dom_period,
            "dom_edges": self.dom_edges,
            "dom_next": self.dom_next,
            "vc_count": self.vc_count,
            "vc_depth": self.vc_depth,
            "vc_owner": self.vc_owner,
            "vc_route": self.vc_route,
            "vc_out_vc": self.vc_out_vc,
            "credits": self.credits,
            "reg_flit": self.reg_flit,
            "reg_vc": self.reg_vc,
            "reg_time": self.reg_time,
            "cq_vc": self.cq_vc,
            "cq_time": self.cq_time,
            "cq_head": self.cq_head,
            "cq_len": self.cq_len,
            "link_cq_base": self.link_cq_base,
            "link_cq_cap": self.link_cq_cap,
            "link_state": self.link_state,
            "link_counts": self.link_counts,
            "link_flits": self.link_flits,
            "turn_counts": self.turn_counts,
            "vc_usage": self.vc_usage,
            "buff_hist": self.buff_hist,
            "events": self.events,
            "pkt_src": self.pkt_src,
            "pkt_dst": self.pkt_dst,
            "pkt_color": self.pkt_color,
            "pkt_len": self.pkt_len,
            "pkt_created": self.pkt_created,
            "pkt_injected": self.pkt_injected,
            "pkt_ejected": self.pkt_ejected,
            "pkt_measured": self.pkt_measured,
        }
