"""One simulation run: topology + MAC + probes + DSDV + CBR traffic."""

from __future__ import annotations

import io
from dataclasses import dataclass

from .config import ScenarioConfig
from .dsdv import DsdvAgent, DsdvParams, UpdateMessage
from .engine import RngStream, Simulator, to_s, to_us
from .mac import Frame, FrameKind, Mac, MacParams, Outcome
from .metrics import LinkMeasure, MetricKind, elb, link_cost
from .probing import ProbeParams, ProbePayload, Prober
from .topology import Topology, place_random
from .traffic import Flow, Packet, RunSummary, TrafficManager, choose_pairs

MAX_HOPS = 64


def build_topology(cfg: ScenarioConfig, seed: int) -> Topology:
    if cfg.positions is not None:
        positions = [tuple(p) for p in cfg.positions]
    else:
        positions = place_random(cfg.nodes, cfg.area, RngStream(seed, "placement"))
    rates = {}
    default_rate = 2e6
    if isinstance(cfg.nominal_rates, (int, float)):
        default_rate = float(cfg.nominal_rates)
    else:
        rates = {(int(m), int(n)): float(r) for m, n, r in cfg.nominal_rates}
    losses = {}
    ramp = 0.0
    if cfg.loss_model["kind"] == "explicit":
        losses = {(int(m), int(n)): (float(lf), float(lr)) for m, n, lf, lr in cfg.loss_model["table"]}
    else:
        ramp = float(cfg.loss_model.get("max_loss", 0.0))
    return Topology(positions, tx_range=cfg.tx_range, cs_range=cfg.cs_range, area=cfg.area,
                    default_rate=default_rate, rates=rates, losses=losses, ramp_max_loss=ramp)


@dataclass
class RunResult:
    metric: str
    seed: int
    rate: float
    nodes: int
    summary: RunSummary
    mac_totals: dict
    events: int
    ok: bool = True
    error: str = ""


class NetworkSim:
    """Wires every layer of one run together and owns the drop accounting."""

    def __init__(self, cfg: ScenarioConfig, metric: MetricKind | str, rate: float, seed: int,
                 topology: Topology | None = None, trace: io.TextIOBase | None = None,
                 record_links: bool = False, route_times: tuple = ()):
        self.cfg = cfg
        self.metric = MetricKind.parse(metric)
        self.rate = rate
        self.seed = seed
        self.topo = topology or build_topology(cfg, seed)
        self.sim = Simulator(seed, trace=trace)
        self.mac = Mac(self.sim, self.topo, MacParams(**cfg.mac), deliver=self._on_frame,
                       tx_result=self._on_tx_result, on_queue_drop=self._on_queue_drop)
        self.prober = Prober(self.sim, self.mac,
                             ProbeParams(interval=cfg.probe_interval, window=cfg.window),
                             on_window_close=self._on_window_close)
        self.rate_norm = self.topo.max_rate()
        self.b_exp = {l.key: elb(self.topo.contention_domain(l).rates()) for l in self.topo.links()}
        dsdv_params = DsdvParams(full_dump_period=cfg.full_dump_period, **cfg.dsdv)
        route_rng = self.sim.rng("routing")
        self.agents = [
            DsdvAgent(n, self.sim, link_cost=self._cost_fn(n), send=self._send_fn(n),
                      transmit=self._transmit_fn(n), drop=self._drop, params=dsdv_params,
                      rng=route_rng)
            for n in range(self.topo.size)
        ]
        self.flows = self._make_flows()
        self.traffic = TrafficManager(self.sim, self.flows, self._inject)
        self.update_msgs = {"full_dump": 0, "incremental": 0}
        self.record_links = record_links
        self.link_rows: list[tuple] = []
        self.route_rows: list[tuple] = []
        for t in sorted(route_times):
            self.sim.schedule(to_us(t), self._snapshot_routes, target="dump", kind="routes")

    # ---------------------------------------------------------------- set-up

    def _make_flows(self) -> list[Flow]:
        rng = self.sim.rng("traffic")
        if isinstance(self.cfg.flows, int):
            pairs = choose_pairs(self.topo, self.cfg.flows, rng)
        else:
            pairs = [tuple(p) for p in self.cfg.flows]
        flows = []
        for fid, (s, d) in enumerate(pairs):
            offset = rng.uniform(0.0, 1.0 / self.rate)
            flows.append(Flow(fid, s, d, self.rate, self.cfg.traffic_start + offset,
                              self.cfg.duration, self.cfg.packet_size))
        return flows

    def measure(self, node: int, nbr: int) -> LinkMeasure:
        p = self.prober
        return LinkMeasure(d_f=p.ratio_to(node, nbr), d_r=p.ratio_from(node, nbr),
                           b_exp=self.b_exp[(node, nbr) if node < nbr else (nbr, node)],
                           i_m=p.own_interference(node, "sender"),
                           i_n=p.neighbor_interference(node, nbr),
                           updated_at=self.sim.now)

    def _cost_fn(self, node):
        def cost(nbr: int) -> float:
            if self.topo.link(node, nbr) is None:
                return float("inf")
            return link_cost(self.metric, self.measure(node, nbr), self.rate_norm).value
        return cost

    def _send_fn(self, node):
        def send(msg: UpdateMessage) -> None:
            self.update_msgs[msg.kind] += 1
            frame = self.mac.broadcast_frame(node, msg.size(self.agents[node].params), msg)
            self.mac.broadcast(node, frame)
        return send

    def _transmit_fn(self, node):
        def transmit(pkt: Packet, next_hop: int) -> None:
            self._unicast(node, pkt, next_hop)
        return transmit

    # --------------------------------------------------------------- datapath

    def _inject(self, pkt: Packet) -> None:
        self._route(pkt.src, pkt)

    def _route(self, node: int, pkt: Packet) -> None:
        pkt.custody = node
        if node == pkt.dst:
            self.traffic.on_delivery(pkt)
            return
        if pkt.hops >= MAX_HOPS:
            self._drop(pkt, "ttl")
            return
        nh = self.agents[node].forward(pkt, pkt.dst)
        if nh is not None:
            self._unicast(node, pkt, nh)

    def _unicast(self, node: int, pkt: Packet, next_hop: int) -> None:
        self.mac.enqueue_frame(node, self.mac.data_frame(node, next_hop, pkt.size, pkt))

    def _drop(self, pkt: Packet, cause: str) -> None:
        self.traffic.on_drop(pkt, cause)

    def _on_queue_drop(self, node: int, frame: Frame) -> None:
        if isinstance(frame.payload, Packet):
            self._drop(frame.payload, "mac_queue")

    def _on_frame(self, node: int, frame: Frame) -> None:
        payload = frame.payload
        if frame.kind is FrameKind.DATA:
            if isinstance(payload, Packet):
                payload.hops += 1
                self._route(node, payload)
        elif isinstance(payload, ProbePayload):
            self.prober.on_probe_received(node, frame)
        elif isinstance(payload, UpdateMessage):
            self.agents[node].on_update(payload, frame.src)

    def _on_tx_result(self, node: int, frame: Frame, outcome: Outcome) -> None:
        if outcome is Outcome.DELIVERED:
            return
        pkt = frame.payload
        # the receiver may hold the packet even though every ACK was lost
        if isinstance(pkt, Packet) and pkt.custody == node:
            self._drop(pkt, "retries")
        self.agents[node].on_link_break(frame.dst)

    def _on_window_close(self) -> None:
        for n, agent in enumerate(self.agents):
            agent.on_probe_window(lambda nbr, n=n: self.prober.ratio_from(n, nbr) > 0)
        if self.record_links:
            t = to_s(self.sim.now)
            for n in range(self.topo.size):
                for nbr in self.topo.neighbors[n]:
                    m = self.measure(n, nbr)
                    cost = link_cost(self.metric, m, self.rate_norm).value
                    self.link_rows.append((t, n, nbr, m.d_f, m.d_r, m.b_exp, m.i_m, m.i_n, cost))

    def _snapshot_routes(self) -> None:
        t = to_s(self.sim.now)
        for agent in self.agents:
            for dest, e in sorted(agent.table.items()):
                self.route_rows.append((t, agent.node, dest, e.next_hop, e.seq, e.cost))

    # -------------------------------------------------------------------- run

    def run(self) -> RunResult:
        self.prober.start()
        for agent in self.agents:
            agent.start()
        self.traffic.start()
        self.sim.run_until(to_us(self.cfg.duration))
        self.traffic.finish()
        summary = self.traffic.summarize(self.cfg.duration)
        totals = {"tx": 0, "rx": 0, "drops": 0, "collisions": 0, "retries": 0}
        for n in range(self.topo.size):
            c = self.mac.counters(n)
            for k in totals:
                totals[k] += getattr(c, k)
        return RunResult(self.metric.value, self.seed, self.rate, self.topo.size, summary,
                         totals, self.sim.dispatched)


def run_cell(cfg: ScenarioConfig, metric, rate: float, seed: int, trace=None) -> RunResult:
    return NetworkSim(cfg, metric, rate, seed, trace=trace).run()


def elapsed_s(sim: Simulator) -> float:
    return to_s(sim.now)
