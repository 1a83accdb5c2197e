"""The deterministic scenario runner.

One :class:`random.Random` seeded from the config drives every random
choice and nothing reads the wall clock, so a config always reproduces the
same event log byte for byte.

Phases run in order: compliance check and announcement, scripted
injunctions, enrollment (credential issuance with identity escrow), manifest
gossip, then the tick loop. Inside the loop each request passes credential
verification and the throttle, is mirrored to the board, and only then is
delivered to the target queue.
"""

from __future__ import annotations

import math
import random
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from assemblynet.assembly import (
    AnnouncementReceipt,
    AssemblyManifest,
    AssemblyStatus,
    Attestation,
    AttestationSet,
    Delay,
    Forbid,
    MalformedManifest,
    SimulatedTarget,
    TargetDescriptor,
    WindowClosed,
    announce,
    check_manifest,
    file_injunction,
    initial_status,
    manifest_digest,
    may_commence,
    opinion_digest,
    validate_manifest,
)
from assemblynet.gossip import (
    GossipState,
    Topology,
    TopologyError,
    complete_graph,
    connected_random_graph,
    make_topology,
    parse_topology,
    spread,
)
from assemblynet.identity import Credential, IssuerState, issue_credential, pseudonym_of, verify_credential
from assemblynet.primitives import DEFAULT
from assemblynet.revocation import (
    CaseClosed,
    CaseStatus,
    RevocationCase,
    RevocationEscrow,
    Share,
    build_escrow,
    open_case,
    submit_share,
)
from assemblynet.sim.config import AdversarySpec, InvalidScenario, ScenarioConfig, validate
from assemblynet.sim.events import Event, fmt_num, format_log
from assemblynet.sim.metrics import Metrics
from assemblynet.sim.target import TargetModel, TargetState
from assemblynet.throttle import (
    AssemblyInactive,
    RateState,
    Request,
    RevokedCredential,
    TokenBucket,
    UnknownCredential,
    admit,
)
from assemblynet.visibility import Board, ProtestMessage, append, visibility_fraction

INVALID_CREDENTIAL = "InvalidCredential"
DISRUPTOR_BODY = "buy cheap watches"


@dataclass
class Actor:
    node: int | None
    role: str
    identity: bytes
    credential: Credential
    escrow: RevocationEscrow | None = None
    shares: list[Share] = field(default_factory=list)
    holders: list[int] = field(default_factory=list)
    spec: AdversarySpec | None = None
    client_bucket: TokenBucket | None = None

    @property
    def pseudonym(self) -> bytes:
        return self.credential.pseudonym


@dataclass
class Trace:
    config: ScenarioConfig
    manifest: AssemblyManifest
    events: list[Event]
    metrics: Metrics
    board: Board
    compliant: bool
    receipt: AnnouncementReceipt | None
    status: AssemblyStatus

    def event_log(self) -> str:
        return format_log(self.events)


def build_manifest(cfg: ScenarioConfig, assembly_id: bytes, organizer: bytes) -> AssemblyManifest:
    start = cfg.start_time if cfg.start_time is not None else cfg.announce_time + cfg.injunction_window
    text = "attested by the organisers" if cfg.attested else ""
    return AssemblyManifest(
        assembly_id=assembly_id,
        target=TargetDescriptor(
            address="target.example",
            capacity=cfg.capacity,
            is_general_interest=cfg.general_interest,
        ),
        opinion_statement=cfg.opinion,
        start_time=start,
        end_time=start + cfg.protest_length,
        rate=cfg.rate,
        burst=cfg.burst,
        critical_mass_min=cfg.critical_mass_min,
        revocation_k=cfg.revocation_k,
        revocation_n=cfg.revocation_n,
        organizer_pseudonyms=(organizer,),
        board_mirroring=cfg.board_mirroring,
        supervisor_channel=cfg.supervisor_channel,
        injunction_window=cfg.injunction_window,
        attestations=AttestationSet(
            subsidiarity=Attestation(text, organizer.hex(), cfg.announce_time),
            proportionality=Attestation(text, organizer.hex(), cfg.announce_time),
            no_coercion=Attestation(text, organizer.hex(), cfg.announce_time),
            no_coercion_declared=cfg.attested,
        ),
    )


class _Run:
    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.rng = random.Random(cfg.seed)
        self.events: list[Event] = []
        self.metrics = Metrics()
        self.delivered: list[ProtestMessage] = []
        self.seq: dict[bytes, int] = defaultdict(int)
        self.abuse: dict[bytes, int] = defaultdict(int)
        self.cases: dict[bytes, RevocationCase] = {}
        self.pending: dict[int, list[tuple[Actor, int]]] = defaultdict(list)

    def emit(self, tick: int, kind: str, **fields: object) -> None:
        self.events.append(Event(tick, kind, {k: str(v) for k, v in fields.items()}))

    # -- setup ----------------------------------------------------------------

    def _topology(self, n_nodes: int, read_only: set[int]) -> Topology:
        cfg = self.cfg
        if cfg.topology == "complete":
            topo = complete_graph(n_nodes, cfg.fanout)
        elif cfg.topology == "random":
            if n_nodes <= 1:
                topo = complete_graph(n_nodes, cfg.fanout)
            else:
                topo = connected_random_graph(n_nodes, cfg.edge_prob, self.rng, cfg.fanout)
        else:
            path = Path(cfg.topology)
            if cfg.base_dir is not None and not path.is_absolute():
                path = cfg.base_dir / path
            try:
                topo = parse_topology(path.read_text(encoding="utf-8"), n_nodes, cfg.fanout)
            except (OSError, TopologyError) as exc:
                raise InvalidScenario(f"topology {cfg.topology}: {exc}") from None
        return make_topology(topo.n, topo.edges, topo.fanout, read_only)

    def execute(self) -> Trace:
        cfg = self.cfg
        rng = self.rng
        issuer = IssuerState(rng.randbytes(32))
        target_key = rng.randbytes(32)
        assembly_id = rng.randbytes(16)
        organizer = pseudonym_of(b"organizer", assembly_id, issuer)
        manifest = build_manifest(cfg, assembly_id, organizer)
        try:
            validate_manifest(manifest)
        except MalformedManifest as exc:
            raise InvalidScenario(str(exc)) from None
        self.manifest = manifest
        self.opinion = opinion_digest(manifest)
        self.board = Board(self.opinion)
        self.issuer = issuer

        t0 = cfg.announce_time
        status = initial_status(manifest)
        self._emit_status(t0, status)
        report = check_manifest(manifest, cfg.r_human_max)
        self.emit(t0, "check", compliant=int(report.compliant), failed="|".join(n.replace(" ", "_") for n in report.failed()))

        receipt = None
        if report.compliant:
            endpoint = SimulatedTarget(manifest.target.address, target_key, cfg.target_reachable)
            receipt = announce(
                manifest,
                endpoint,
                t0,
                board=self.board,
                retries=cfg.announce_retries,
                retry_interval=cfg.retry_interval,
                r_human_max=cfg.r_human_max,
            )
            for i, t in enumerate(receipt.attempts):
                ok = receipt.proof == "ack" and i == len(receipt.attempts) - 1
                self.emit(t, "announce_attempt", attempt=i, ok=int(ok))
            if receipt.proof == "board":
                self._emit_mirror(receipt.delivered_at, self.board.entries[-1])
            self.emit(
                receipt.delivered_at,
                "announce",
                digest=receipt.manifest_digest.hex(),
                proof=receipt.proof,
                window_ends=receipt.window_ends,
            )
            self.metrics.window_ends = receipt.window_ends
        else:
            self.emit(t0, "announce_refused", digest=manifest_digest(manifest).hex())

        for t, decision in cfg.injunctions:
            label = _decision_label(decision)
            if receipt is None:
                self.emit(t, "injunction", decision=label, ok=0, error="NoAnnouncement")
                continue
            try:
                status = file_injunction(status, receipt, decision, t)
            except WindowClosed:
                self.emit(t, "injunction", decision=label, ok=0, error="WindowClosed")
                continue
            self.emit(t, "injunction", decision=label, ok=1)
            self._emit_status(t, status)
        self.status = status
        self.receipt = receipt

        horizon = cfg.duration
        if receipt is not None:
            self._enroll(receipt.delivered_at)
            self._gossip_manifest(receipt.delivered_at)
            last = self._traffic(horizon)
        else:
            last = status.end_time
        duration = horizon if horizon is not None else max(last, status.end_time)

        m = self.metrics
        m.duration = duration
        m.availability = Fraction(duration - m.down_ticks, duration)
        m.visibility_fraction = visibility_fraction(self.delivered, self.board)
        m.delivered = len(self.delivered)
        self.emit(duration, "end", duration=duration)
        return Trace(cfg, manifest, self.events, m, self.board, report.compliant, receipt, status)

    def _emit_status(self, t: int, status: AssemblyStatus) -> None:
        self.emit(t, "status", start=status.start_time, end=status.end_time, forbidden=int(status.forbidden))

    def _emit_mirror(self, t: int, entry) -> None:
        self.emit(
            t,
            "mirror",
            index=entry.index,
            entry=entry.entry_digest.hex(),
            pseudonym=entry.message.pseudonym.hex(),
            seq=entry.message.sequence_no,
        )

    def _enroll(self, t: int) -> None:
        cfg = self.cfg
        rng = self.rng
        people: list[tuple[int | None, str, bytes, AdversarySpec | None]] = [
            (i, "participant", b"participant-%d" % i, None) for i in range(1, cfg.participants + 1)
        ]
        node = cfg.participants + 1
        for adv in cfg.adversaries:
            if adv.kind != "sybil":
                people.append((node, adv.kind, f"adversary-{adv.name}".encode(), adv))
                node += 1
        self.supervisor_node = node if cfg.supervisor_channel.strip() else None
        self.n_nodes = node + (1 if self.supervisor_node is not None else 0)

        self.rate = RateState(cfg.rate, cfg.burst, self.opinion, cfg.amplification_threshold, last_update=t)
        pool = list(range(1, cfg.participants + 1))
        self.participants: list[Actor] = []
        self.adversaries: list[tuple[AdversarySpec, list[Actor]]] = []
        by_spec: dict[str, list[Actor]] = {}
        for node_id, role, identity, spec in people:
            pseud = pseudonym_of(identity, self.manifest.assembly_id, self.issuer)
            holders = rng.sample([p for p in pool if p != node_id], cfg.revocation_n)
            escrow, shares = build_escrow(
                identity, self.manifest.assembly_id, pseud, cfg.revocation_k, cfg.revocation_n, rng
            )
            cred, self.issuer = issue_credential(identity, self.manifest.assembly_id, t, self.issuer, escrow.commitment)
            self.rate.enroll(pseud, t)
            actor = Actor(node_id, role, identity, cred, escrow, shares, holders, spec)
            if spec is None:
                self.participants.append(actor)
            else:
                by_spec[spec.name] = [actor]
            self.emit(t, "enroll", pseudonym=pseud.hex(), role=role, node=node_id)

        forger = IssuerState(rng.randbytes(32))
        for adv in cfg.adversaries:
            if adv.kind == "sybil":
                forged = []
                for i in range(adv.count):
                    identity = f"sybil-{adv.name}-{i}".encode()
                    cred, forger = issue_credential(
                        identity, self.manifest.assembly_id, t, forger, rng.randbytes(32)
                    )
                    forged.append(Actor(None, "sybil", identity, cred, spec=adv))
                by_spec[adv.name] = forged
            self.adversaries.append((adv, by_spec[adv.name]))
        self.emit(t, "enrollment", active=self.rate.n_active)

    def _gossip_manifest(self, t: int) -> None:
        read_only = {self.supervisor_node} if self.supervisor_node is not None else set()
        self.topology = self._topology(self.n_nodes, read_only)
        self.gossip = GossipState.empty(self.n_nodes)
        digest = self.receipt.manifest_digest
        self.gossip.seed(0, digest, b"manifest")
        rounds = spread(self.gossip, self.topology, self.rng, digest, _round_cap(self.n_nodes))
        reached = sum(1 for k in self.gossip.known if digest in k)
        self.informed = {u for u, k in enumerate(self.gossip.known) if digest in k}
        self.metrics.gossip_rounds = rounds
        self.emit(t, "gossip", item="manifest", rounds="none" if rounds is None else rounds, reached=reached, nodes=self.n_nodes)

    # -- traffic --------------------------------------------------------------

    def _traffic(self, horizon: int | None) -> int:
        cfg = self.cfg
        status = self.status
        starts = [status.start_time] + [status.start_time + a.start_offset for a in cfg.adversaries]
        t = max(min(starts), self.receipt.delivered_at)
        target = TargetModel(cfg.capacity, cfg.queue_max)
        while True:
            if horizon is not None and t >= horizon:
                break
            if t >= status.end_time and not target.queue and not any(k >= t for k in self.pending):
                break
            arrivals = self._tick(t)
            record = target.step(t, arrivals)
            self.metrics.timeline.append(record)
            if record.state is TargetState.DOWN:
                self.metrics.down_ticks += 1
                if self.metrics.first_down_at is None:
                    self.metrics.first_down_at = t + 1
            self.emit(
                t,
                "target",
                arrivals=arrivals,
                served=fmt_num(record.served),
                dropped=fmt_num(record.dropped),
                queue=fmt_num(record.queue),
                state=record.state.value,
            )
            t += 1
        return t

    def _tick(self, t: int) -> int:
        cfg = self.cfg
        for actor, j in self.pending.pop(t, []):
            self._submit_share(t, actor, j)
        active = may_commence(self.status, self.receipt, t)
        arrivals = 0
        if active:
            for actor in self.participants:
                if actor.node not in self.informed:
                    continue
                bucket = actor.client_bucket
                if bucket is None:
                    bucket = actor.client_bucket = TokenBucket(cfg.burst, cfg.rate, cfg.burst, t)
                bucket.refill(t)
                n = math.floor(bucket.tokens)
                bucket.tokens -= n
                for _ in range(n):
                    arrivals += self._send(t, actor, self.opinion, cfg.response_ratio, active)
        for spec, actors in self.adversaries:
            if not (self.status.start_time + spec.start_offset <= t < self.status.end_time):
                continue
            for actor in actors:
                if spec.kind == "botnet":
                    for _ in range(spec.requests_per_tick):
                        arrivals += self._send(t, actor, self.opinion, cfg.response_ratio, active)
                elif spec.kind == "amplifier":
                    arrivals += self._send(t, actor, self.opinion, spec.ratio, active)
                elif spec.kind == "disruptor":
                    wrong = DEFAULT.digest(DISRUPTOR_BODY.encode())
                    arrivals += self._send(t, actor, wrong, cfg.response_ratio, active, DISRUPTOR_BODY)
                else:
                    arrivals += self._send(t, actor, self.opinion, cfg.response_ratio, active)
        return arrivals

    def _send(
        self,
        t: int,
        actor: Actor,
        opinion: bytes,
        ratio: Fraction,
        active: bool,
        body: str | None = None,
    ) -> int:
        pseud = actor.pseudonym
        self.seq[pseud] += 1
        seq = self.seq[pseud]
        self.metrics.offered += 1
        pseud_hex = pseud.hex()
        reason = None
        if not verify_credential(actor.credential, self.issuer):
            reason = INVALID_CREDENTIAL
        else:
            req = Request(pseud, t, self.cfg.payload_size, ratio, opinion)
            try:
                decision = admit(req, self.rate, t, active=active)
            except AssemblyInactive:
                reason = "AssemblyInactive"
            except UnknownCredential:
                reason = "UnknownCredential"
            except RevokedCredential:
                reason = "RevokedCredential"
            else:
                if not decision.admitted:
                    reason = decision.reason.value
        if reason is not None:
            self.metrics.rejects[reason] = self.metrics.rejects.get(reason, 0) + 1
            self.emit(t, "reject", pseudonym=pseud_hex, seq=seq, reason=reason)
            if reason == "MissingOpinion":
                self._record_abuse(t, actor)
            return 0

        msg = ProtestMessage(
            pseud, self.manifest.assembly_id, seq, opinion, body or self.manifest.opinion_statement, t
        )
        self.emit(t, "admit", pseudonym=pseud_hex, seq=seq, ratio=fmt_num(ratio))
        self.metrics.admitted[pseud_hex] = self.metrics.admitted.get(pseud_hex, 0) + 1
        if self.metrics.commenced_at is None:
            self.metrics.commenced_at = t
        entry = append(self.board, msg)
        self._emit_mirror(t, entry)
        self.emit(t, "deliver", pseudonym=pseud_hex, seq=seq)
        self.delivered.append(msg)
        return 1

    # -- revocation -----------------------------------------------------------

    def _record_abuse(self, t: int, actor: Actor) -> None:
        pseud = actor.pseudonym
        self.abuse[pseud] += 1
        if self.abuse[pseud] < self.cfg.abuse_threshold or pseud in self.cases or actor.escrow is None:
            return
        self.cases[pseud] = open_case(pseud, t)
        self.emit(t, "case_open", pseudonym=pseud.hex(), initiator=self.cfg.revocation_initiator)
        scripted = self.cfg.revocation_k
        if actor.spec is not None and actor.spec.shares_submitted is not None:
            scripted = actor.spec.shares_submitted
        for j in range(scripted):
            self.pending[t + 1 + j].append((actor, j))

    def _submit_share(self, t: int, actor: Actor, j: int) -> None:
        pseud = actor.pseudonym
        share = actor.shares[j]
        try:
            case = submit_share(self.cases[pseud], share, actor.escrow)
        except CaseClosed:
            self.emit(t, "share_refused", pseudonym=pseud.hex(), holder=actor.holders[j], index=share.holder_index)
            return
        self.cases[pseud] = case
        self.emit(
            t,
            "share",
            pseudonym=pseud.hex(),
            holder=actor.holders[j],
            index=share.holder_index,
            count=len(case.submitted_shares),
        )
        if case.status is CaseStatus.REVEALED:
            identity_digest = DEFAULT.digest(case.revealed_identity).hex()
            self.emit(t, "reveal", pseudonym=pseud.hex(), identity=identity_digest)
            self.metrics.revocations.append((pseud.hex(), t, identity_digest))
            self.rate.revoke(pseud, t)
            self.emit(t, "enrollment", active=self.rate.n_active)
            notice = DEFAULT.digest(b"revoked", pseud)
            self.gossip.seed(actor.holders[0], notice, b"revoked " + pseud)
            rounds = spread(self.gossip, self.topology, self.rng, notice, _round_cap(self.n_nodes))
            self.emit(t, "gossip", item="revocation", rounds="none" if rounds is None else rounds)


def _round_cap(n_nodes: int) -> int:
    return 10 * math.ceil(math.log2(max(n_nodes, 2)))


def _decision_label(decision) -> str:
    if isinstance(decision, Delay):
        return f"delay:{decision.ticks}"
    return "forbid" if isinstance(decision, Forbid) else "allow"


def run(config: ScenarioConfig) -> Trace:
    """Run one scenario and return its full trace (events, metrics, board)."""
    validate(config)
    return _Run(config).execute()
