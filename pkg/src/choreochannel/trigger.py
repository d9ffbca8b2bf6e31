"""Per-participant channel node: propose, verify, sign, confirm, watch, dispute.

Each node owns its local state and archive; message handling for one case is
serialised through the caller (the in-process network and the HTTP server both
deliver one message at a time). Nodes never install a state without holding
the full signature set, and they flush evidence to the archive before any
Sign or Confirm leaves the node.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

from .ledger import Accepted, Ledger, Phase
from .machine import (
    ConformanceError,
    ProcessStateMachine,
    TaskRequest,
    is_end_state,
    step,
)
from .wire import (
    ChannelMessage,
    MessageKind,
    SignedStep,
    StepPayload,
    address_of,
    public_key_of,
    sign_step,
    verify_step,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TriggerConfig:
    role: str
    signing_key: bytes
    role_pubkeys: dict[str, bytes]
    contract_id: bytes
    chain_id: int = 1
    proposal_timeout: float = 2.0
    poll_interval: float = 1.0
    # Role id -> endpoint, used by the HTTP transport; the in-process network
    # routes by role directly.
    peer_endpoints: dict[str, str] = field(default_factory=dict)
    archive_path: str | None = None
    prefilter: bool = True
    dispute_on_nonconforming: bool = True


@dataclass(frozen=True)
class EnactResult:
    status: str  # "confirmed" | "dispute_raised" | "rejected"
    new_state: int | None = None
    error: str | None = None

    @property
    def confirmed(self) -> bool:
        return self.status == "confirmed"


@dataclass(frozen=True)
class NodeStatus:
    role: str
    case_id: int
    seq: int
    state_hex: str
    phase_view: str

    def to_wire(self) -> dict:
        return {
            "role": self.role,
            "case_id": self.case_id,
            "seq": self.seq,
            "state": self.state_hex,
            "phase": self.phase_view,
        }


class ArchiveStore:
    """Append-only evidence store. Every record is flushed before the node
    sends the message that depends on it."""

    def __init__(self, path: str | None = None):
        self._steps: dict[int, list[SignedStep]] = {}
        self._path = path
        self._fh = open(path, "a", encoding="utf-8") if path else None

    def _write(self, record: dict) -> None:
        if self._fh is not None:
            self._fh.write(json.dumps(record, sort_keys=True) + "\n")
            self._fh.flush()

    def note_signed(self, payload: StepPayload, signature: bytes) -> None:
        self._write({"type": "signed", "payload": payload.to_wire(), "sig": signature.hex()})

    def append_step(self, signed: SignedStep) -> None:
        case = signed.payload.case_id
        self._steps.setdefault(case, []).append(signed)
        self._write({"type": "step", "record": signed.to_wire()})

    def steps(self, case_id: int) -> list[SignedStep]:
        return list(self._steps.get(case_id, []))

    def max_complete(self, case_id: int) -> SignedStep | None:
        steps = self._steps.get(case_id)
        if not steps:
            return None
        return max(steps, key=lambda s: s.payload.seq)

    def lowest_complete(self, case_id: int) -> SignedStep | None:
        steps = self._steps.get(case_id)
        if not steps:
            return None
        return min(steps, key=lambda s: s.payload.seq)

    def by_seq(self, case_id: int, seq: int) -> SignedStep | None:
        for s in self._steps.get(case_id, []):
            if s.payload.seq == seq:
                return s
        return None

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None


class TriggerNode:
    """One channel participant; drives the off-chain protocol for its role."""

    def __init__(self, config: TriggerConfig, machine: ProcessStateMachine, ledger: Ledger,
                 transport=None):
        if config.role not in machine.role_ids:
            raise ValueError(f"role {config.role!r} is not part of the process")
        missing = set(machine.role_ids) - {config.role} - set(config.role_pubkeys)
        if missing:
            raise ValueError(f"missing public keys for roles: {sorted(missing)}")
        self.config = config
        self.machine = machine
        self.ledger = ledger
        self.transport = transport
        self.role = config.role
        self.public_key = public_key_of(config.signing_key)
        self.address = address_of(self.public_key)
        self.state = machine.initial_state
        self.seq = 0
        self.case_id = 0
        self.pending: StepPayload | None = None
        # Remote proposals this node has signed, by seq: first proposal wins.
        self.signed_remote: dict[int, StepPayload] = {}
        self.archive = ArchiveStore(config.archive_path)
        self.on_chain_mode = False
        self.observed_phase = Phase.CHANNEL_OPEN
        self.events: list[str] = []

    # -- helpers ------------------------------------------------------------

    def _note(self, message: str) -> None:
        self.events.append(message)
        log.debug("[%s] %s", self.role, message)

    def _peers(self) -> list[str]:
        return [r for r in self.machine.role_ids if r != self.role]

    def _pubkey(self, role: str) -> bytes:
        if role == self.role:
            return self.public_key
        return self.config.role_pubkeys[role]

    def status(self) -> NodeStatus:
        return NodeStatus(
            role=self.role,
            case_id=self.case_id,
            seq=self.seq,
            state_hex=hex(self.state),
            phase_view=self.observed_phase.value,
        )

    # -- enactment (PAIS-facing) ---------------------------------------------

    def enact(self, req: TaskRequest, retries: int = 2) -> EnactResult:
        """Propose a task to the channel, or to the contract when on-chain."""
        if self.on_chain_mode:
            return self._enact_on_chain(req)
        candidates = self.machine.manual_transitions(req.task_id)
        if not candidates:
            return EnactResult("rejected", error="unknown-task")
        if candidates[0].initiator != self.role:
            return EnactResult("rejected", error="wrong-role")
        if self.pending is not None:
            return EnactResult("rejected", error="proposal-pending")

        try:
            new_state = step(self.machine, self.state, req)
            new_state_bytes = self.machine.state_to_bytes(new_state)
        except ConformanceError as exc:
            if self.config.prefilter:
                # Request never leaves the node.
                return EnactResult("rejected", error=exc.reason)
            # Faulty-component mode: forward the request with an unchanged
            # state so the network, not this node, performs the rejection.
            new_state = None
            new_state_bytes = self.machine.state_to_bytes(self.state)

        payload = StepPayload(
            chain_id=self.config.chain_id,
            contract_id=self.config.contract_id,
            case_id=self.case_id,
            seq=self.seq + 1,
            task_id=req.task_id,
            choice_data=req.choice_data,
            new_state=new_state_bytes,
        )
        my_sig = sign_step(payload, self.config.signing_key)
        self.pending = payload
        signatures = {self.role: my_sig}
        all_signed = True
        for peer in self._peers():
            reply = self.transport.request(
                peer,
                ChannelMessage(MessageKind.PROPOSE, self.role, payload, {self.role: my_sig}),
            )
            if reply is None or reply.kind is not MessageKind.SIGN:
                all_signed = False
                continue
            sig = reply.signatures.get(peer)
            if sig is None or not verify_step(payload, sig, self._pubkey(peer)):
                self._note(f"invalid sign reply from {peer} for seq {payload.seq}")
                all_signed = False
                continue
            signatures[peer] = sig

        if all_signed:
            signed = SignedStep(payload, signatures)
            # Durability before Confirm: the evidence must outlive the send.
            self.archive.append_step(signed)
            self.state = self.machine.state_from_bytes(payload.new_state)
            self.seq = payload.seq
            self.pending = None
            confirm = ChannelMessage(MessageKind.CONFIRM, self.role, payload, signatures)
            for peer in self._peers():
                self.transport.request(peer, confirm)
            return EnactResult("confirmed", new_state=self.state)

        self.pending = None
        if self.seq >= payload.seq and retries > 0:
            # A concurrent proposal won this sequence number; retry on top of
            # the newly installed state.
            return self.enact(req, retries=retries - 1)
        self._note(f"proposal for seq {payload.seq} failed to collect signatures")
        self.raise_dispute()
        return EnactResult("dispute_raised", error="missing-signatures")

    def _enact_on_chain(self, req: TaskRequest) -> EnactResult:
        result = self.ledger.on_chain_step(self.config.contract_id, req, self.address)
        if isinstance(result, Accepted):
            self.state = result.new_state
            self.seq = result.seq
            self.poll_chain()
            return EnactResult("confirmed", new_state=result.new_state)
        self.poll_chain()
        return EnactResult("rejected", error=result.reason)

    # -- message handling (network-facing) ------------------------------------

    def handle_message(self, msg: ChannelMessage) -> ChannelMessage | None:
        if msg.kind is MessageKind.PROPOSE:
            return self.on_propose(msg)
        if msg.kind is MessageKind.CONFIRM:
            self.on_confirm(msg)
            return None
        if msg.kind is MessageKind.SIGN:
            self.on_sign(msg)
            return None
        return None

    def on_propose(self, msg: ChannelMessage) -> ChannelMessage | None:
        """Verify a proposal; reply Sign if it conforms, otherwise stay silent
        (and, per configuration, raise a dispute)."""
        payload = msg.step
        proposer = msg.sender_role
        if payload.chain_id != self.config.chain_id or payload.contract_id != self.config.contract_id:
            self._note("proposal for foreign chain/contract ignored")
            return None
        if payload.case_id != self.case_id:
            self._note(f"proposal for case {payload.case_id}, local case is {self.case_id}")
            return None
        sig = msg.signatures.get(proposer)
        if proposer not in self.machine.role_ids or sig is None or not verify_step(
            payload, sig, self._pubkey(proposer)
        ):
            self._note(f"bad initiator signature on proposal seq {payload.seq}")
            return None
        candidates = self.machine.manual_transitions(payload.task_id)
        if not candidates or candidates[0].initiator != proposer:
            self._note(f"proposal from {proposer} for task it does not initiate")
            self._dispute_on_bad_proposal()
            return None
        if payload.seq != self.seq + 1:
            self._note(f"proposal seq {payload.seq} does not follow local seq {self.seq}")
            self._dispute_on_bad_proposal()
            return None
        already = self.signed_remote.get(payload.seq)
        if already is not None and already != payload:
            self._note(f"seq {payload.seq} already signed for a different proposal")
            return None
        try:
            expected = step(
                self.machine, self.state,
                TaskRequest(payload.task_id, proposer, payload.choice_data),
            )
        except ConformanceError as exc:
            self._note(f"non-conforming proposal {payload.task_id}: {exc.reason}")
            self._dispute_on_bad_proposal()
            return None
        if self.machine.state_to_bytes(expected) != payload.new_state:
            self._note(f"proposal {payload.task_id} leads to a different state")
            self._dispute_on_bad_proposal()
            return None

        my_sig = sign_step(payload, self.config.signing_key)
        # Evidence first, then the signature leaves the node.
        self.archive.note_signed(payload, my_sig)
        self.signed_remote[payload.seq] = payload
        return ChannelMessage(MessageKind.SIGN, self.role, payload, {self.role: my_sig})

    def on_confirm(self, msg: ChannelMessage) -> bool:
        """Install a fully signed step previously signed by this node."""
        payload = msg.step
        pending = self.signed_remote.get(payload.seq)
        if pending is None or pending != payload:
            self._note(f"confirm for unknown step seq {payload.seq} ignored")
            return False
        signed = SignedStep(payload, dict(msg.signatures))
        pubkeys = {r: self._pubkey(r) for r in self.machine.role_ids}
        if not signed.verify_all(pubkeys):
            self._note(f"confirm for seq {payload.seq} carries an incomplete signature set")
            self.raise_dispute()
            return False
        self.archive.append_step(signed)
        self.state = self.machine.state_from_bytes(payload.new_state)
        self.seq = payload.seq
        del self.signed_remote[payload.seq]
        return True

    def on_sign(self, msg: ChannelMessage) -> None:
        """Out-of-band Sign reply (HTTP deployments); collected when pending."""
        if self.pending is None or msg.step != self.pending:
            self._note("sign message without matching pending proposal ignored")

    # -- chain duties ---------------------------------------------------------

    def _dispute_on_bad_proposal(self) -> None:
        if self.config.dispute_on_nonconforming:
            self.raise_dispute()

    def raise_dispute(self) -> bool:
        """Submit the highest archived complete step as dispute evidence.

        Skips the transaction when a dispute is already pending at the same or
        a higher sequence number; this node's evidence would be rejected as
        stale and adds nothing the watcher duty does not already cover.
        """
        latest = self.archive.max_complete(self.case_id)
        if latest is None:
            self._note("dispute intended but no complete step archived yet")
            return False
        view = self.ledger.get_contract(self.config.contract_id)
        self.observed_phase = view.phase
        if view.phase is Phase.DISPUTE and view.seq >= latest.payload.seq:
            self._note(f"dispute already pending at seq {view.seq}; holding evidence")
            return False
        result = self.ledger.submit_state(self.config.contract_id, latest, self.address)
        self._note(f"dispute submission seq {latest.payload.seq}: {result}")
        return isinstance(result, Accepted)

    def submit_archived(self, seq: int):
        """Submit a specific archived step; the adversarial (stale) path."""
        target = self.archive.by_seq(self.case_id, seq)
        if target is None:
            raise ValueError(f"no archived step with seq {seq}")
        return self.ledger.submit_state(self.config.contract_id, target, self.address)

    def poll_chain(self) -> None:
        """One polling pass: counter stale state, follow phase, follow resets."""
        view = self.ledger.get_contract(self.config.contract_id)
        self.observed_phase = view.phase
        if view.case_id > self.case_id:
            self._reset_for_case(view.case_id)
            return
        if view.phase is Phase.DISPUTE:
            latest = self.archive.max_complete(self.case_id)
            if latest is not None and view.seq < latest.payload.seq:
                result = self.ledger.submit_state(self.config.contract_id, latest, self.address)
                self._note(f"countered stale state with seq {latest.payload.seq}: {result}")
        elif view.phase is Phase.ON_CHAIN:
            self.on_chain_mode = True
            self.state = view.current_state
            self.seq = view.seq

    def _reset_for_case(self, case_id: int) -> None:
        self.case_id = case_id
        self.seq = 0
        self.state = self.machine.initial_state
        self.pending = None
        self.signed_remote.clear()
        self.on_chain_mode = False
        self.observed_phase = Phase.CHANNEL_OPEN
        self._note(f"reset for case {case_id}")

    def close(self) -> EnactResult:
        """Submit the archived final step to close the case unanimously."""
        if not is_end_state(self.machine, self.state):
            return EnactResult("rejected", error="not-at-end-state")
        final = self.archive.max_complete(self.case_id)
        if final is None:
            return EnactResult("rejected", error="no-archived-final-step")
        result = self.ledger.close_channel(self.config.contract_id, final, self.address)
        if isinstance(result, Accepted):
            self.poll_chain()
            return EnactResult("confirmed", new_state=self.state)
        self._note(f"close rejected: {result.reason}; falling back to dispute handling")
        self.poll_chain()
        return EnactResult("dispute_raised", error=result.reason)


class InProcessNetwork:
    """Synchronous transport for deterministic tests: direct method calls,
    with silenced roles standing in for timeouts."""

    def __init__(self):
        self.nodes: dict[str, TriggerNode] = {}
        self.silenced: set[str] = set()
        self.delivered: int = 0

    def register(self, node: TriggerNode) -> None:
        self.nodes[node.role] = node
        node.transport = self

    def silence(self, role: str) -> None:
        self.silenced.add(role)

    def unsilence(self, role: str) -> None:
        self.silenced.discard(role)

    def request(self, target_role: str, message: ChannelMessage) -> ChannelMessage | None:
        if target_role in self.silenced:
            return None
        node = self.nodes.get(target_role)
        if node is None:
            return None
        self.delivered += 1
        return node.handle_message(message)

    def poll_all(self, exclude: set[str] | None = None) -> None:
        """Drive one watcher pass on every node, in role registration order."""
        for role, node in self.nodes.items():
            if exclude and role in exclude:
                continue
            node.poll_chain()

    def statuses(self) -> dict[str, NodeStatus]:
        return {role: node.status() for role, node in self.nodes.items()}

    def stable(self) -> bool:
        """All nodes report identical (case, seq, state)."""
        views = {(s.case_id, s.seq, s.state_hex) for s in self.statuses().values()}
        return len(views) == 1
