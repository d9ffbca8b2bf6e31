"""Canonical byte encoding, Ed25519 signing, and off-chain message envelopes.

Signatures always cover `encode_step` output, never the JSON envelope, so
bit-exactness is confined to one function. The encoding is injective: fixed
big-endian integers in field order, then length-prefixed variable fields.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from enum import Enum

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

CONTRACT_ID_BYTES = 32
SIGNATURE_BYTES = 64
_U64_MAX = 2**64 - 1
_U32_MAX = 2**32 - 1


class EncodingError(ValueError):
    pass


@dataclass(frozen=True)
class StepPayload:
    chain_id: int
    contract_id: bytes
    case_id: int
    seq: int
    task_id: str
    choice_data: bytes
    new_state: bytes

    def to_wire(self) -> dict:
        return {
            "chain_id": self.chain_id,
            "contract_id": self.contract_id.hex(),
            "case_id": self.case_id,
            "seq": self.seq,
            "task_id": self.task_id,
            "choice_data": self.choice_data.hex(),
            "new_state": self.new_state.hex(),
        }

    @classmethod
    def from_wire(cls, data: dict) -> "StepPayload":
        return cls(
            chain_id=int(data["chain_id"]),
            contract_id=bytes.fromhex(data["contract_id"]),
            case_id=int(data["case_id"]),
            seq=int(data["seq"]),
            task_id=data["task_id"],
            choice_data=bytes.fromhex(data["choice_data"]),
            new_state=bytes.fromhex(data["new_state"]),
        )


def encode_step(p: StepPayload) -> bytes:
    """Deterministic, injective byte encoding of a step payload."""
    for name, value in (("chain_id", p.chain_id), ("case_id", p.case_id), ("seq", p.seq)):
        if not 0 <= value <= _U64_MAX:
            raise EncodingError(f"{name} out of unsigned 64-bit range: {value}")
    if len(p.contract_id) != CONTRACT_ID_BYTES:
        raise EncodingError(f"contract_id must be {CONTRACT_ID_BYTES} bytes")
    task_bytes = p.task_id.encode("utf-8")
    for name, blob in (("task_id", task_bytes), ("choice_data", p.choice_data), ("new_state", p.new_state)):
        if len(blob) > _U32_MAX:
            raise EncodingError(f"{name} exceeds 32-bit length prefix")
    parts = [
        struct.pack(">Q", p.chain_id),
        p.contract_id,
        struct.pack(">Q", p.case_id),
        struct.pack(">Q", p.seq),
        struct.pack(">I", len(task_bytes)),
        task_bytes,
        struct.pack(">I", len(p.choice_data)),
        p.choice_data,
        struct.pack(">I", len(p.new_state)),
        p.new_state,
    ]
    return b"".join(parts)


def generate_signing_key(seed: bytes | None = None) -> bytes:
    """32-byte Ed25519 private key; pass a seed for reproducible keys."""
    if seed is None:
        key = Ed25519PrivateKey.generate()
        return key.private_bytes_raw()
    return hashlib.sha256(seed).digest()


def public_key_of(signing_key: bytes) -> bytes:
    return Ed25519PrivateKey.from_private_bytes(signing_key).public_key().public_bytes_raw()


def address_of(public_key: bytes) -> bytes:
    """Participant address: the 32-byte hash of the public key."""
    return hashlib.sha256(public_key).digest()


def sign_step(p: StepPayload, signing_key: bytes) -> bytes:
    return Ed25519PrivateKey.from_private_bytes(signing_key).sign(encode_step(p))


def verify_step(p: StepPayload, signature: bytes, public_key: bytes) -> bool:
    """True iff signature covers encode_step(p) under the key; never raises."""
    try:
        Ed25519PublicKey.from_public_bytes(public_key).verify(signature, encode_step(p))
        return True
    except (InvalidSignature, ValueError, TypeError):
        return False


@dataclass(frozen=True)
class SignedStep:
    """A step payload plus collected signatures, keyed by role id."""

    payload: StepPayload
    signatures: dict[str, bytes] = field(default_factory=dict)

    def with_signature(self, role: str, signature: bytes) -> "SignedStep":
        merged = dict(self.signatures)
        merged[role] = signature
        return SignedStep(self.payload, merged)

    def is_complete(self, roles) -> bool:
        return set(roles) <= set(self.signatures)

    def verify_all(self, role_pubkeys: dict[str, bytes]) -> bool:
        """All required roles present and every signature valid."""
        for role, pub in role_pubkeys.items():
            sig = self.signatures.get(role)
            if sig is None or not verify_step(self.payload, sig, pub):
                return False
        return True

    def to_wire(self) -> dict:
        return {
            "payload": self.payload.to_wire(),
            "signatures": {role: sig.hex() for role, sig in sorted(self.signatures.items())},
        }

    @classmethod
    def from_wire(cls, data: dict) -> "SignedStep":
        return cls(
            payload=StepPayload.from_wire(data["payload"]),
            signatures={role: bytes.fromhex(sig) for role, sig in data["signatures"].items()},
        )


class MessageKind(Enum):
    PROPOSE = "propose"
    SIGN = "sign"
    CONFIRM = "confirm"


@dataclass(frozen=True)
class ChannelMessage:
    """Self-describing protocol envelope. Propose and Sign carry exactly one
    signature (initiator's or signer's); Confirm carries the full set."""

    kind: MessageKind
    sender_role: str
    step: StepPayload
    signatures: dict[str, bytes]

    def __post_init__(self):
        if self.kind in (MessageKind.PROPOSE, MessageKind.SIGN) and len(self.signatures) != 1:
            raise ValueError(f"{self.kind.value} message must carry exactly one signature")
        if self.kind is MessageKind.CONFIRM and not self.signatures:
            raise ValueError("confirm message must carry signatures")

    def to_wire(self) -> str:
        return json.dumps(
            {
                "kind": self.kind.value,
                "sender_role": self.sender_role,
                "step": self.step.to_wire(),
                "signatures": {r: s.hex() for r, s in sorted(self.signatures.items())},
            },
            sort_keys=True,
        )

    @classmethod
    def from_wire(cls, raw: str) -> "ChannelMessage":
        data = json.loads(raw)
        return cls(
            kind=MessageKind(data["kind"]),
            sender_role=data["sender_role"],
            step=StepPayload.from_wire(data["step"]),
            signatures={r: bytes.fromhex(s) for r, s in data["signatures"].items()},
        )
