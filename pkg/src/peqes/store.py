"""Rollback-protected encrypted storage on the untrusted side.

Responses are AEAD-sealed and organized as an append-only binary Merkle
tree; only the root hash lives in trusted-core state. Tree shape:
domain-separated leaf/node hashes, duplicate-last-node rule at odd
levels, so the single-leaf root collapses to the leaf hash. Appends
maintain a frontier of complete-subtree roots and cost O(log n) hashes.

Store file format: magic "PQS1", then repeated {u32 big-endian length,
record bytes}. Record bytes: u64 index || 12-byte nonce || 16-byte tag
|| ciphertext body.

Checkpoint file: magic "PQC1" + sealed state blob. The embedded
checkpoint counter is mirrored in a plaintext witness file; a restore
from a counter older than the witness is a rollback. The witness file's
own integrity is the documented trust gap of the simulation (hardware
would use a monotonic counter).
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path

from peqes import crypto
from peqes.errors import RollbackDetected, StateCorrupt, StoreError, TamperDetected

STORE_MAGIC = b"PQS1"
CHECKPOINT_MAGIC = b"PQC1"

_LEAF_TAG = b"leaf"
_NODE_TAG = b"node"
_EMPTY_ROOT = hashlib.sha256(b"peqes/merkle-empty").digest()

# test instrumentation: number of leaf/node hash computations
hash_invocations = 0


def _leaf_hash(index: int, ciphertext_bytes: bytes) -> bytes:
    global hash_invocations
    hash_invocations += 1
    return hashlib.sha256(_LEAF_TAG + struct.pack(">Q", index) + ciphertext_bytes).digest()


def _node_hash(left: bytes, right: bytes) -> bytes:
    global hash_invocations
    hash_invocations += 1
    return hashlib.sha256(_NODE_TAG + left + right).digest()


@dataclass(frozen=True)
class MerkleRoot:
    digest: bytes
    count: int

    def to_dict(self) -> dict:
        return {"digest": self.digest.hex(), "count": self.count}

    @classmethod
    def from_dict(cls, data: dict) -> "MerkleRoot":
        return cls(digest=bytes.fromhex(data["digest"]), count=int(data["count"]))


class MerkleFrontier:
    """Incremental root over an append-only leaf sequence.

    Keeps the roots of the maximal complete subtrees (binary decomposition
    of the leaf count). The overall root folds them right-to-left, raising
    the partial suffix by self-duplication, which reproduces the
    duplicate-last-node rule exactly.
    """

    def __init__(self):
        self._subroots: list[tuple[int, bytes]] = []  # (height, digest), decreasing height
        self.count = 0

    def append_leaf(self, leaf: bytes) -> None:
        height, node = 0, leaf
        while self._subroots and self._subroots[-1][0] == height:
            prev_height, prev = self._subroots.pop()
            node = _node_hash(prev, node)
            height = prev_height + 1
        self._subroots.append((height, node))
        self.count += 1

    def root(self) -> MerkleRoot:
        if not self._subroots:
            return MerkleRoot(_EMPTY_ROOT, 0)
        height, acc = self._subroots[-1]
        for sub_height, sub in reversed(self._subroots[:-1]):
            while height < sub_height:
                acc = _node_hash(acc, acc)
                height += 1
            acc = _node_hash(sub, acc)
            height += 1
        return MerkleRoot(acc, self.count)


def _serialize_record(index: int, ct: crypto.Ciphertext) -> bytes:
    return struct.pack(">Q", index) + ct.nonce + ct.tag + ct.body


def _parse_record(blob: bytes) -> tuple[int, crypto.Ciphertext]:
    if len(blob) < 8 + crypto.NONCE_LEN + crypto.TAG_LEN:
        raise TamperDetected("truncated record")
    (index,) = struct.unpack(">Q", blob[:8])
    nonce = blob[8 : 8 + crypto.NONCE_LEN]
    tag = blob[8 + crypto.NONCE_LEN : 8 + crypto.NONCE_LEN + crypto.TAG_LEN]
    body = blob[8 + crypto.NONCE_LEN + crypto.TAG_LEN :]
    return index, crypto.Ciphertext(nonce=nonce, body=body, tag=tag)


def _record_aad(study_id: str, index: int) -> bytes:
    return f"peqes/record:{study_id}:{index}".encode("ascii")


class ResponseStore:
    """One append-only sealed store per study; single writer.

    The caller (trusted core) supplies the next index from its own sealed
    state, so counter nonces are never reused even if the untrusted file
    was truncated behind our back.
    """

    def __init__(self, path: str | Path, study_id: str, key: crypto.SymmetricKey):
        self.path = Path(path)
        self.study_id = study_id
        self._key = key

    def append(self, index: int, plaintext: bytes) -> crypto.Ciphertext:
        nonce = crypto.counter_nonce(index)
        ct = crypto.aead_encrypt(self._key, nonce, plaintext, _record_aad(self.study_id, index))
        record = _serialize_record(index, ct)
        try:
            new_file = not self.path.exists()
            with open(self.path, "ab") as fh:
                if new_file:
                    fh.write(STORE_MAGIC)
                fh.write(struct.pack(">I", len(record)))
                fh.write(record)
                fh.flush()
                os.fsync(fh.fileno())
        except OSError as exc:
            raise StoreError(f"append failed: {exc}") from exc
        return ct

    def scan_records(self) -> list[tuple[int, crypto.Ciphertext]]:
        if not self.path.exists():
            return []
        data = self.path.read_bytes()
        if data[:4] != STORE_MAGIC:
            raise TamperDetected("bad store magic")
        records = []
        offset = 4
        while offset < len(data):
            if offset + 4 > len(data):
                raise TamperDetected("truncated length prefix")
            (length,) = struct.unpack(">I", data[offset : offset + 4])
            offset += 4
            if offset + length > len(data):
                raise TamperDetected("truncated record body")
            records.append(_parse_record(data[offset : offset + length]))
            offset += length
        return records

    def read_all(self, expected: MerkleRoot) -> list[bytes]:
        """Decrypt every record and return plaintexts in append order, but
        only if the recomputed tree root matches ``expected``. Never
        returns partial data."""
        records = self.scan_records()
        plaintexts = []
        frontier = MerkleFrontier()
        for position, (index, ct) in enumerate(records):
            if index != position:
                raise RollbackDetected(f"record {position} carries index {index}")
            try:
                plaintexts.append(
                    crypto.aead_decrypt(self._key, ct, _record_aad(self.study_id, index))
                )
            except crypto.AuthenticationFailed as exc:
                raise TamperDetected(f"record {index} failed authentication") from exc
            frontier.append_leaf(_leaf_hash(index, _serialize_record(index, ct)))
        root = frontier.root()
        if root.count != expected.count or root.digest != expected.digest:
            raise RollbackDetected(
                f"store root mismatch (have {root.count} records, expected {expected.count})"
            )
        return plaintexts

    def delete(self) -> None:
        if self.path.exists():
            self.path.unlink()


def leaf_for(study_id: str, index: int, ct: crypto.Ciphertext) -> bytes:
    return _leaf_hash(index, _serialize_record(index, ct))


class CheckpointFile:
    """Sealed trusted-core state with rollback detection via a counter witness."""

    def __init__(self, path: str | Path, witness_path: str | Path, key: crypto.SymmetricKey):
        self.path = Path(path)
        self.witness_path = Path(witness_path)
        self._key = key

    def save(self, state: dict, counter: int) -> None:
        payload = json.dumps({"counter": counter, "state": state}).encode("utf-8")
        ct = crypto.aead_encrypt(
            self._key, crypto.counter_nonce(counter), payload, b"peqes/checkpoint"
        )
        blob = CHECKPOINT_MAGIC + ct.nonce + ct.tag + ct.body
        tmp = self.path.with_suffix(".tmp")
        tmp.write_bytes(blob)
        tmp.replace(self.path)
        self.witness_path.write_text(str(counter))

    def load(self) -> tuple[dict, int] | None:
        if not self.path.exists():
            return None
        blob = self.path.read_bytes()
        if blob[:4] != CHECKPOINT_MAGIC or len(blob) < 4 + crypto.NONCE_LEN + crypto.TAG_LEN:
            raise StateCorrupt("bad checkpoint framing")
        nonce = blob[4 : 4 + crypto.NONCE_LEN]
        tag = blob[4 + crypto.NONCE_LEN : 4 + crypto.NONCE_LEN + crypto.TAG_LEN]
        body = blob[4 + crypto.NONCE_LEN + crypto.TAG_LEN :]
        try:
            payload = crypto.aead_decrypt(
                self._key, crypto.Ciphertext(nonce, body, tag), b"peqes/checkpoint"
            )
        except crypto.AuthenticationFailed as exc:
            raise StateCorrupt("checkpoint unseal failed") from exc
        data = json.loads(payload)
        counter = int(data["counter"])
        witness = self.read_witness()
        if witness is not None and counter < witness:
            raise RollbackDetected(
                f"checkpoint counter {counter} older than witnessed {witness}"
            )
        return data["state"], counter

    def read_witness(self) -> int | None:
        if not self.witness_path.exists():
            return None
        try:
            return int(self.witness_path.read_text().strip())
        except ValueError as exc:
            raise StateCorrupt("unreadable counter witness") from exc
