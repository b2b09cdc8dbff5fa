"""Study lifecycle state machine inside the trusted core.

Phases move strictly along Registered -> Approved -> Collecting ->
Completed (-> Deleted). Study secret keys never leave this module; the
host process interacts with it only through the narrow call surface of
``TrustedCore``, mirroring an enclave ECALL boundary.

Verifier-side counterparts (the participant's offer check, the board's
nonce protocol) live here too so every payload construction has exactly
one home.
"""

from __future__ import annotations

import enum
import json
import secrets
import threading
import time
from dataclasses import dataclass
from pathlib import Path

from peqes import crypto
from peqes.canonical import from_hex, to_hex
from peqes.enclave import HandshakeReply, SimEnclave
from peqes.errors import (
    AlreadyCompleted,
    AnalysisFailed,
    AuthInvalid,
    DecryptFailed,
    ExchangeInvalid,
    NotFound,
    PhaseError,
    ResponseInvalid,
    RollbackDetected,
    SignatureInvalid,
)
from peqes.stats import dsl, engine
from peqes.store import CheckpointFile, MerkleRoot, ResponseStore, leaf_for, MerkleFrontier
from peqes.study import (
    StudySpec,
    answers_payload,
    approval_payload,
    auth_payload,
    exchange_payload,
    result_payload,
    validate_answers,
)

EXCHANGE_TTL_SECONDS = 15 * 60
CHALLENGE_TTL_SECONDS = 10 * 60

AAD_APPROVAL_NONCE = b"peqes/approval-nonce"
AAD_APPROVAL_SIG = b"peqes/approval-sig"


class Phase(str, enum.Enum):
    REGISTERED = "Registered"
    APPROVED = "Approved"
    COLLECTING = "Collecting"
    COMPLETED = "Completed"
    DELETED = "Deleted"


_PHASE_ORDER = [Phase.REGISTERED, Phase.APPROVED, Phase.COLLECTING, Phase.COMPLETED, Phase.DELETED]


@dataclass
class StudyRecord:
    id: str
    spec: StudySpec
    study_secret: bytes
    study_public: bytes
    approval: bytes | None
    phase: Phase
    store_root: MerkleRoot
    response_count: int
    result: dict | None = None
    result_signature: bytes | None = None


@dataclass
class Exchange:
    study_id: str
    kx_secret: bytes
    kx_public: bytes
    expiry: float
    used: bool = False


def verify_study_offer(spec_dict: dict, study_pk_hex: str, approval_hex: str, board_pk_hex: str) -> bool:
    """Participant-side approval check; total, never raises."""
    try:
        payload = approval_payload(spec_dict, study_pk_hex)
        return crypto.verify(from_hex(board_pk_hex), from_hex(approval_hex), payload)
    except Exception:
        return False


class TrustedCore:
    """The trusted half of the platform.

    One instance per process. All per-study mutations are serialized by a
    per-study lock; distinct studies proceed concurrently. Every state
    mutation is sealed to disk (checkpoint + witness counter) before it
    is acknowledged, so a restart resumes from the last acknowledged
    operation and a rolled-back checkpoint is detected.
    """

    def __init__(
        self,
        enclave: SimEnclave,
        data_dir: str | Path,
        board_public: bytes | None = None,
        clock=time.time,
        checkpointing: bool = True,
    ):
        self._enclave = enclave
        self._data_dir = Path(data_dir)
        self._board_public = board_public
        self._clock = clock
        self._checkpointing = checkpointing

        self._studies: dict[str, StudyRecord] = {}
        self._exchanges: dict[str, Exchange] = {}
        self._challenges: dict[str, dict] = {}
        self._smk_sessions: dict[str, dict] = {}
        self.engine_runs: dict[str, int] = {}

        self._registry_lock = threading.Lock()
        self._study_locks: dict[str, threading.Lock] = {}
        self._checkpoint_lock = threading.Lock()
        self._checkpoint_counter = 0

        (self._data_dir / "studies").mkdir(parents=True, exist_ok=True)
        state_key = enclave.sealing_key("state").key
        self._checkpoint = CheckpointFile(
            self._data_dir / "checkpoint.bin", self._data_dir / "counter.txt", state_key
        )
        if checkpointing:
            self._restore()

    # -- host-visible info ---------------------------------------------------

    def measurement_info(self) -> dict:
        return {
            "measurement": self._enclave.measurement.hex(),
            "backend_root_pk": to_hex(self._enclave.manufacturer_public),
            "backend": "sim",
            "suite_id": crypto.SUITE_ID,
        }

    # -- internal helpers -----------------------------------------------------

    def _lock_for(self, study_id: str) -> threading.Lock:
        with self._registry_lock:
            return self._study_locks.setdefault(study_id, threading.Lock())

    def _record(self, study_id: str) -> StudyRecord:
        record = self._studies.get(study_id)
        if record is None:
            raise NotFound(f"unknown study {study_id}")
        return record

    def _store_for(self, record: StudyRecord) -> ResponseStore:
        seal = self._enclave.sealing_key("store").key
        key = crypto.derive_key(seal.bytes, crypto.LABEL_SEAL, record.id.encode("ascii"))
        return ResponseStore(
            self._data_dir / "studies" / record.id / "store.bin", record.id, key
        )

    def _collection_closed(self, record: StudyRecord) -> bool:
        spec = record.spec
        if spec.target_n is not None and record.response_count >= spec.target_n:
            return True
        if spec.auto_close_at is not None and self._clock() > spec.auto_close_at:
            return True
        return False

    # -- persistence -----------------------------------------------------------

    def _state_dict(self) -> dict:
        studies = {}
        for record in self._studies.values():
            studies[record.id] = {
                "spec": record.spec.to_dict(),
                "study_secret": to_hex(record.study_secret),
                "study_public": to_hex(record.study_public),
                "approval": to_hex(record.approval) if record.approval else None,
                "phase": record.phase.value,
                "root": record.store_root.to_dict(),
                "response_count": record.response_count,
                "result": record.result,
                "result_signature": to_hex(record.result_signature)
                if record.result_signature
                else None,
            }
        now = self._clock()
        exchanges = {
            xid: {
                "study_id": ex.study_id,
                "kx_secret": to_hex(ex.kx_secret),
                "kx_public": to_hex(ex.kx_public),
                "expiry": ex.expiry,
                "used": ex.used,
            }
            for xid, ex in self._exchanges.items()
            if not ex.used and ex.expiry > now
        }
        return {"studies": studies, "exchanges": exchanges}

    def _checkpoint_now(self) -> None:
        if not self._checkpointing:
            return
        with self._checkpoint_lock:
            self._checkpoint_counter += 1
            self._checkpoint.save(self._state_dict(), self._checkpoint_counter)

    def _restore(self) -> None:
        loaded = self._checkpoint.load()
        if loaded is None:
            return
        state, counter = loaded
        self._checkpoint_counter = counter
        for study_id, data in state["studies"].items():
            spec = StudySpec.from_dict(data["spec"])
            self._studies[study_id] = StudyRecord(
                id=study_id,
                spec=spec,
                study_secret=from_hex(data["study_secret"]),
                study_public=from_hex(data["study_public"]),
                approval=from_hex(data["approval"]) if data["approval"] else None,
                phase=Phase(data["phase"]),
                store_root=MerkleRoot.from_dict(data["root"]),
                response_count=int(data["response_count"]),
                result=data.get("result"),
                result_signature=from_hex(data["result_signature"])
                if data.get("result_signature")
                else None,
            )
        for xid, data in state.get("exchanges", {}).items():
            self._exchanges[xid] = Exchange(
                study_id=data["study_id"],
                kx_secret=from_hex(data["kx_secret"]),
                kx_public=from_hex(data["kx_public"]),
                expiry=float(data["expiry"]),
                used=bool(data["used"]),
            )

    # -- protocol operations ----------------------------------------------------

    def register_study(self, spec_dict: dict, signature_hex: str) -> tuple[str, str]:
        spec = StudySpec.from_dict(spec_dict)
        spec.validate()
        if not crypto.verify(
            spec.researcher_public, from_hex(signature_hex), spec.canonical_bytes()
        ):
            raise SignatureInvalid("researcher signature does not cover this spec")
        dsl.parse(spec.analysis, spec.survey)  # ScriptInvalid propagates

        study_id = secrets.token_hex(16)
        keys = crypto.generate_signing_keypair()
        record = StudyRecord(
            id=study_id,
            spec=spec,
            study_secret=keys.secret,
            study_public=keys.public,
            approval=None,
            phase=Phase.REGISTERED,
            store_root=MerkleFrontier().root(),
            response_count=0,
        )
        with self._registry_lock:
            self._studies[study_id] = record

        study_dir = self._data_dir / "studies" / study_id
        study_dir.mkdir(parents=True, exist_ok=True)
        (study_dir / "spec.json").write_text(json.dumps(spec.to_dict(), indent=2))
        self._checkpoint_now()
        return study_id, to_hex(keys.public)

    def get_offer(self, study_id: str) -> dict:
        record = self._record(study_id)
        return {
            "spec": record.spec.to_dict(),
            "study_pk": to_hex(record.study_public),
            "approval": to_hex(record.approval) if record.approval else None,
            "phase": record.phase.value,
            "response_count": record.response_count,
        }

    def attest(self, study_id: str, challenge: bytes) -> HandshakeReply:
        self._record(study_id)
        reply, smk = self._enclave.attested_handshake(challenge)
        with self._lock_for(study_id):
            self._smk_sessions[study_id] = {
                "smk": smk,
                "nonces": crypto.NonceSequence(start=1, step=2),  # board uses even
            }
        return reply

    def approval_nonce(self, study_id: str, nonce_ct: dict) -> dict:
        record = self._record(study_id)
        with self._lock_for(study_id):
            if record.phase is not Phase.REGISTERED:
                raise PhaseError(f"cannot approve study in phase {record.phase.value}")
            session = self._smk_sessions.get(study_id)
            if session is None:
                raise AuthInvalid("no attested session for this study")
            try:
                nonce = crypto.aead_decrypt(
                    session["smk"], crypto.Ciphertext.from_dict(nonce_ct), AAD_APPROVAL_NONCE
                )
            except (crypto.CryptoError, KeyError) as exc:
                raise DecryptFailed(f"nonce decryption failed: {exc}") from exc
            proof = crypto.sign(record.study_secret, nonce)
            reply = crypto.aead_encrypt(
                session["smk"], session["nonces"].next(), proof.bytes, AAD_APPROVAL_SIG
            )
            return reply.to_dict()

    def store_approval(self, study_id: str, approval_hex: str) -> str:
        record = self._record(study_id)
        with self._lock_for(study_id):
            if record.phase is not Phase.REGISTERED:
                raise PhaseError(f"cannot approve study in phase {record.phase.value}")
            approval = from_hex(approval_hex)
            if self._board_public is not None:
                payload = approval_payload(record.spec.to_dict(), to_hex(record.study_public))
                if not crypto.verify(self._board_public, approval, payload):
                    raise SignatureInvalid("approval does not verify under the pinned board key")
            record.approval = approval
            record.phase = Phase.APPROVED
            self._smk_sessions.pop(study_id, None)
        self._checkpoint_now()
        return record.phase.value

    def issue_challenge(self, study_id: str) -> str:
        self._record(study_id)
        challenge = secrets.token_hex(16)
        with self._registry_lock:
            self._challenges[challenge] = {
                "study_id": study_id,
                "expiry": self._clock() + CHALLENGE_TTL_SECONDS,
                "used": False,
            }
        return challenge

    def _consume_challenge(self, study_id: str, challenge_hex: str) -> None:
        with self._registry_lock:
            entry = self._challenges.get(challenge_hex)
            if (
                entry is None
                or entry["used"]
                or entry["study_id"] != study_id
                or entry["expiry"] < self._clock()
            ):
                raise AuthInvalid("unknown, expired, or reused challenge")
            entry["used"] = True

    def _verify_researcher(self, record: StudyRecord, action: str, challenge_hex: str, sig_hex: str) -> None:
        self._consume_challenge(record.id, challenge_hex)
        payload = auth_payload(record.id, action, challenge_hex)
        if not crypto.verify(record.spec.researcher_public, from_hex(sig_hex), payload):
            raise AuthInvalid(f"researcher signature invalid for {action}")

    def open_collection(self, study_id: str, challenge_hex: str, sig_hex: str) -> str:
        record = self._record(study_id)
        with self._lock_for(study_id):
            self._verify_researcher(record, "open", challenge_hex, sig_hex)
            if record.phase is not Phase.APPROVED:
                raise PhaseError(f"cannot open collection in phase {record.phase.value}")
            record.phase = Phase.COLLECTING
        self._checkpoint_now()
        return record.phase.value

    def begin_exchange(self, study_id: str) -> dict:
        record = self._record(study_id)
        with self._lock_for(study_id):
            if record.phase is not Phase.COLLECTING or self._collection_closed(record):
                raise PhaseError("study is not accepting participants")
            kx = crypto.generate_kx_keypair()
            exchange_id = secrets.token_hex(16)
            expiry = self._clock() + EXCHANGE_TTL_SECONDS
            sig = crypto.sign(
                record.study_secret, exchange_payload(exchange_id, to_hex(kx.public))
            )
            with self._registry_lock:
                now = self._clock()
                stale = [x for x, ex in self._exchanges.items() if ex.expiry < now or ex.used]
                for x in stale:
                    del self._exchanges[x]
                self._exchanges[exchange_id] = Exchange(
                    study_id=study_id,
                    kx_secret=kx.secret,
                    kx_public=kx.public,
                    expiry=expiry,
                )
        self._checkpoint_now()
        return {
            "exchange_id": exchange_id,
            "g_e_pk": to_hex(kx.public),
            "g_sigma": sig.hex(),
            "expiry": expiry,
            "phase": record.phase.value,
        }

    def submit_response(self, study_id: str, envelope: dict) -> None:
        record = self._record(study_id)
        with self._lock_for(study_id):
            if record.phase is not Phase.COLLECTING or self._collection_closed(record):
                raise PhaseError("study is not accepting responses")
            try:
                exchange_id = str(envelope["exchange_id"])
                participant_public = from_hex(envelope["g_p_pk"])
                ciphertext = crypto.Ciphertext.from_dict(envelope["ciphertext"])
            except (KeyError, TypeError, ValueError, crypto.CryptoError) as exc:
                raise ResponseInvalid(f"malformed response envelope: {exc}") from exc

            with self._registry_lock:
                exchange = self._exchanges.get(exchange_id)
            if (
                exchange is None
                or exchange.used
                or exchange.study_id != study_id
                or exchange.expiry < self._clock()
            ):
                raise ExchangeInvalid("unknown, expired, or already used exchange")

            try:
                shared = crypto.agree(exchange.kx_secret, participant_public)
            except crypto.CryptoError as exc:
                raise ResponseInvalid(f"invalid participant key: {exc}") from exc
            ek = crypto.derive_key(shared, crypto.LABEL_EK, exchange_id.encode("ascii"))
            try:
                plaintext = crypto.aead_decrypt(ek, ciphertext, exchange_id.encode("ascii"))
            except crypto.AuthenticationFailed as exc:
                raise DecryptFailed("response ciphertext failed authentication") from exc

            try:
                payload = json.loads(plaintext)
                answers = payload["answers"]
            except (ValueError, KeyError, TypeError) as exc:
                raise ResponseInvalid(f"response payload is not valid JSON: {exc}") from exc
            validate_answers(record.spec, answers)

            exchange.used = True
            store = self._store_for(record)
            frontier = self._frontier_from(record)
            index = record.response_count
            ct = store.append(index, answers_payload(answers))
            frontier.append_leaf(leaf_for(record.id, index, ct))
            record.store_root = frontier.root()
            record.response_count += 1
        self._checkpoint_now()

    def _frontier_from(self, record: StudyRecord) -> MerkleFrontier:
        # Cached on the record; after a restart it is rebuilt from the
        # untrusted store file and checked against the sealed root before
        # any new leaf is hung off it.
        frontier = getattr(record, "_frontier", None)
        if frontier is not None and frontier.count == record.response_count:
            return frontier
        store = self._store_for(record)
        frontier = MerkleFrontier()
        for index, ct in store.scan_records():
            frontier.append_leaf(leaf_for(record.id, index, ct))
        root = frontier.root()
        if root.count != record.store_root.count or root.digest != record.store_root.digest:
            raise RollbackDetected("store file does not match the sealed root")
        record._frontier = frontier
        return frontier

    def complete_study(self, study_id: str, challenge_hex: str, sig_hex: str) -> dict:
        record = self._record(study_id)
        with self._lock_for(study_id):
            if record.phase in (Phase.COMPLETED, Phase.DELETED):
                raise AlreadyCompleted("analysis has already run for this study")
            if record.phase is not Phase.COLLECTING:
                raise PhaseError(f"cannot complete study in phase {record.phase.value}")
            self._verify_researcher(record, "complete", challenge_hex, sig_hex)

            store = self._store_for(record)
            rows_bytes = store.read_all(record.store_root)
            rows = [json.loads(b)["answers"] for b in rows_bytes]

            # the one-shot gate: committed before the engine ever runs
            record.phase = Phase.COMPLETED
            self._checkpoint_now()

            plan = dsl.parse(record.spec.analysis, record.spec.survey)
            dataset = engine.dataset_from_rows(record.spec.survey, rows)
            self.engine_runs[study_id] = self.engine_runs.get(study_id, 0) + 1
            try:
                outputs = engine.execute_once(plan, dataset)
            except AnalysisFailed:
                self._checkpoint_now()
                raise

            record.result = outputs
            if record.spec.sign_result:
                record.result_signature = crypto.sign(
                    record.study_secret, result_payload(outputs)
                ).bytes
            if record.spec.mandate_delete:
                store.delete()
                record.phase = Phase.DELETED
        self._checkpoint_now()
        return {
            "outputs": record.result,
            "result_signature": to_hex(record.result_signature)
            if record.result_signature
            else None,
            "phase": record.phase.value,
        }
