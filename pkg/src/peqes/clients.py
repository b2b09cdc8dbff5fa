"""Client-side protocol drivers for the three parties.

These run outside the platform: the researcher signs and manages their
study, the ethics board attests the core and signs approvals against a
locally pinned measurement, and participants verify offers and encrypt
their responses. The browser webapp mirrors the participant driver.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass
from pathlib import Path

import httpx

from peqes import crypto
from peqes.canonical import from_hex, to_hex
from peqes.enclave import AttestationVerifier, HandshakeReply, Measurement
from peqes.protocol import AAD_APPROVAL_NONCE, AAD_APPROVAL_SIG, verify_study_offer
from peqes.study import (
    StudySpec,
    answers_payload,
    approval_payload,
    auth_payload,
    exchange_payload,
)


class ClientError(Exception):
    """Protocol failure surfaced by a client; carries the wire code."""

    def __init__(self, code: str, detail: str = ""):
        super().__init__(f"{code}: {detail}" if detail else code)
        self.code = code
        self.detail = detail


class AttestationFailed(ClientError):
    def __init__(self, detail: str = ""):
        super().__init__("ATTESTATION_FAILED", detail)


def _check(response: httpx.Response) -> dict | None:
    if response.status_code >= 400:
        try:
            body = response.json()
            raise ClientError(body.get("error", "HTTP_ERROR"), body.get("detail", ""))
        except (ValueError, KeyError):
            raise ClientError("HTTP_ERROR", f"status {response.status_code}")
    if response.status_code == 204 or not response.content:
        return None
    return response.json()


def save_keypair(path: str | Path, pair: crypto.SigningKeyPair) -> None:
    Path(path).write_text(
        json.dumps(
            {
                "suite_id": crypto.SUITE_ID,
                "secret": to_hex(pair.secret),
                "public": to_hex(pair.public),
            },
            indent=2,
        )
    )


def load_keypair(path: str | Path) -> crypto.SigningKeyPair:
    data = json.loads(Path(path).read_text())
    return crypto.SigningKeyPair(secret=from_hex(data["secret"]), public=from_hex(data["public"]))


@dataclass
class TrustAnchor:
    """The board's locally pinned root of trust for the platform."""

    measurement: Measurement
    backend_root_pk: bytes

    def to_file(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(
                {
                    "measurement": self.measurement.hex(),
                    "backend_root_pk": to_hex(self.backend_root_pk),
                },
                indent=2,
            )
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "TrustAnchor":
        data = json.loads(Path(path).read_text())
        return cls(
            measurement=Measurement(from_hex(data["measurement"])),
            backend_root_pk=from_hex(data["backend_root_pk"]),
        )


class PlatformClient:
    def __init__(self, base_url: str, client: httpx.Client | None = None):
        self.base_url = base_url.rstrip("/")
        self.http = client or httpx.Client(base_url=self.base_url, timeout=30.0)

    def get(self, path: str) -> dict | None:
        return _check(self.http.get(path))

    def post(self, path: str, payload: dict | None = None) -> dict | None:
        return _check(self.http.post(path, json=payload if payload is not None else {}))

    def fetch_offer(self, study_id: str) -> dict:
        return self.get(f"/api/studies/{study_id}")


class ResearcherClient(PlatformClient):
    def __init__(self, base_url: str, keypair: crypto.SigningKeyPair, client=None):
        super().__init__(base_url, client)
        self.keypair = keypair

    def sign_spec(self, spec: StudySpec) -> str:
        return crypto.sign(self.keypair.secret, spec.canonical_bytes()).hex()

    def register(self, spec: StudySpec) -> dict:
        return self.post(
            "/api/studies", {"spec": spec.to_dict(), "signature": self.sign_spec(spec)}
        )

    def _authed(self, study_id: str, action: str) -> dict:
        challenge = self.post(f"/api/studies/{study_id}/challenge")["challenge"]
        sig = crypto.sign(self.keypair.secret, auth_payload(study_id, action, challenge))
        return {"challenge": challenge, "signature": sig.hex()}

    def open(self, study_id: str) -> dict:
        return self.post(f"/api/studies/{study_id}/open", self._authed(study_id, "open"))

    def complete(self, study_id: str) -> dict:
        return self.post(f"/api/studies/{study_id}/complete", self._authed(study_id, "complete"))


class BoardClient(PlatformClient):
    """Attest-then-approve driver; aborts before the nonce step unless the
    quote verifies against the locally pinned measurement."""

    def __init__(self, base_url: str, keypair: crypto.SigningKeyPair, anchor: TrustAnchor, client=None):
        super().__init__(base_url, client)
        self.keypair = keypair
        self.anchor = anchor

    def approve(self, study_id: str) -> dict:
        offer = self.fetch_offer(study_id)

        verifier = AttestationVerifier(self.anchor.backend_root_pk, self.anchor.measurement)
        challenge = verifier.new_challenge()
        reply_data = self.post(
            f"/api/studies/{study_id}/attest", {"challenge": to_hex(challenge)}
        )
        try:
            smk = verifier.complete(HandshakeReply.from_dict(reply_data))
        except Exception as exc:
            raise AttestationFailed(str(exc)) from exc

        # proof of possession: the attested core must sign our fresh nonce
        # with the study key it claims to hold
        nonce = os.urandom(32)
        nonces = crypto.NonceSequence(start=0, step=2)
        nonce_ct = crypto.aead_encrypt(smk, nonces.next(), nonce, AAD_APPROVAL_NONCE)
        reply = self.post(
            f"/api/studies/{study_id}/approval",
            {"step": "nonce", "ciphertext": nonce_ct.to_dict()},
        )
        sig_bytes = crypto.aead_decrypt(
            smk, crypto.Ciphertext.from_dict(reply["ciphertext"]), AAD_APPROVAL_SIG
        )
        if not crypto.verify(from_hex(offer["study_pk"]), sig_bytes, nonce):
            raise ClientError("SIGNATURE_INVALID", "study key proof-of-possession failed")

        approval = crypto.sign(
            self.keypair.secret, approval_payload(offer["spec"], offer["study_pk"])
        )
        return self.post(
            f"/api/studies/{study_id}/approval", {"step": "approve", "approval": approval.hex()}
        )


class ParticipantClient(PlatformClient):
    """Verify the offer, then encrypt one response end-to-end into the core."""

    def __init__(self, base_url: str, board_public: bytes | None = None, client=None):
        super().__init__(base_url, client)
        self.board_public = board_public

    def verify_offer(self, offer: dict) -> bool:
        if self.board_public is None or not offer.get("approval"):
            return False
        return verify_study_offer(
            offer["spec"], offer["study_pk"], offer["approval"], to_hex(self.board_public)
        )

    def participate(self, study_id: str, answers: dict, offer: dict | None = None, verify: bool = True) -> dict:
        """Returns {exchange_id, latency_ms} where latency covers the upload request."""
        if offer is None:
            offer = self.fetch_offer(study_id)
        if verify and not self.verify_offer(offer):
            raise ClientError("SIGNATURE_INVALID", "study offer failed approval verification")

        exchange = self.post(f"/api/studies/{study_id}/exchange")
        payload = exchange_payload(exchange["exchange_id"], exchange["g_e_pk"])
        if not crypto.verify(
            from_hex(offer["study_pk"]), from_hex(exchange["g_sigma"]), payload
        ):
            raise ClientError("SIGNATURE_INVALID", "exchange key signature invalid")

        kx = crypto.generate_kx_keypair()
        shared = crypto.agree(kx.secret, from_hex(exchange["g_e_pk"]))
        ek = crypto.derive_key(shared, crypto.LABEL_EK, exchange["exchange_id"].encode("ascii"))
        ct = crypto.aead_encrypt(
            ek,
            crypto.counter_nonce(0),  # fresh key per exchange
            answers_payload(answers),
            exchange["exchange_id"].encode("ascii"),
        )
        body = {
            "exchange_id": exchange["exchange_id"],
            "g_p_pk": to_hex(kx.public),
            "ciphertext": ct.to_dict(),
        }
        start = time.perf_counter()
        self.post(f"/api/studies/{study_id}/responses", body)
        latency_ms = (time.perf_counter() - start) * 1000.0
        return {"exchange_id": exchange["exchange_id"], "latency_ms": latency_ms}
