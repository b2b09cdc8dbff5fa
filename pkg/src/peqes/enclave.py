"""Trusted-execution-environment abstraction with a simulated backend.

The simulation preserves the trust topology of a hardware enclave at
desk scale: a per-device secret, a code measurement, quotes whose
evidence chains to a manufacturer root key, and sealing keys bound to
(measurement, device secret). A hardware backend would replace exactly
this module; nothing else in the system knows how evidence is produced.

The simulated device secret lives in process memory only; the host that
runs the simulation could of course read it. The simulation models the
trust relationships, not memory isolation.
"""

from __future__ import annotations

import hashlib
import json
import os
import secrets
from dataclasses import dataclass
from pathlib import Path

from peqes import crypto
from peqes.canonical import from_hex, to_hex

MEASUREMENT_LEN = 32
REPORT_DATA_LEN = 64
BACKEND_SIM = "sim"

_QUOTE_DOMAIN = b"peqes/sim-quote-v1"


class HandshakeAborted(Exception):
    """Verifier-side abort: quote rejected or transcript mismatch."""


@dataclass(frozen=True)
class Measurement:
    digest: bytes

    def hex(self) -> str:
        return to_hex(self.digest)


def measure(build_artifact: bytes) -> Measurement:
    """Collision-resistant digest of the trusted-core build artifact."""
    return Measurement(hashlib.sha256(build_artifact).digest())


@dataclass(frozen=True)
class AttestationQuote:
    measurement: Measurement
    report_data: bytes
    evidence: bytes
    backend: str = BACKEND_SIM

    def to_dict(self) -> dict:
        return {
            "measurement": self.measurement.hex(),
            "report_data": to_hex(self.report_data),
            "evidence": to_hex(self.evidence),
            "backend": self.backend,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AttestationQuote":
        return cls(
            measurement=Measurement(from_hex(data["measurement"])),
            report_data=from_hex(data["report_data"]),
            evidence=from_hex(data["evidence"]),
            backend=str(data.get("backend", BACKEND_SIM)),
        )


@dataclass(frozen=True)
class SealingKey:
    key: crypto.SymmetricKey


@dataclass(frozen=True)
class SimBackendConfig:
    """File-configured roots of the simulation.

    ``manufacturer_secret`` plays the role of the key fused into the CPU:
    the simulation needs it to produce quote evidence. Verifiers pin only
    the public half.
    """

    device_secret: bytes
    manufacturer_secret: bytes
    measurement: Measurement

    @classmethod
    def generate(cls, measurement: Measurement) -> "SimBackendConfig":
        return cls(
            device_secret=secrets.token_bytes(32),
            manufacturer_secret=crypto.generate_signing_keypair().secret,
            measurement=measurement,
        )

    @property
    def manufacturer_public(self) -> bytes:
        return crypto.public_from_secret(self.manufacturer_secret)

    def to_file(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(
                {
                    "device_secret": to_hex(self.device_secret),
                    "manufacturer_secret": to_hex(self.manufacturer_secret),
                    "manufacturer_public": to_hex(self.manufacturer_public),
                    "measurement": self.measurement.hex(),
                },
                indent=2,
            )
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "SimBackendConfig":
        data = json.loads(Path(path).read_text())
        return cls(
            device_secret=from_hex(data["device_secret"]),
            manufacturer_secret=from_hex(data["manufacturer_secret"]),
            measurement=Measurement(from_hex(data["measurement"])),
        )


def _quote_message(measurement: Measurement, report_data: bytes) -> bytes:
    return _QUOTE_DOMAIN + measurement.digest + report_data


@dataclass(frozen=True)
class HandshakeReply:
    enclave_kx_public: bytes
    quote: AttestationQuote

    def to_dict(self) -> dict:
        return {"enclave_kx_pk": to_hex(self.enclave_kx_public), "quote": self.quote.to_dict()}

    @classmethod
    def from_dict(cls, data: dict) -> "HandshakeReply":
        return cls(
            enclave_kx_public=from_hex(data["enclave_kx_pk"]),
            quote=AttestationQuote.from_dict(data["quote"]),
        )


class SimEnclave:
    """Simulated enclave; immutable after initialization."""

    def __init__(self, config: SimBackendConfig):
        self.__config = config

    @property
    def measurement(self) -> Measurement:
        return self.__config.measurement

    @property
    def manufacturer_public(self) -> bytes:
        return self.__config.manufacturer_public

    def quote(self, report_data: bytes) -> AttestationQuote:
        if len(report_data) != REPORT_DATA_LEN:
            raise ValueError("report_data must be 64 bytes")
        evidence = crypto.sign(
            self.__config.manufacturer_secret,
            _quote_message(self.__config.measurement, report_data),
        )
        return AttestationQuote(
            measurement=self.__config.measurement,
            report_data=report_data,
            evidence=evidence.bytes,
        )

    def attested_handshake(self, verifier_challenge: bytes) -> tuple[HandshakeReply, crypto.SymmetricKey]:
        """One handshake round: challenge in, (reply, SMK) out.

        ``verifier_challenge`` is the verifier's ephemeral public key
        followed by a fresh nonce. The quote's report data binds the full
        transcript (enclave ephemeral public key || challenge), so the SMK
        is channel-bound to the attested code.
        """
        if len(verifier_challenge) <= crypto.PUBLIC_KEY_LEN:
            raise HandshakeAborted("challenge too short")
        verifier_public = verifier_challenge[: crypto.PUBLIC_KEY_LEN]
        eph = crypto.generate_kx_keypair()
        try:
            shared = crypto.agree(eph.secret, verifier_public)
        except crypto.CryptoError as exc:
            raise HandshakeAborted(f"bad verifier key: {exc}") from exc
        transcript = eph.public + verifier_challenge
        smk = crypto.derive_key(shared, crypto.LABEL_SMK, hashlib.sha256(transcript).digest())
        report_data = hashlib.sha512(transcript).digest()
        return HandshakeReply(eph.public, self.quote(report_data)), smk

    def sealing_key(self, context: str) -> SealingKey:
        ikm = self.__config.device_secret + self.__config.measurement.digest
        return SealingKey(crypto.derive_key(ikm, crypto.LABEL_SEAL, context.encode("ascii")))


def verify_quote(
    quote: AttestationQuote,
    expected: Measurement,
    expected_report_data: bytes,
    root_public: bytes,
) -> bool:
    """Total: True iff evidence valid under the root of trust, measurement
    matches, and report data matches."""
    try:
        if quote.backend != BACKEND_SIM:
            return False
        if quote.measurement.digest != expected.digest:
            return False
        if quote.report_data != expected_report_data:
            return False
        return crypto.verify(
            root_public, quote.evidence, _quote_message(quote.measurement, quote.report_data)
        )
    except Exception:
        return False


class AttestationVerifier:
    """Board-side driver for the attested handshake.

    Holds the pinned root of trust and expected measurement; produces the
    challenge and checks the reply before releasing the SMK.
    """

    def __init__(self, root_public: bytes, expected_measurement: Measurement):
        self._root_public = root_public
        self._expected = expected_measurement
        self._kx = None
        self._challenge = None

    def new_challenge(self) -> bytes:
        self._kx = crypto.generate_kx_keypair()
        self._challenge = self._kx.public + os.urandom(32)
        return self._challenge

    def complete(self, reply: HandshakeReply) -> crypto.SymmetricKey:
        if self._kx is None or self._challenge is None:
            raise HandshakeAborted("no challenge outstanding")
        transcript = reply.enclave_kx_public + self._challenge
        expected_report = hashlib.sha512(transcript).digest()
        if not verify_quote(reply.quote, self._expected, expected_report, self._root_public):
            raise HandshakeAborted("quote verification failed")
        shared = crypto.agree(self._kx.secret, reply.enclave_kx_public)
        return crypto.derive_key(shared, crypto.LABEL_SMK, hashlib.sha256(transcript).digest())
