"""Cryptographic primitives used by every protocol flow.

Thin wrappers around one fixed suite, chosen so the browser client can
implement the exact same operations with WebCrypto:

  * signatures:     ECDSA over P-256 with SHA-256, raw 64-byte r||s encoding
  * key agreement:  ECDH over P-256, uncompressed 65-byte points
  * key derivation: HKDF-SHA256 with fixed domain-separation labels
  * AEAD:           AES-256-GCM, 96-bit nonces, 128-bit tags

The suite is pinned by ``SUITE_ID`` which is embedded in every signed
envelope.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.hazmat.primitives.asymmetric.utils import (
    decode_dss_signature,
    encode_dss_signature,
)
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.hkdf import HKDF
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

from peqes.canonical import from_hex, to_hex

SUITE_ID = "peqes-1/p256-ecdsa+ecdh+hkdf-sha256+aes256gcm"

CURVE = ec.SECP256R1()
PUBLIC_KEY_LEN = 65  # X9.62 uncompressed point
SECRET_KEY_LEN = 32
SIGNATURE_LEN = 64  # raw r||s
SYMMETRIC_KEY_LEN = 32
NONCE_LEN = 12
TAG_LEN = 16

HKDF_SALT = b"peqes-hkdf-v1"
LABEL_SMK = "peqes/smk"
LABEL_EK = "peqes/ek"
LABEL_SEAL = "peqes/seal"
DERIVE_LABELS = (LABEL_SMK, LABEL_EK, LABEL_SEAL)


class CryptoError(Exception):
    """Malformed key material or rejected input."""


class AuthenticationFailed(CryptoError):
    """AEAD authentication failure; no plaintext is ever released."""


@dataclass(frozen=True)
class SigningKeyPair:
    secret: bytes
    public: bytes


@dataclass(frozen=True)
class Signature:
    bytes: bytes

    def hex(self) -> str:
        return to_hex(self.bytes)


@dataclass(frozen=True)
class EphemeralKeyPair:
    secret: bytes
    public: bytes


@dataclass(frozen=True)
class SymmetricKey:
    bytes: bytes


@dataclass(frozen=True)
class Ciphertext:
    nonce: bytes
    body: bytes
    tag: bytes

    def to_dict(self) -> dict:
        return {"nonce": to_hex(self.nonce), "body": to_hex(self.body), "tag": to_hex(self.tag)}

    @classmethod
    def from_dict(cls, data: dict) -> "Ciphertext":
        try:
            ct = cls(from_hex(data["nonce"]), from_hex(data["body"]), from_hex(data["tag"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise CryptoError(f"malformed ciphertext envelope: {exc}") from exc
        if len(ct.nonce) != NONCE_LEN or len(ct.tag) != TAG_LEN:
            raise CryptoError("malformed ciphertext envelope: bad nonce/tag length")
        return ct


def _load_signing_secret(secret: bytes) -> ec.EllipticCurvePrivateKey:
    if not isinstance(secret, bytes) or len(secret) != SECRET_KEY_LEN:
        raise CryptoError("malformed signing secret")
    value = int.from_bytes(secret, "big")
    try:
        return ec.derive_private_key(value, CURVE)
    except ValueError as exc:
        raise CryptoError("malformed signing secret") from exc


def _load_public_point(public: bytes) -> ec.EllipticCurvePublicKey:
    try:
        return ec.EllipticCurvePublicKey.from_encoded_point(CURVE, public)
    except (ValueError, TypeError) as exc:
        raise CryptoError("invalid public element") from exc


def _export_keypair(key: ec.EllipticCurvePrivateKey) -> tuple[bytes, bytes]:
    secret = key.private_numbers().private_value.to_bytes(SECRET_KEY_LEN, "big")
    public = key.public_key().public_bytes(Encoding.X962, PublicFormat.UncompressedPoint)
    return secret, public


def generate_signing_keypair() -> SigningKeyPair:
    secret, public = _export_keypair(ec.generate_private_key(CURVE))
    return SigningKeyPair(secret=secret, public=public)


def public_from_secret(secret: bytes) -> bytes:
    key = _load_signing_secret(secret)
    return key.public_key().public_bytes(Encoding.X962, PublicFormat.UncompressedPoint)


def sign(secret: bytes, message: bytes) -> Signature:
    key = _load_signing_secret(secret)
    der = key.sign(message, ec.ECDSA(hashes.SHA256()))
    r, s = decode_dss_signature(der)
    return Signature(r.to_bytes(32, "big") + s.to_bytes(32, "big"))


def verify(public: bytes, sig: Signature | bytes, message: bytes) -> bool:
    """Total verification: any malformed input yields False, never an exception."""
    raw = sig.bytes if isinstance(sig, Signature) else sig
    try:
        if len(raw) != SIGNATURE_LEN:
            return False
        r = int.from_bytes(raw[:32], "big")
        s = int.from_bytes(raw[32:], "big")
        der = encode_dss_signature(r, s)
        _load_public_point(public).verify(der, message, ec.ECDSA(hashes.SHA256()))
        return True
    except (InvalidSignature, CryptoError, ValueError, TypeError):
        return False


def generate_kx_keypair() -> EphemeralKeyPair:
    secret, public = _export_keypair(ec.generate_private_key(CURVE))
    return EphemeralKeyPair(secret=secret, public=public)


def agree(secret: bytes, peer_public: bytes) -> bytes:
    key = _load_signing_secret(secret)
    peer = _load_public_point(peer_public)
    return key.exchange(ec.ECDH(), peer)


def derive_key(shared: bytes, label: str, context: bytes) -> SymmetricKey:
    if label not in DERIVE_LABELS:
        raise CryptoError(f"unknown derivation label {label!r}")
    okm = HKDF(
        algorithm=hashes.SHA256(),
        length=SYMMETRIC_KEY_LEN,
        salt=HKDF_SALT,
        info=label.encode("ascii") + b"\x00" + context,
    ).derive(shared)
    return SymmetricKey(okm)


def aead_encrypt(key: SymmetricKey, nonce: bytes, plaintext: bytes, aad: bytes) -> Ciphertext:
    if len(nonce) != NONCE_LEN:
        raise CryptoError("nonce must be 96 bits")
    sealed = AESGCM(key.bytes).encrypt(nonce, plaintext, aad)
    return Ciphertext(nonce=nonce, body=sealed[:-TAG_LEN], tag=sealed[-TAG_LEN:])


def aead_decrypt(key: SymmetricKey, ct: Ciphertext, aad: bytes) -> bytes:
    try:
        return AESGCM(key.bytes).decrypt(ct.nonce, ct.body + ct.tag, aad)
    except InvalidTag as exc:
        raise AuthenticationFailed("AEAD authentication failed") from exc


class NonceSequence:
    """Counter-based 96-bit nonces, unique per key; internally synchronized.

    Two parties sharing one key split the counter space by using the same
    step with different starts (e.g. even/odd).
    """

    def __init__(self, start: int = 0, step: int = 1):
        self._counter = start
        self._step = step
        self._lock = threading.Lock()

    def next(self) -> bytes:
        with self._lock:
            value = self._counter
            self._counter += self._step
        if value >= 1 << (8 * NONCE_LEN):
            raise CryptoError("nonce counter exhausted")
        return value.to_bytes(NONCE_LEN, "big")


def counter_nonce(value: int) -> bytes:
    if value < 0 or value >= 1 << (8 * NONCE_LEN):
        raise CryptoError("nonce counter out of range")
    return value.to_bytes(NONCE_LEN, "big")
