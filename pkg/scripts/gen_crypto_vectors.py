#!/usr/bin/env python3
"""Generate the shared crypto interop fixture (shared/crypto-vectors.json).

The browser client and this package both run every vector byte-exact;
the fixture pins canonical serialization, key-derivation labels, AEAD
framing, ECDH, and signature encoding across the two implementations.

Signatures are generated fresh on each run (ECDSA is randomized) but
always verify; everything else is deterministic.
"""

import base64
import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from cryptography.hazmat.primitives.asymmetric import ec

from peqes import crypto
from peqes.canonical import canonical_json, to_hex
from peqes.study import approval_payload, auth_payload, exchange_payload


def b64url(data: bytes) -> str:
    return base64.urlsafe_b64encode(data).rstrip(b"=").decode("ascii")


def jwk_from_scalar(d: int, *, private: bool) -> dict:
    key = ec.derive_private_key(d, ec.SECP256R1())
    numbers = key.public_key().public_numbers()
    jwk = {
        "kty": "EC",
        "crv": "P-256",
        "x": b64url(numbers.x.to_bytes(32, "big")),
        "y": b64url(numbers.y.to_bytes(32, "big")),
    }
    if private:
        jwk["d"] = b64url(d.to_bytes(32, "big"))
    return jwk


def keypair_from_scalar(d: int) -> crypto.EphemeralKeyPair:
    key = ec.derive_private_key(d, ec.SECP256R1())
    numbers = key.public_key().public_numbers()
    public = b"\x04" + numbers.x.to_bytes(32, "big") + numbers.y.to_bytes(32, "big")
    return crypto.EphemeralKeyPair(secret=d.to_bytes(32, "big"), public=public)


def main() -> None:
    vectors = {"suite_id": crypto.SUITE_ID}

    # 1. canonical JSON
    canonical_cases = [
        {"b": 1, "a": [True, None, "x"]},
        {"nested": {"z": [1, 2, 3], "a": {"k": "v"}}, "n": 0},
        {"text": "café — 日本"},
        {"answers": {"age": 30, "bfi1": 3, "occupation": "baker"}},
        [],
        {},
        {"neg": -17, "big": 9007199254740991},
    ]
    vectors["canonical_json"] = [
        {"value": case, "canonical": canonical_json(case).decode("utf-8")}
        for case in canonical_cases
    ]

    # 2. HKDF with the three protocol labels
    ikm = bytes(range(32))
    vectors["hkdf"] = [
        {
            "ikm": to_hex(ikm),
            "label": label,
            "context": to_hex(b"context-bytes"),
            "key": to_hex(crypto.derive_key(ikm, label, b"context-bytes").bytes),
        }
        for label in crypto.DERIVE_LABELS
    ]

    # 3. AES-GCM framing
    key = crypto.SymmetricKey(bytes(range(32, 64)))
    aead_cases = []
    for nonce_counter, plaintext, aad in [
        (0, b"", b""),
        (1, b"hello interop", b"aad-bytes"),
        (7, canonical_json({"answers": {"age": 30, "bfi1": 3}}), b"d2c41b34f7e1"),
    ]:
        ct = crypto.aead_encrypt(key, crypto.counter_nonce(nonce_counter), plaintext, aad)
        aead_cases.append(
            {
                "key": to_hex(key.bytes),
                "nonce": to_hex(ct.nonce),
                "plaintext": to_hex(plaintext),
                "aad": to_hex(aad),
                "body": to_hex(ct.body),
                "tag": to_hex(ct.tag),
            }
        )
    vectors["aead"] = aead_cases

    # 4. ECDH (fixed scalars; shared value independently confirmed in tests)
    d_a = 0xC88F01F510D9AC3F70A292DAA2316DE544E9AAB8AFE84049C62A9C57862D1433
    d_b = 0x0F9883BA0EF32EE75DED0D8BDA39A5146A29F1F2507B3BD458DBEA0B2BB05B4D
    pair_a = keypair_from_scalar(d_a)
    pair_b = keypair_from_scalar(d_b)
    vectors["ecdh"] = {
        "private_a_jwk": jwk_from_scalar(d_a, private=True),
        "public_a": to_hex(pair_a.public),
        "private_b_jwk": jwk_from_scalar(d_b, private=True),
        "public_b": to_hex(pair_b.public),
        "shared": to_hex(crypto.agree(pair_a.secret, pair_b.public)),
    }

    # 5. signature payload constructions + verifying signatures
    signer = crypto.generate_signing_keypair()
    spec_dict = {
        "name": "interop",
        "description": "fixture",
        "survey": [
            {"id": "age", "prompt": "Age?", "kind": "integer", "options": [], "min": 18, "max": 99}
        ],
        "analysis": "let m = mean(data.age)\noutput m\n",
        "researcher_public": to_hex(signer.public),
        "suite_id": crypto.SUITE_ID,
        "mandate_delete": False,
        "sign_result": True,
        "target_n": None,
        "auto_close_at": None,
    }
    study_pk = to_hex(keypair_from_scalar(d_a).public)
    payload_cases = []
    for name, payload in [
        ("approval", approval_payload(spec_dict, study_pk)),
        ("exchange", exchange_payload("a1b2c3", study_pk)),
        ("auth", auth_payload("studyid123", "complete", "deadbeef")),
    ]:
        sig = crypto.sign(signer.secret, payload)
        payload_cases.append(
            {
                "name": name,
                "payload": payload.decode("utf-8"),
                "signer_public": to_hex(signer.public),
                "signature": sig.hex(),
            }
        )
    vectors["signed_payloads"] = payload_cases
    vectors["signed_inputs"] = {
        "spec": spec_dict,
        "study_pk": study_pk,
        "exchange_id": "a1b2c3",
        "auth": {"study_id": "studyid123", "action": "complete", "challenge": "deadbeef"},
    }

    out = Path(__file__).resolve().parent.parent / "shared" / "crypto-vectors.json"
    out.parent.mkdir(exist_ok=True)
    out.write_text(json.dumps(vectors, indent=2, ensure_ascii=False) + "\n")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
