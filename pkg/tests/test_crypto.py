import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from peqes import crypto
from peqes.canonical import CanonicalizationError, canonical_json

# P-256 ECDH known-answer vector, computed with an independent pure-Python
# implementation of the curve group (see _oracle_shared below).
KAT_D_A = 0xC88F01F510D9AC3F70A292DAA2316DE544E9AAB8AFE84049C62A9C57862D1433
KAT_D_B = 0x0F9883BA0EF32EE75DED0D8BDA39A5146A29F1F2507B3BD458DBEA0B2BB05B4D
KAT_SHARED = "466935a2008a379f6b611b39ef218fa812b2f2d727b241a9138df0c75c76bd0a"

_P = 0xFFFFFFFF00000001000000000000000000000000FFFFFFFFFFFFFFFFFFFFFFFF
_A = _P - 3
_GX = 0x6B17D1F2E12C4247F8BCE6E563A440F277037D812DEB33A0F4A13945D898C296
_GY = 0x4FE342E2FE1A7F9B8EE7EB4A7C0F9E162BCE33576B315ECECBB6406837BF51F5


def _ec_add(p1, p2):
    if p1 is None:
        return p2
    if p2 is None:
        return p1
    x1, y1 = p1
    x2, y2 = p2
    if x1 == x2 and (y1 + y2) % _P == 0:
        return None
    if p1 == p2:
        lam = (3 * x1 * x1 + _A) * pow(2 * y1, _P - 2, _P) % _P
    else:
        lam = (y2 - y1) * pow(x2 - x1, _P - 2, _P) % _P
    x3 = (lam * lam - x1 - x2) % _P
    return (x3, (lam * (x1 - x3) - y1) % _P)


def _ec_mul(k, point):
    result = None
    while k:
        if k & 1:
            result = _ec_add(result, point)
        point = _ec_add(point, point)
        k >>= 1
    return result


def _oracle_shared(d_a: int, d_b: int) -> bytes:
    """Independent double-and-add reference for the ECDH x-coordinate."""
    qb = _ec_mul(d_b, (_GX, _GY))
    return _ec_mul(d_a, qb)[0].to_bytes(32, "big")


def _keypair_from_scalar(d: int) -> crypto.EphemeralKeyPair:
    secret = d.to_bytes(32, "big")
    point = _ec_mul(d, (_GX, _GY))
    public = b"\x04" + point[0].to_bytes(32, "big") + point[1].to_bytes(32, "big")
    return crypto.EphemeralKeyPair(secret=secret, public=public)


class TestSignatures:
    def test_sign_verify_roundtrip(self):
        pair = crypto.generate_signing_keypair()
        sig = crypto.sign(pair.secret, b"m")
        assert crypto.verify(pair.public, sig, b"m")

    def test_fresh_keypairs_distinct(self):
        assert crypto.generate_signing_keypair().public != crypto.generate_signing_keypair().public

    def test_public_key_length(self):
        assert len(crypto.generate_signing_keypair().public) == crypto.PUBLIC_KEY_LEN

    def test_signature_length(self):
        pair = crypto.generate_signing_keypair()
        assert len(crypto.sign(pair.secret, b"x").bytes) == crypto.SIGNATURE_LEN

    def test_empty_message(self):
        pair = crypto.generate_signing_keypair()
        assert crypto.verify(pair.public, crypto.sign(pair.secret, b""), b"")

    def test_wrong_message_fails(self):
        pair = crypto.generate_signing_keypair()
        sig = crypto.sign(pair.secret, b"m")
        assert not crypto.verify(pair.public, sig, b"mx")

    def test_wrong_key_fails(self):
        p1 = crypto.generate_signing_keypair()
        p2 = crypto.generate_signing_keypair()
        assert not crypto.verify(p2.public, crypto.sign(p1.secret, b"m"), b"m")

    def test_zero_signature_fails(self):
        pair = crypto.generate_signing_keypair()
        assert not crypto.verify(pair.public, crypto.Signature(b"\x00" * 64), b"m")

    def test_verify_is_total_on_garbage(self):
        assert not crypto.verify(b"junk", crypto.Signature(b"also junk"), b"m")
        assert not crypto.verify(b"", b"", b"")

    @settings(max_examples=100)
    @given(st.binary(min_size=0, max_size=512), st.binary(min_size=1, max_size=32))
    def test_binding_property(self, message, suffix):
        pair = crypto.generate_signing_keypair()
        sig = crypto.sign(pair.secret, message)
        assert crypto.verify(pair.public, sig, message)
        assert not crypto.verify(pair.public, sig, message + suffix)


class TestKeyAgreement:
    def test_symmetry_many(self):
        # DH symmetry over 1000 random pairs
        for _ in range(1000):
            a = crypto.generate_kx_keypair()
            b = crypto.generate_kx_keypair()
            assert crypto.agree(a.secret, b.public) == crypto.agree(b.secret, a.public)

    def test_known_answer_vector(self):
        a = _keypair_from_scalar(KAT_D_A)
        b = _keypair_from_scalar(KAT_D_B)
        assert crypto.agree(a.secret, b.public).hex() == KAT_SHARED
        assert crypto.agree(b.secret, a.public).hex() == KAT_SHARED
        assert _oracle_shared(KAT_D_A, KAT_D_B).hex() == KAT_SHARED

    def test_oracle_agreement_random_scalars(self):
        import random

        rng = random.Random(0xEC)
        order = 0xFFFFFFFF00000000FFFFFFFFFFFFFFFFBCE6FAADA7179E84F3B9CAC2FC632551
        for _ in range(8):
            d_a = rng.randrange(1, order)
            d_b = rng.randrange(1, order)
            a = _keypair_from_scalar(d_a)
            b = _keypair_from_scalar(d_b)
            assert crypto.agree(a.secret, b.public) == _oracle_shared(d_a, d_b)

    def test_all_zero_public_rejected(self):
        a = crypto.generate_kx_keypair()
        with pytest.raises(crypto.CryptoError):
            crypto.agree(a.secret, b"\x00" * 65)

    def test_off_curve_point_rejected(self):
        a = crypto.generate_kx_keypair()
        bad = b"\x04" + (2).to_bytes(32, "big") + (3).to_bytes(32, "big")
        with pytest.raises(crypto.CryptoError):
            crypto.agree(a.secret, bad)


class TestKeyDerivation:
    def test_deterministic(self):
        k1 = crypto.derive_key(b"shared", crypto.LABEL_EK, b"ctx")
        k2 = crypto.derive_key(b"shared", crypto.LABEL_EK, b"ctx")
        assert k1 == k2

    def test_label_separation(self):
        k1 = crypto.derive_key(b"shared", crypto.LABEL_EK, b"ctx")
        k2 = crypto.derive_key(b"shared", crypto.LABEL_SMK, b"ctx")
        assert k1 != k2

    def test_context_separation(self):
        k1 = crypto.derive_key(b"shared", crypto.LABEL_EK, b"ctx1")
        k2 = crypto.derive_key(b"shared", crypto.LABEL_EK, b"ctx2")
        assert k1 != k2

    def test_key_length(self):
        key = crypto.derive_key(b"shared", crypto.LABEL_SEAL, b"")
        assert len(key.bytes) == crypto.SYMMETRIC_KEY_LEN

    def test_unknown_label_rejected(self):
        with pytest.raises(crypto.CryptoError):
            crypto.derive_key(b"shared", "peqes/nope", b"")


class TestAead:
    def _key(self):
        return crypto.derive_key(b"k", crypto.LABEL_SEAL, b"t")

    def test_roundtrip_empty(self):
        key = self._key()
        ct = crypto.aead_encrypt(key, crypto.counter_nonce(0), b"", b"aad")
        assert crypto.aead_decrypt(key, ct, b"aad") == b""

    def test_roundtrip_1mib(self):
        key = self._key()
        blob = bytes(range(256)) * 4096  # 1 MiB
        ct = crypto.aead_encrypt(key, crypto.counter_nonce(1), blob, b"")
        assert crypto.aead_decrypt(key, ct, b"") == blob

    def test_bit_flip_rejected(self):
        key = self._key()
        ct = crypto.aead_encrypt(key, crypto.counter_nonce(2), b"secret", b"")
        flipped = crypto.Ciphertext(ct.nonce, bytes([ct.body[0] ^ 1]) + ct.body[1:], ct.tag)
        with pytest.raises(crypto.AuthenticationFailed):
            crypto.aead_decrypt(key, flipped, b"")

    def test_aad_mismatch_rejected(self):
        key = self._key()
        ct = crypto.aead_encrypt(key, crypto.counter_nonce(3), b"secret", b"a")
        with pytest.raises(crypto.AuthenticationFailed):
            crypto.aead_decrypt(key, ct, b"b")

    @settings(max_examples=60)
    @given(st.binary(max_size=4096), st.binary(max_size=64))
    def test_roundtrip_property(self, plaintext, aad):
        key = self._key()
        ct = crypto.aead_encrypt(key, crypto.counter_nonce(7), plaintext, aad)
        assert crypto.aead_decrypt(key, ct, aad) == plaintext

    @settings(max_examples=40)
    @given(st.binary(min_size=1, max_size=1024), st.integers(min_value=0))
    def test_tamper_rejected_property(self, plaintext, position):
        key = self._key()
        ct = crypto.aead_encrypt(key, crypto.counter_nonce(8), plaintext, b"")
        i = position % len(ct.body)
        body = bytearray(ct.body)
        body[i] ^= 0x40
        with pytest.raises(crypto.AuthenticationFailed):
            crypto.aead_decrypt(key, crypto.Ciphertext(ct.nonce, bytes(body), ct.tag), b"")

    def test_nonce_sequence_unique_and_threadsafe(self):
        import threading

        seq = crypto.NonceSequence()
        seen = []

        def worker():
            for _ in range(200):
                seen.append(seq.next())

        threads = [threading.Thread(target=worker) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert len(set(seen)) == len(seen) == 1600


class TestCanonicalJson:
    def test_sorted_compact(self):
        assert canonical_json({"b": 1, "a": [True, None]}) == b'{"a":[true,null],"b":1}'

    def test_unicode_not_escaped(self):
        assert canonical_json({"s": "café"}) == '{"s":"café"}'.encode("utf-8")

    def test_stable_across_json_roundtrip(self):
        value = {"z": [1, 2, {"y": "x"}], "a": None, "n": 3}
        again = json.loads(canonical_json(value))
        assert canonical_json(again) == canonical_json(value)

    def test_rejects_nan(self):
        with pytest.raises(CanonicalizationError):
            canonical_json({"x": float("nan")})

    def test_rejects_non_string_keys(self):
        with pytest.raises(CanonicalizationError):
            canonical_json({1: "x"})

    def test_rejects_non_ascii_keys(self):
        with pytest.raises(CanonicalizationError):
            canonical_json({"café": 1})
