import contextlib
import os
import random
import socket
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import pytest

from peqes import crypto
from peqes.bfi10 import bfi10_spec
from peqes.canonical import from_hex, to_hex
from peqes.enclave import (
    AttestationVerifier,
    Measurement,
    SimBackendConfig,
    SimEnclave,
    measure,
)
from peqes.loadgen import random_answers
from peqes.protocol import AAD_APPROVAL_NONCE, AAD_APPROVAL_SIG, TrustedCore
from peqes.study import (
    StudySpec,
    answers_payload,
    approval_payload,
    auth_payload,
)

ARTIFACT = b"peqes-trusted-core-test-artifact"


@dataclass
class Env:
    measurement: Measurement
    enclave: SimEnclave
    board: crypto.SigningKeyPair
    researcher: crypto.SigningKeyPair
    data_dir: Path

    def make_core(self, **kwargs) -> TrustedCore:
        kwargs.setdefault("board_public", self.board.public)
        return TrustedCore(self.enclave, self.data_dir, **kwargs)


@pytest.fixture
def env(tmp_path) -> Env:
    measurement = measure(ARTIFACT)
    return Env(
        measurement=measurement,
        enclave=SimEnclave(SimBackendConfig.generate(measurement)),
        board=crypto.generate_signing_keypair(),
        researcher=crypto.generate_signing_keypair(),
        data_dir=tmp_path / "data",
    )


@pytest.fixture
def core(env) -> TrustedCore:
    return env.make_core()


def register(core: TrustedCore, env: Env, spec: StudySpec | None = None):
    spec = spec or bfi10_spec(env.researcher.public)
    sig = crypto.sign(env.researcher.secret, spec.canonical_bytes())
    study_id, s_pk = core.register_study(spec.to_dict(), sig.hex())
    return study_id, s_pk, spec


def approve(core: TrustedCore, env: Env, study_id: str, s_pk: str, spec: StudySpec):
    """Board-side approval driver against an in-process core."""
    verifier = AttestationVerifier(env.enclave.manufacturer_public, env.measurement)
    smk = verifier.complete(core.attest(study_id, verifier.new_challenge()))
    nonce = os.urandom(32)
    seq = crypto.NonceSequence(start=0, step=2)
    nonce_ct = crypto.aead_encrypt(smk, seq.next(), nonce, AAD_APPROVAL_NONCE)
    reply = core.approval_nonce(study_id, nonce_ct.to_dict())
    proof = crypto.aead_decrypt(smk, crypto.Ciphertext.from_dict(reply), AAD_APPROVAL_SIG)
    assert crypto.verify(from_hex(s_pk), proof, nonce)
    approval = crypto.sign(env.board.secret, approval_payload(spec.to_dict(), s_pk))
    core.store_approval(study_id, approval.hex())


def researcher_auth(core: TrustedCore, env: Env, study_id: str, action: str):
    challenge = core.issue_challenge(study_id)
    sig = crypto.sign(env.researcher.secret, auth_payload(study_id, action, challenge))
    return challenge, sig.hex()


def open_collection(core: TrustedCore, env: Env, study_id: str):
    challenge, sig = researcher_auth(core, env, study_id, "open")
    core.open_collection(study_id, challenge, sig)


def encrypt_response(core: TrustedCore, study_id: str, s_pk: str, answers: dict) -> dict:
    """Participant-side encryption against a fresh exchange."""
    exchange = core.begin_exchange(study_id)
    kx = crypto.generate_kx_keypair()
    shared = crypto.agree(kx.secret, from_hex(exchange["g_e_pk"]))
    ek = crypto.derive_key(shared, crypto.LABEL_EK, exchange["exchange_id"].encode("ascii"))
    ct = crypto.aead_encrypt(
        ek, crypto.counter_nonce(0), answers_payload(answers), exchange["exchange_id"].encode("ascii")
    )
    return {
        "exchange_id": exchange["exchange_id"],
        "g_p_pk": to_hex(kx.public),
        "ciphertext": ct.to_dict(),
    }


def submit(core: TrustedCore, study_id: str, s_pk: str, answers: dict) -> None:
    core.submit_response(study_id, encrypt_response(core, study_id, s_pk, answers))


def collect(core: TrustedCore, env: Env, study_id: str, s_pk: str, spec: StudySpec, n: int, seed: int = 1):
    rng = random.Random(seed)
    rows = []
    for _ in range(n):
        answers = random_answers(spec, rng)
        submit(core, study_id, s_pk, answers)
        rows.append(answers)
    return rows


def complete(core: TrustedCore, env: Env, study_id: str) -> dict:
    challenge, sig = researcher_auth(core, env, study_id, "complete")
    return core.complete_study(study_id, challenge, sig)


def free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


@contextlib.contextmanager
def live_server(core: TrustedCore, meta_log_path=None, webapp_dir=None):
    """Real uvicorn server on loopback, for CLI and latency tests."""
    import uvicorn

    from peqes.service import create_app

    app = create_app(core, webapp_dir=webapp_dir, meta_log_path=meta_log_path)
    port = free_port()
    config = uvicorn.Config(app, host="127.0.0.1", port=port, log_level="error", access_log=False)
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.time() + 10
    while not server.started:
        if time.time() > deadline:
            raise RuntimeError("server failed to start")
        time.sleep(0.01)
    try:
        yield f"http://127.0.0.1:{port}"
    finally:
        server.should_exit = True
        thread.join(timeout=5)
