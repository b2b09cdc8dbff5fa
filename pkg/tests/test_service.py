import json
import random

import pytest
from fastapi.testclient import TestClient

from peqes import crypto
from peqes.bfi10 import bfi10_spec
from peqes.canonical import to_hex
from peqes.clients import (
    AttestationFailed,
    BoardClient,
    ClientError,
    ParticipantClient,
    ResearcherClient,
    TrustAnchor,
)
from peqes.enclave import measure
from peqes.loadgen import random_answers
from peqes.service import create_app
from tests.conftest import Env

API_ERROR_CODES = {
    "SIGNATURE_INVALID",
    "SPEC_INVALID",
    "SCRIPT_INVALID",
    "PHASE_ERROR",
    "EXCHANGE_INVALID",
    "DECRYPT_FAILED",
    "RESPONSE_INVALID",
    "AUTH_INVALID",
    "ALREADY_COMPLETED",
    "ROLLBACK_DETECTED",
    # engineering additions beyond the protocol taxonomy
    "ANALYSIS_FAILED",
    "NOT_FOUND",
}


@pytest.fixture
def stack(env: Env, tmp_path):
    core = env.make_core()
    app = create_app(core, meta_log_path=tmp_path / "meta.log")
    http = TestClient(app, raise_server_exceptions=False)
    researcher = ResearcherClient("http://testserver", env.researcher, client=http)
    board = BoardClient(
        "http://testserver",
        env.board,
        TrustAnchor(env.measurement, env.enclave.manufacturer_public),
        client=http,
    )
    participant = ParticipantClient("http://testserver", board_public=env.board.public, client=http)
    return core, http, researcher, board, participant, tmp_path / "meta.log"


def drive_to_collecting(env, researcher, board, spec=None):
    spec = spec or bfi10_spec(env.researcher.public)
    registered = researcher.register(spec)
    study_id = registered["study_id"]
    board.approve(study_id)
    researcher.open(study_id)
    return study_id, spec


class TestHappyPath:
    def test_full_lifecycle_over_http(self, env, stack):
        core, http, researcher, board, participant, _ = stack
        spec = bfi10_spec(env.researcher.public)

        registered = researcher.register(spec)
        assert set(registered) >= {"study_id", "study_pk", "phase"}
        study_id = registered["study_id"]

        offer = participant.fetch_offer(study_id)
        assert offer["phase"] == "Registered"
        assert offer["approval"] is None

        approved = board.approve(study_id)
        assert approved["phase"] == "Approved"

        researcher.open(study_id)
        rng = random.Random(5)
        for _ in range(80):
            receipt = participant.participate(study_id, random_answers(spec, rng))
            assert receipt["exchange_id"]

        result = researcher.complete(study_id)
        assert len(result["outputs"]) == 15
        assert result["phase"] == "Completed"

    def test_get_study_before_approval(self, env, stack):
        core, http, researcher, *_ = stack
        registered = researcher.register(bfi10_spec(env.researcher.public))
        body = http.get(f"/api/studies/{registered['study_id']}").json()
        assert body["phase"] == "Registered"
        assert body["approval"] is None
        assert body["suite_id"] == crypto.SUITE_ID

    def test_responses_after_complete_conflict(self, env, stack):
        core, http, researcher, board, participant, _ = stack
        study_id, spec = drive_to_collecting(env, researcher, board)
        rng = random.Random(5)
        answers = [random_answers(spec, rng) for _ in range(60)]
        for row in answers[:-1]:
            participant.participate(study_id, row)
        researcher.complete(study_id)
        with pytest.raises(ClientError) as err:
            participant.participate(study_id, answers[-1])
        assert err.value.code == "PHASE_ERROR"
        reply = http.post(f"/api/studies/{study_id}/exchange")
        assert reply.status_code == 409

    def test_healthz_and_measurement(self, stack, env):
        _, http, *_ = stack
        assert http.get("/healthz").json() == {"status": "ok"}
        info = http.get("/api/measurement").json()
        assert info["measurement"] == env.measurement.hex()
        assert info["backend"] == "sim"
        assert info["backend_root_pk"] == to_hex(env.enclave.manufacturer_public)


class TestAttestationGate:
    def test_board_against_wrong_measurement_aborts_before_nonce(self, env, stack):
        core, http, researcher, _, _, meta_log = stack
        registered = researcher.register(bfi10_spec(env.researcher.public))
        study_id = registered["study_id"]

        bad_board = BoardClient(
            "http://testserver",
            env.board,
            TrustAnchor(measure(b"tampered-artifact"), env.enclave.manufacturer_public),
            client=http,
        )
        with pytest.raises(AttestationFailed):
            bad_board.approve(study_id)
        # abort happened before the nonce step: study still Registered and
        # no approval round-trip appears in the meta log
        assert core.get_offer(study_id)["phase"] == "Registered"
        routes = [json.loads(line)["route"] for line in meta_log.read_text().splitlines()]
        assert not any(route.endswith("/approval") for route in routes)


class TestErrorTaxonomy:
    def test_all_errors_enumerated_under_fuzz(self, env, stack):
        core, http, researcher, board, participant, _ = stack
        study_id, spec = drive_to_collecting(env, researcher, board)

        rng = random.Random(99)
        paths = [
            "/api/studies",
            f"/api/studies/{study_id}/attest",
            f"/api/studies/{study_id}/approval",
            f"/api/studies/{study_id}/open",
            f"/api/studies/{study_id}/exchange",
            f"/api/studies/{study_id}/responses",
            f"/api/studies/{study_id}/complete",
            f"/api/studies/{study_id}/challenge",
            "/api/studies/ffffffffffffffff/responses",
        ]
        bodies = [
            None,
            {},
            {"spec": 5},
            {"spec": {}, "signature": "zz"},
            {"challenge": "not-hex"},
            {"step": "nonce", "ciphertext": {}},
            {"step": "wat"},
            {"exchange_id": "x", "g_p_pk": "00", "ciphertext": {"nonce": "", "body": "", "tag": ""}},
            {"challenge": "00", "signature": "00"},
            {"exchange_id": 3, "g_p_pk": None, "ciphertext": "nope"},
            "just a string",
            [1, 2, 3],
        ]
        for path in paths:
            for body in bodies:
                if body is None:
                    response = http.post(path, content=b"{not json", headers={"content-type": "application/json"})
                else:
                    response = http.post(path, json=body)
                if response.status_code >= 400:
                    payload = response.json()
                    assert payload.get("error") in API_ERROR_CODES, (
                        f"{path} {body!r} -> {response.status_code} {payload}"
                    )

    def test_unknown_study_is_not_found(self, stack):
        _, http, *_ = stack
        response = http.get("/api/studies/deadbeef")
        assert response.status_code == 404
        assert response.json()["error"] == "NOT_FOUND"

    def test_specific_code_mapping(self, env, stack):
        core, http, researcher, board, participant, _ = stack
        spec = bfi10_spec(env.researcher.public)
        sig = "00" * 64
        reply = http.post("/api/studies", json={"spec": spec.to_dict(), "signature": sig})
        assert reply.status_code == 400
        assert reply.json()["error"] == "SIGNATURE_INVALID"


class TestRestartDurability:
    def test_kill_and_restart_preserves_completion(self, env, tmp_path):
        core1 = env.make_core()
        app1 = create_app(core1)
        http1 = TestClient(app1)
        researcher = ResearcherClient("http://testserver", env.researcher, client=http1)
        board = BoardClient(
            "http://testserver",
            env.board,
            TrustAnchor(env.measurement, env.enclave.manufacturer_public),
            client=http1,
        )
        participant = ParticipantClient("http://testserver", env.board.public, client=http1)
        study_id, spec = drive_to_collecting(env, researcher, board)
        rng = random.Random(17)
        for _ in range(40):
            participant.participate(study_id, random_answers(spec, rng))

        # "kill" the process: build a new core + app over the same data dir
        core2 = env.make_core()
        http2 = TestClient(create_app(core2))
        researcher2 = ResearcherClient("http://testserver", env.researcher, client=http2)
        result = researcher2.complete(study_id)
        assert len(result["outputs"]) == 15

    def test_restart_with_tampered_store_rolls_back(self, env):
        core1 = env.make_core()
        http1 = TestClient(create_app(core1))
        researcher = ResearcherClient("http://testserver", env.researcher, client=http1)
        board = BoardClient(
            "http://testserver",
            env.board,
            TrustAnchor(env.measurement, env.enclave.manufacturer_public),
            client=http1,
        )
        participant = ParticipantClient("http://testserver", env.board.public, client=http1)
        study_id, spec = drive_to_collecting(env, researcher, board)
        rng = random.Random(17)
        for _ in range(10):
            participant.participate(study_id, random_answers(spec, rng))

        store_path = env.data_dir / "studies" / study_id / "store.bin"
        blob = bytearray(store_path.read_bytes())
        blob[-2] ^= 0x08
        store_path.write_bytes(bytes(blob))

        core2 = env.make_core()
        http2 = TestClient(create_app(core2), raise_server_exceptions=False)
        researcher2 = ResearcherClient("http://testserver", env.researcher, client=http2)
        with pytest.raises(ClientError) as err:
            researcher2.complete(study_id)
        assert err.value.code == "ROLLBACK_DETECTED"


class TestMetaLog:
    def test_meta_log_has_no_payload_bytes(self, env, stack):
        core, http, researcher, board, participant, meta_log = stack
        sentinel = "SENTINEL-metalog-check"
        study_id, spec = drive_to_collecting(env, researcher, board)
        answers = random_answers(spec, random.Random(1))
        answers["occupation"] = sentinel
        participant.participate(study_id, answers)

        content = meta_log.read_text()
        assert sentinel not in content
        for line in content.splitlines():
            entry = json.loads(line)
            assert set(entry) == {"ts", "route", "study_id", "latency_ms", "status"}
