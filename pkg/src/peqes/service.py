"""Untrusted host process: HTTP API, routing into the trusted core,
static delivery of the participant webapp, and metadata-only logging.

Everything here runs outside the trust boundary; it sees only
ciphertexts, public study material, and analysis outputs. The meta log
records route/latency/status and never any request body bytes.
"""

from __future__ import annotations

import json
import time
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import FileResponse, JSONResponse, Response
from fastapi.staticfiles import StaticFiles

from peqes import crypto
from peqes.canonical import from_hex
from peqes.enclave import HandshakeAborted
from peqes.errors import ProtocolError
from peqes.protocol import TrustedCore

API_VERSION = "1"

# Default wire code when a route's envelope cannot even be parsed.
_ENVELOPE_CODES = {
    "studies": "SPEC_INVALID",
    "attest": "AUTH_INVALID",
    "approval": "SIGNATURE_INVALID",
    "open": "AUTH_INVALID",
    "responses": "RESPONSE_INVALID",
    "complete": "AUTH_INVALID",
    "exchange": "EXCHANGE_INVALID",
    "challenge": "AUTH_INVALID",
}


class MetaLog:
    """Append-only JSON-lines log of connection metadata; no payloads."""

    def __init__(self, path: Path | None):
        self.path = path

    def record(self, route: str, study_id: str | None, latency_ms: float, status: int) -> None:
        if self.path is None:
            return
        entry = {
            "ts": time.time(),
            "route": route,
            "study_id": study_id,
            "latency_ms": round(latency_ms, 3),
            "status": status,
        }
        with open(self.path, "a") as fh:
            fh.write(json.dumps(entry) + "\n")


def _envelope(payload: dict) -> dict:
    return {"version": API_VERSION, "suite_id": crypto.SUITE_ID, **payload}


def _error_response(code: str, detail: str, status: int) -> JSONResponse:
    return JSONResponse(status_code=status, content=_envelope({"error": code, "detail": detail}))


def create_app(core: TrustedCore, webapp_dir: str | Path | None = None, meta_log_path: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="peqes-platform", docs_url=None, redoc_url=None)
    meta_log = MetaLog(Path(meta_log_path) if meta_log_path else None)
    app.state.core = core

    @app.middleware("http")
    async def _meta_logging(request: Request, call_next):
        start = time.perf_counter()
        response = await call_next(request)
        latency_ms = (time.perf_counter() - start) * 1000.0
        study_id = request.path_params.get("study_id") if request.path_params else None
        meta_log.record(request.url.path, study_id, latency_ms, response.status_code)
        return response

    @app.exception_handler(ProtocolError)
    async def _protocol_error(request: Request, exc: ProtocolError):
        return _error_response(exc.code, exc.detail, exc.http_status)

    @app.exception_handler(HandshakeAborted)
    async def _handshake_error(request: Request, exc: HandshakeAborted):
        return _error_response("AUTH_INVALID", str(exc), 400)

    def _route_code(request: Request) -> str:
        segment = request.url.path.rstrip("/").rsplit("/", 1)[-1]
        return _ENVELOPE_CODES.get(segment, "SPEC_INVALID")

    @app.exception_handler(RequestValidationError)
    async def _validation_error(request: Request, exc: RequestValidationError):
        return _error_response(_route_code(request), "malformed request envelope", 400)

    @app.exception_handler(ValueError)
    async def _value_error(request: Request, exc: ValueError):
        return _error_response(_route_code(request), f"malformed field: {exc}", 400)

    @app.exception_handler(crypto.CryptoError)
    async def _crypto_error(request: Request, exc: crypto.CryptoError):
        return _error_response(_route_code(request), f"malformed field: {exc}", 400)

    def _require(payload: dict, key: str, code_route: str):
        value = payload.get(key) if isinstance(payload, dict) else None
        if value is None:
            exc = ProtocolError(f"missing field {key!r}")
            exc.code = _ENVELOPE_CODES[code_route]
            raise exc
        return value

    @app.get("/healthz")
    async def healthz():
        return {"status": "ok"}

    @app.get("/api/measurement")
    async def measurement():
        return _envelope(core.measurement_info())

    @app.post("/api/studies", status_code=201)
    def register(payload: dict):
        spec = _require(payload, "spec", "studies")
        signature = _require(payload, "signature", "studies")
        study_id, study_pk = core.register_study(spec, signature)
        return _envelope({"study_id": study_id, "study_pk": study_pk, "phase": "Registered"})

    @app.get("/api/studies/{study_id}")
    def offer(study_id: str):
        return _envelope(core.get_offer(study_id))

    @app.post("/api/studies/{study_id}/attest")
    def attest(study_id: str, payload: dict):
        challenge = from_hex(str(_require(payload, "challenge", "attest")))
        reply = core.attest(study_id, challenge)
        return _envelope(reply.to_dict())

    @app.post("/api/studies/{study_id}/approval")
    def approval(study_id: str, payload: dict):
        step = _require(payload, "step", "approval")
        if step == "nonce":
            ciphertext = _require(payload, "ciphertext", "approval")
            return _envelope({"ciphertext": core.approval_nonce(study_id, ciphertext)})
        if step == "approve":
            approval_hex = _require(payload, "approval", "approval")
            phase = core.store_approval(study_id, str(approval_hex))
            return _envelope({"phase": phase})
        exc = ProtocolError(f"unknown approval step {step!r}")
        exc.code = "SIGNATURE_INVALID"
        raise exc

    @app.post("/api/studies/{study_id}/challenge")
    def challenge(study_id: str):
        return _envelope({"challenge": core.issue_challenge(study_id)})

    @app.post("/api/studies/{study_id}/open")
    def open_collection(study_id: str, payload: dict):
        phase = core.open_collection(
            study_id,
            str(_require(payload, "challenge", "open")),
            str(_require(payload, "signature", "open")),
        )
        return _envelope({"phase": phase})

    @app.post("/api/studies/{study_id}/exchange")
    def exchange(study_id: str):
        return _envelope(core.begin_exchange(study_id))

    @app.post("/api/studies/{study_id}/responses", status_code=204)
    def responses(study_id: str, payload: dict):
        core.submit_response(study_id, payload)
        return Response(status_code=204)

    @app.post("/api/studies/{study_id}/complete")
    def complete(study_id: str, payload: dict):
        result = core.complete_study(
            study_id,
            str(_require(payload, "challenge", "complete")),
            str(_require(payload, "signature", "complete")),
        )
        return _envelope(result)

    if webapp_dir is not None:
        webapp = Path(webapp_dir)
        if webapp.is_dir():
            index = webapp / "index.html"
            if index.exists():

                @app.get("/")
                async def root():
                    return FileResponse(index)

            app.mount("/app", StaticFiles(directory=webapp), name="webapp")

    return app
