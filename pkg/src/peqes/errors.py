"""Protocol error taxonomy; every API error maps to one of these codes."""

from __future__ import annotations


class ProtocolError(Exception):
    code = "PROTOCOL_ERROR"
    http_status = 400

    def __init__(self, detail: str = ""):
        super().__init__(detail or self.code)
        self.detail = detail


class SignatureInvalid(ProtocolError):
    code = "SIGNATURE_INVALID"


class SpecInvalid(ProtocolError):
    code = "SPEC_INVALID"


class ScriptInvalid(ProtocolError):
    code = "SCRIPT_INVALID"

    def __init__(self, problems):
        # problems: list of (line, message)
        self.problems = list(problems)
        detail = "; ".join(f"line {line}: {msg}" for line, msg in self.problems)
        super().__init__(detail)


class PhaseError(ProtocolError):
    code = "PHASE_ERROR"
    http_status = 409


class ExchangeInvalid(ProtocolError):
    code = "EXCHANGE_INVALID"


class DecryptFailed(ProtocolError):
    code = "DECRYPT_FAILED"


class ResponseInvalid(ProtocolError):
    code = "RESPONSE_INVALID"


class AuthInvalid(ProtocolError):
    code = "AUTH_INVALID"
    http_status = 401


class AlreadyCompleted(ProtocolError):
    code = "ALREADY_COMPLETED"
    http_status = 409


class AnalysisFailed(ProtocolError):
    code = "ANALYSIS_FAILED"
    http_status = 422


class RollbackDetected(ProtocolError):
    code = "ROLLBACK_DETECTED"
    http_status = 409


class TamperDetected(ProtocolError):
    # surfaced as ROLLBACK_DETECTED on the wire; distinct internally
    code = "ROLLBACK_DETECTED"
    http_status = 409


class StateCorrupt(ProtocolError):
    code = "STATE_CORRUPT"
    http_status = 500


class StoreError(ProtocolError):
    code = "STORE_ERROR"
    http_status = 500


class NotFound(ProtocolError):
    code = "NOT_FOUND"
    http_status = 404
