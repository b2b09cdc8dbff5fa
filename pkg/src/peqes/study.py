"""Study design types and the byte-exact payloads that get signed.

A study design is immutable after registration; everything a signature
covers is produced here so the researcher CLI, the trusted core, the
ethics-board CLI, and the browser client agree on the exact bytes.
"""

from __future__ import annotations

from dataclasses import dataclass

from peqes import crypto
from peqes.canonical import canonical_json, to_hex
from peqes.errors import ResponseInvalid, SpecInvalid

ITEM_KINDS = ("choice", "integer", "text")

MAX_TEXT_ANSWER_LEN = 10_000


@dataclass(frozen=True)
class SurveyItem:
    id: str
    prompt: str
    kind: str
    options: tuple[str, ...] = ()
    min_value: int | None = None
    max_value: int | None = None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "prompt": self.prompt,
            "kind": self.kind,
            "options": list(self.options),
            "min": self.min_value,
            "max": self.max_value,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SurveyItem":
        return cls(
            id=str(data.get("id", "")),
            prompt=str(data.get("prompt", "")),
            kind=str(data.get("kind", "")),
            options=tuple(data.get("options") or ()),
            min_value=data.get("min"),
            max_value=data.get("max"),
        )


@dataclass(frozen=True)
class StudySpec:
    name: str
    description: str
    survey: tuple[SurveyItem, ...]
    analysis: str
    researcher_public: bytes
    suite_id: str = crypto.SUITE_ID
    mandate_delete: bool = False
    sign_result: bool = True
    target_n: int | None = None
    auto_close_at: int | None = None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "description": self.description,
            "survey": [item.to_dict() for item in self.survey],
            "analysis": self.analysis,
            "researcher_public": to_hex(self.researcher_public),
            "suite_id": self.suite_id,
            "mandate_delete": self.mandate_delete,
            "sign_result": self.sign_result,
            "target_n": self.target_n,
            "auto_close_at": self.auto_close_at,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "StudySpec":
        if not isinstance(data, dict):
            raise SpecInvalid("spec must be a JSON object")
        try:
            survey = tuple(SurveyItem.from_dict(i) for i in data.get("survey", []))
            spec = cls(
                name=str(data.get("name", "")),
                description=str(data.get("description", "")),
                survey=survey,
                analysis=str(data.get("analysis", "")),
                researcher_public=bytes.fromhex(str(data.get("researcher_public", ""))),
                suite_id=str(data.get("suite_id", "")),
                mandate_delete=bool(data.get("mandate_delete", False)),
                sign_result=bool(data.get("sign_result", True)),
                target_n=data.get("target_n"),
                auto_close_at=data.get("auto_close_at"),
            )
        except (TypeError, ValueError, AttributeError) as exc:
            raise SpecInvalid(f"malformed spec: {exc}") from exc
        return spec

    def canonical_bytes(self) -> bytes:
        return canonical_json(self.to_dict())

    def item(self, item_id: str) -> SurveyItem:
        for it in self.survey:
            if it.id == item_id:
                return it
        raise KeyError(item_id)

    def validate(self) -> None:
        if not self.name:
            raise SpecInvalid("study name is required")
        if self.suite_id != crypto.SUITE_ID:
            raise SpecInvalid(f"unsupported suite_id {self.suite_id!r}")
        if len(self.researcher_public) != crypto.PUBLIC_KEY_LEN:
            raise SpecInvalid("researcher_public has wrong length")
        if not self.survey:
            raise SpecInvalid("survey must contain at least one item")
        seen = set()
        for item in self.survey:
            if not item.id or not item.id.isidentifier():
                raise SpecInvalid(f"item id {item.id!r} must be a plain identifier")
            if item.id in seen:
                raise SpecInvalid(f"duplicate item id {item.id!r}")
            seen.add(item.id)
            if item.kind not in ITEM_KINDS:
                raise SpecInvalid(f"item {item.id}: unknown kind {item.kind!r}")
            if item.kind == "choice":
                if len(item.options) < 2:
                    raise SpecInvalid(f"item {item.id}: choice items need at least 2 options")
                if len(set(item.options)) != len(item.options):
                    raise SpecInvalid(f"item {item.id}: duplicate options")
            if item.kind == "integer":
                if item.min_value is None or item.max_value is None:
                    raise SpecInvalid(f"item {item.id}: integer items need min and max")
                if not isinstance(item.min_value, int) or not isinstance(item.max_value, int):
                    raise SpecInvalid(f"item {item.id}: min/max must be integers")
                if item.min_value > item.max_value:
                    raise SpecInvalid(f"item {item.id}: min exceeds max")
        if not self.analysis.strip():
            raise SpecInvalid("analysis script is empty")
        if self.target_n is not None and (not isinstance(self.target_n, int) or self.target_n < 1):
            raise SpecInvalid("target_n must be a positive integer")
        # integer seconds keep the signed spec free of floats, which the
        # browser-side canonicalizer rejects
        if self.auto_close_at is not None and (
            isinstance(self.auto_close_at, bool) or not isinstance(self.auto_close_at, int)
        ):
            raise SpecInvalid("auto_close_at must be integer unix seconds")


def validate_answers(spec: StudySpec, answers: dict) -> None:
    """Reject any answer vector not matching the survey schema."""
    if not isinstance(answers, dict):
        raise ResponseInvalid("answers must be an object")
    expected_ids = {item.id for item in spec.survey}
    got_ids = set(answers)
    if got_ids != expected_ids:
        missing = sorted(expected_ids - got_ids)
        extra = sorted(got_ids - expected_ids)
        raise ResponseInvalid(f"answer ids mismatch (missing={missing}, extra={extra})")
    for item in spec.survey:
        value = answers[item.id]
        if item.kind == "integer":
            if not isinstance(value, int) or isinstance(value, bool):
                raise ResponseInvalid(f"item {item.id}: expected an integer")
            if not (item.min_value <= value <= item.max_value):
                raise ResponseInvalid(
                    f"item {item.id}: {value} outside [{item.min_value}, {item.max_value}]"
                )
        elif item.kind == "choice":
            if not isinstance(value, str) or value not in item.options:
                raise ResponseInvalid(f"item {item.id}: not one of the listed options")
        else:  # text
            if not isinstance(value, str):
                raise ResponseInvalid(f"item {item.id}: expected text")
            if len(value) > MAX_TEXT_ANSWER_LEN:
                raise ResponseInvalid(f"item {item.id}: text too long")


# -- signed payloads ---------------------------------------------------------
# Each helper returns the exact bytes a signature covers. The browser client
# mirrors these constructions; change nothing here without versioning the suite.


def approval_payload(spec_dict: dict, study_public_hex: str) -> bytes:
    """What the ethics board signs: the study design bound to its key."""
    return canonical_json({"spec": spec_dict, "study_pk": study_public_hex})


def exchange_payload(exchange_id: str, enclave_kx_public_hex: str) -> bytes:
    """What the study key signs per participation exchange."""
    return canonical_json({"exchange_id": exchange_id, "g_e_pk": enclave_kx_public_hex})


def auth_payload(study_id: str, action: str, challenge_hex: str) -> bytes:
    """What the researcher key signs to open or complete a study."""
    return canonical_json({"action": action, "challenge": challenge_hex, "study_id": study_id})


def answers_payload(answers: dict) -> bytes:
    """Canonical bytes of one answer vector (the AEAD plaintext)."""
    return canonical_json({"answers": answers})


def result_payload(outputs: dict) -> bytes:
    """What the study key signs over the analysis outputs."""
    return canonical_json({"outputs": outputs})
