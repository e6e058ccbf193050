"""
LLM Gateway - Supports multiple backends (scripted/seeded mock, chat-completion HTTP)

Isolate API keys to the gateway only!
Stages never see credentials; they hand a ChatRequest to a backend and get
text plus usage back. REMOTE-role backends only accept RemoteRequest bodies,
which the privacy channel is the only caller to build.
"""

import hashlib
import json
import logging
import threading
import time
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, List, Optional, Union

import requests
from pydantic import BaseModel, ConfigDict, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from src.base.errors import BackendError, ConfigError
from src.base.jsonl import JsonlWriter, digest

logger = logging.getLogger(__name__)


class BackendKind(str, Enum):
    MOCK = "MOCK"
    HTTP = "HTTP"


class Role(str, Enum):
    LOCAL = "LOCAL"
    REMOTE = "REMOTE"


class Stage(str, Enum):
    ACQUISITION = "acquisition"
    ADVISORY = "advisory"
    DECISION = "decision"
    BASELINE = "baseline"
    AUTHOR = "author"


class GatewaySettings(BaseSettings):
    """Credentials and transport knobs, read from the environment only."""
    model_config = SettingsConfigDict(env_prefix="CARE_", extra="ignore")

    api_key: str = ""
    remote_api_key: str = ""
    http_timeout: float = 120.0
    retries: int = 3
    backoff_seconds: float = 1.0
    max_in_flight: int = 4


class BackendSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: BackendKind
    role: Role = Role.LOCAL
    url: Optional[str] = None
    model: Optional[str] = None
    script: Optional[str] = None
    seed: Optional[int] = None

    @classmethod
    def parse(cls, text: str, role: Role = Role.LOCAL, seed: Optional[int] = None) -> "BackendSpec":
        """`mock:` (seeded), `mock:<seed>`, `mock:<script.json>`, or `http:<url>#<model>`."""
        if not isinstance(text, str) or ":" not in text:
            raise ConfigError(f"invalid backend spec {text!r}: expected mock:<script|seed> or http:<url>#<model>")
        scheme, _, rest = text.partition(":")
        scheme = scheme.lower()
        if scheme == "mock":
            if rest.isdigit():
                return cls(kind=BackendKind.MOCK, role=role, seed=int(rest))
            return cls(kind=BackendKind.MOCK, role=role, script=rest or None, seed=seed)
        if scheme == "http":
            url, _, model = rest.partition("#")
            if not url or not model:
                raise ConfigError(f"invalid http backend spec {text!r}: expected http:<url>#<model>")
            if not url.startswith(("http://", "https://")):
                url = "http://" + url.lstrip("/")
            return cls(kind=BackendKind.HTTP, role=role, url=url, model=model)
        raise ConfigError(f"unknown backend kind {scheme!r} in {text!r}")

    @property
    def backend_id(self) -> str:
        if self.kind is BackendKind.HTTP:
            return str(self.model)
        if self.script:
            return f"mock:{Path(self.script).name}"
        return "mock:seeded"


class Usage(BaseModel):
    prompt_tokens: int = 0
    completion_tokens: int = 0
    estimated: bool = False

    @property
    def total(self) -> int:
        return self.prompt_tokens + self.completion_tokens

    def __add__(self, other: "Usage") -> "Usage":
        return Usage(
            prompt_tokens=self.prompt_tokens + other.prompt_tokens,
            completion_tokens=self.completion_tokens + other.completion_tokens,
            estimated=self.estimated or other.estimated,
        )


class ChatRequest(BaseModel):
    model_config = ConfigDict(frozen=True)

    messages: List[Dict[str, str]]
    stage: Stage
    sample_id: Optional[str] = None
    round: int = 0
    agent_id: Optional[str] = None

    @property
    def prompt_text(self) -> str:
        return "\n".join(m.get("content", "") for m in self.messages)


class RemoteRequest(ChatRequest):
    """A request body derived from a RemotePayload. Carries no sample identity."""

    payload_digest: str

    @model_validator(mode="after")
    def _anonymous(self) -> "RemoteRequest":
        if self.sample_id is not None:
            raise ValueError("remote requests must not carry a sample id")
        return self


class ChatResponse(BaseModel):
    text: str
    usage: Usage


def count_tokens(text: str) -> int:
    return len(text.split())


def _usage_for(request: ChatRequest, text: str, estimated: bool = False) -> Usage:
    return Usage(prompt_tokens=count_tokens(request.prompt_text), completion_tokens=count_tokens(text),
                 estimated=estimated)


class WireLog:
    """Request/response log. LOCAL message bodies are replaced by their digest."""

    def __init__(self, path: Path):
        self.writer = JsonlWriter(path)

    def record(self, spec: BackendSpec, request: ChatRequest, response: Optional[ChatResponse],
               error: Optional[str] = None) -> None:
        redact = spec.role is Role.LOCAL
        messages = [
            {"role": m.get("role"), "content": f"[redacted sha256={digest(m.get('content', ''))[:16]}]" if redact
             else m.get("content")}
            for m in request.messages
        ]
        row = {
            "backend": spec.backend_id,
            "role": spec.role.value,
            "stage": request.stage.value,
            "sample_id": request.sample_id,
            "round": request.round,
            "agent_id": request.agent_id,
            "messages": messages,
        }
        if response is not None:
            row["response"] = f"[redacted sha256={digest(response.text)[:16]}]" if redact else response.text
            row["usage"] = response.usage.model_dump()
        if error:
            row["error"] = error
        self.writer.append(row)


class LLMBackend:
    """Base class: role checks and wire logging around `_complete`."""

    def __init__(self, spec: BackendSpec, wire_log: Optional[WireLog] = None):
        self.spec = spec
        self.wire_log = wire_log

    @property
    def backend_id(self) -> str:
        return self.spec.backend_id

    @property
    def role(self) -> Role:
        return self.spec.role

    def complete(self, request: ChatRequest) -> ChatResponse:
        if self.spec.role is Role.REMOTE and not isinstance(request, RemoteRequest):
            raise BackendError("REMOTE backend refuses a request that did not come through the privacy channel")
        try:
            response = self._complete(request)
        except BackendError as e:
            if self.wire_log:
                self.wire_log.record(self.spec, request, None, error=str(e))
            raise
        if self.wire_log:
            self.wire_log.record(self.spec, request, response)
        return response

    def _complete(self, request: ChatRequest) -> ChatResponse:
        raise NotImplementedError


Responder = Callable[[ChatRequest], str]


class ScriptedBackend(LLMBackend):
    """
    Replays canned responses.

    Script keys are `sample/stage/round/agent` with shorter and wildcard forms
    (`*` for the sample) tried in order. A list value is consumed one entry per
    call and its last entry repeats. A callable responder may be given instead.
    Every request is kept in `requests` for prompt inspection.
    """

    def __init__(self, spec: BackendSpec, script: Union[Dict[str, Union[str, List[str]]], Responder],
                 wire_log: Optional[WireLog] = None):
        super().__init__(spec, wire_log)
        self._responder = script if callable(script) else None
        self._script = {} if callable(script) else dict(script)
        self._cursor: Dict[str, int] = {}
        self._lock = threading.Lock()
        self.requests: List[ChatRequest] = []

    @classmethod
    def from_file(cls, spec: BackendSpec, wire_log: Optional[WireLog] = None) -> "ScriptedBackend":
        path = Path(spec.script)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError as e:
            raise ConfigError(f"mock script not found: {path}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"mock script {path} is not valid JSON: {e.msg}") from e
        script = doc.get("responses", doc) if isinstance(doc, dict) else None
        if not script:
            raise ConfigError(f"mock script {path} is empty")
        return cls(spec, script, wire_log)

    @staticmethod
    def lookup_keys(request: ChatRequest) -> List[str]:
        stage = request.stage.value
        keys = []
        for sid in ([request.sample_id] if request.sample_id else []) + ["*"]:
            if request.agent_id:
                keys.append(f"{sid}/{stage}/{request.round}/{request.agent_id}")
                keys.append(f"{sid}/{stage}/*/{request.agent_id}")
            keys.append(f"{sid}/{stage}/{request.round}")
            keys.append(f"{sid}/{stage}")
        return keys

    def _complete(self, request: ChatRequest) -> ChatResponse:
        with self._lock:
            self.requests.append(request)
            if self._responder is not None:
                text = self._responder(request)
            else:
                text = self._next_scripted(request)
        return ChatResponse(text=text, usage=_usage_for(request, text))

    def _next_scripted(self, request: ChatRequest) -> str:
        for key in self.lookup_keys(request):
            if key not in self._script:
                continue
            value = self._script[key]
            if isinstance(value, list):
                idx = self._cursor.get(key, 0)
                self._cursor[key] = idx + 1
                return value[min(idx, len(value) - 1)]
            return value
        raise BackendError(f"mock script has no response for {self.lookup_keys(request)[0]}")


# Templates for the seeded mock. Chosen by digest, so a given request always
# gets the same reply without the mock ever reading patient values.
_SEEDED_KEY_SETS = [
    [],
    ["lactate_latest_6h", "urine_output_mlkghr_6h"],
    ["map_median_last1h", "lactate_latest_6h", "urine_output_mlkghr_6h", "norepi_eq_dose_max_1h"],
    ["norepi_eq_dose_max_1h", "sofa_renal", "spo2_latest_1h"],
    ["wbc_latest_24h", "temperature_latest_4h", "rhythm_recent_6h"],
]
_SEEDED_CANDIDATES = [
    [],
    ["LIKELY_STABLE"],
    ["POTENTIAL_OCCULT_SHOCK", "LIKELY_WORSENING"],
    ["VERY_LIKELY_WORSENING", "LIKELY_WORSENING", "POTENTIAL_OCCULT_SHOCK", "LIKELY_STABLE"],
    ["VERY_LIKELY_STABLE"],
]
_SEEDED_ACTIONS = ["OBSERVE", "TREAT_S", "INVESTIGATE_O"]


class SeededMockBackend(LLMBackend):
    """Deterministic template replies keyed by a digest of (seed, request identity)."""

    def __init__(self, spec: BackendSpec, wire_log: Optional[WireLog] = None):
        super().__init__(spec, wire_log)
        self.seed = spec.seed or 0

    def _roll(self, request: ChatRequest) -> int:
        if isinstance(request, RemoteRequest):
            identity = f"{self.seed}|{request.stage.value}|{request.payload_digest}"
        else:
            identity = f"{self.seed}|{request.sample_id}|{request.stage.value}|{request.round}|{request.agent_id}"
        return int(hashlib.sha256(identity.encode("utf-8")).hexdigest()[:16], 16)

    def _complete(self, request: ChatRequest) -> ChatResponse:
        roll = self._roll(request)
        stage = request.stage
        if stage is Stage.ACQUISITION:
            keys = _SEEDED_KEY_SETS[roll % len(_SEEDED_KEY_SETS)] if request.round == 0 else []
            body = {"need_data": bool(keys), "facts_keys": keys,
                    "reasoning": "Cross-domain evidence requested." if keys else "Snapshot is sufficient."}
        elif stage is Stage.ADVISORY:
            body = {"transition_candidates": _SEEDED_CANDIDATES[roll % len(_SEEDED_CANDIDATES)],
                    "transition_guidance": "Escalate only on converging objective evidence.",
                    "transition_reasoning": "Candidate transitions from the current category."}
        elif stage is Stage.DECISION:
            body = {"differential_diagnosis": "Seeded mock decision.",
                    "final_action": _SEEDED_ACTIONS[roll % len(_SEEDED_ACTIONS)]}
        elif stage is Stage.BASELINE:
            body = {"reasoning": "Seeded mock turn.", "final_action": _SEEDED_ACTIONS[roll % len(_SEEDED_ACTIONS)],
                    "confidence": 50 + (roll >> 8) % 50}
        else:
            body = {"rubric_schema": []}
        text = json.dumps(body, sort_keys=True)
        return ChatResponse(text=text, usage=_usage_for(request, text))


class HttpBackend(LLMBackend):
    """Minimal chat-completion client: POST {model, messages, temperature} to <url>."""

    def __init__(self, spec: BackendSpec, settings: Optional[GatewaySettings] = None,
                 temperature: float = 0.0, wire_log: Optional[WireLog] = None):
        super().__init__(spec, wire_log)
        self.settings = settings or GatewaySettings()
        self.temperature = temperature
        self._slots = threading.BoundedSemaphore(max(1, self.settings.max_in_flight))
        self.session = requests.Session()

    @property
    def endpoint(self) -> str:
        url = self.spec.url.rstrip("/")
        if url.endswith("/chat/completions"):
            return url
        return f"{url}/v1/chat/completions" if not url.endswith("/v1") else f"{url}/chat/completions"

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        key = self.settings.remote_api_key if self.spec.role is Role.REMOTE else self.settings.api_key
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _complete(self, request: ChatRequest) -> ChatResponse:
        body = {"model": self.spec.model, "messages": request.messages, "temperature": self.temperature}
        last_error = "no attempt made"
        attempts = max(1, self.settings.retries + 1)
        with self._slots:
            for attempt in range(attempts):
                try:
                    response = self.session.post(self.endpoint, json=body, headers=self._headers(),
                                                 timeout=self.settings.http_timeout)
                    if response.status_code == 200:
                        return self._decode(request, response.json())
                    last_error = f"HTTP {response.status_code}: {response.text[:200]}"
                except (requests.RequestException, ValueError, KeyError, IndexError, TypeError) as e:
                    last_error = f"{type(e).__name__}: {e}"

                if attempt < attempts - 1:
                    wait = self.settings.backoff_seconds * (2 ** attempt)
                    logger.warning(f"⚠️ {self.backend_id} call failed ({last_error}), retrying in {wait:.1f}s")
                    time.sleep(wait)

        raise BackendError(f"{self.backend_id}: giving up after {attempts} attempts ({last_error})")

    def _decode(self, request: ChatRequest, payload: dict) -> ChatResponse:
        text = payload["choices"][0]["message"]["content"]
        if not isinstance(text, str):
            raise ValueError("response content is not text")
        usage = payload.get("usage") or {}
        if "prompt_tokens" in usage and "completion_tokens" in usage:
            return ChatResponse(text=text, usage=Usage(prompt_tokens=int(usage["prompt_tokens"]),
                                                       completion_tokens=int(usage["completion_tokens"])))
        return ChatResponse(text=text, usage=_usage_for(request, text, estimated=True))


def create_backend(spec: Union[str, BackendSpec], role: Role = Role.LOCAL, seed: Optional[int] = None,
                   settings: Optional[GatewaySettings] = None, temperature: float = 0.0,
                   wire_log: Optional[WireLog] = None) -> LLMBackend:
    if isinstance(spec, str):
        spec = BackendSpec.parse(spec, role=role, seed=seed)
    if spec.kind is BackendKind.HTTP:
        return HttpBackend(spec, settings=settings, temperature=temperature, wire_log=wire_log)
    if spec.script:
        return ScriptedBackend.from_file(spec, wire_log=wire_log)
    return SeededMockBackend(spec, wire_log=wire_log)
