"""
RemoteChannel - the only path to a REMOTE-role backend.

render payload -> serialize -> scan against the sample corpus -> audit ->
send (or refuse). The digest in the audit entry is of the exact bytes sent.
"""

import logging
from typing import Optional, Set

from src.base.errors import BackendError, ConfigError, PrivacyViolation
from src.base.jsonl import canonical_json, digest
from src.gateway.llm_gateway import ChatResponse, LLMBackend, RemoteRequest, Role, Stage
from src.privacy.audit import AuditWriter, Direction
from src.privacy.payload import RemotePayload, scan_outbound

logger = logging.getLogger(__name__)


class RemoteChannel:
    def __init__(self, backend: LLMBackend, audit: Optional[AuditWriter] = None):
        if backend.role is not Role.REMOTE:
            raise ConfigError(f"remote channel needs a REMOTE-role backend, got {backend.role.value}")
        self.backend = backend
        self.audit = audit or AuditWriter()

    def send(self, payload: RemotePayload, corpus: Set[str], stage: Stage = Stage.ADVISORY) -> ChatResponse:
        messages = payload.to_messages()
        body = canonical_json(messages).encode("utf-8")
        payload_digest = digest(body)
        scan = scan_outbound(body, corpus)

        if not scan.clean:
            self.audit.record(Direction.TO_REMOTE, stage.value, payload_digest, scan, error="refused")
            raise PrivacyViolation(scan.detail or "outbound scan violation")

        request = RemoteRequest(messages=messages, stage=stage, payload_digest=payload_digest)
        try:
            response = self.backend.complete(request)
        except BackendError as e:
            self.audit.record(Direction.TO_REMOTE, stage.value, payload_digest, scan, error=str(e))
            raise
        self.audit.record(Direction.TO_REMOTE, stage.value, payload_digest, scan,
                          response_digest=digest(response.text))
        return response
