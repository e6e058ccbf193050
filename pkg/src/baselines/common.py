"""
Shared pieces of the comparison workflows: agent turns, the baseline trace,
one-call-with-repair, and the binary majority vote.
"""

import hashlib
import logging
from collections import Counter
from typing import List, Optional, Sequence

from pydantic import BaseModel, Field

from src.base.domain import Action, Prediction
from src.base.errors import BackendError, ParseError
from src.engine.prompts import BASELINE_SYSTEM
from src.engine.trace import CallRecord, TraceBase
from src.gateway.llm_gateway import ChatRequest, LLMBackend, Stage
from src.gateway.parsing import BaselineTurnOutput, ExpectedSchema, format_reminder, parse_stage_output

logger = logging.getLogger(__name__)

AGENT_IDS = ("A", "B", "C")
INVALID = "INVALID"


class AgentTurn(BaseModel):
    agent_id: Optional[str] = None
    round: int = 0
    reasoning: str = ""
    action: str = INVALID
    confidence: Optional[int] = None

    @property
    def valid(self) -> bool:
        return self.action != INVALID

    @property
    def prediction(self) -> Prediction:
        if not self.valid:
            return Prediction.INVALID
        return Action(self.action).to_prediction()

    def render(self) -> str:
        head = f"[Agent {self.agent_id} | round {self.round}]"
        if not self.valid:
            return f"{head} no valid answer"
        conf = f" confidence={self.confidence}" if self.confidence is not None else ""
        return f"{head} action={self.action}{conf}\nreasoning: {self.reasoning}"


class BaselineTrace(TraceBase):
    turns: List[AgentTurn] = Field(default_factory=list)
    winner: Optional[str] = None


def call_agent(backend: LLMBackend, messages: List[dict], sid: str, trace: BaselineTrace,
               agent_id: Optional[str] = None, round: int = 0, with_confidence: bool = False,
               max_repair_attempts: int = 1) -> AgentTurn:
    """One agent turn with a single format repair. Backend failure or a second bad reply gives an INVALID turn."""
    attempt_messages = list(messages)
    for attempt in range(max_repair_attempts + 1):
        request = ChatRequest(messages=attempt_messages, stage=Stage.BASELINE, sample_id=sid,
                              round=round, agent_id=agent_id)
        try:
            response = backend.complete(request)
        except BackendError as e:
            logger.warning(f"⚠️ {sid}: agent {agent_id or '-'} backend failed ({e})")
            trace.flag(f"backend_failure_{agent_id or 'single'}_r{round}")
            return AgentTurn(agent_id=agent_id, round=round)
        trace.add_call(CallRecord.of(response, Stage.BASELINE, backend.role, round=round,
                                     agent_id=agent_id, repair=attempt > 0))
        try:
            parsed = parse_stage_output(response.text, ExpectedSchema.BASELINE_TURN)
            if with_confidence and parsed.confidence is None:
                raise ParseError("confidence is required")
        except ParseError:
            attempt_messages = attempt_messages + [
                {"role": "assistant", "content": response.text},
                {"role": "user", "content": format_reminder(ExpectedSchema.BASELINE_TURN)},
            ]
            continue
        assert isinstance(parsed, BaselineTurnOutput)
        return AgentTurn(agent_id=agent_id, round=round, reasoning=parsed.reasoning, action=parsed.action.value,
                         confidence=parsed.confidence if with_confidence else None)

    trace.flag(f"unparseable_{agent_id or 'single'}_r{round}")
    return AgentTurn(agent_id=agent_id, round=round)


def majority_vote(turns: Sequence[AgentTurn]) -> Prediction:
    """Binary majority over valid turns; fewer than two agreeing votes is a vote failure."""
    votes = Counter(t.prediction for t in turns if t.valid)
    for label in (Prediction.POSITIVE, Prediction.NEGATIVE):
        if votes[label] >= 2 and votes[label] > len(turns) - votes[label]:
            return label
    return Prediction.INVALID


def tie_break_key(sample_id: str, agent_id: str) -> int:
    """Stable 64-bit hash; lower wins."""
    return int(hashlib.sha256(f"{sample_id}|{agent_id}".encode("utf-8")).hexdigest()[:16], 16)


def system_message() -> dict:
    return {"role": "system", "content": BASELINE_SYSTEM}
