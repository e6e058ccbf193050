"""
Per-sample traces. Every workflow writes one trace per sample; eval reads
them back through TraceBase, which carries only what aggregation needs.
"""

from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field

from src.base.domain import Prediction
from src.gateway.llm_gateway import ChatResponse, Role, Stage, Usage


class CallRecord(BaseModel):
    stage: Stage
    role: Role
    round: int = 0
    agent_id: Optional[str] = None
    repair: bool = False
    prompt_tokens: int = 0
    completion_tokens: int = 0
    estimated: bool = False

    @classmethod
    def of(cls, response: ChatResponse, stage: Stage, role: Role, round: int = 0,
           agent_id: Optional[str] = None, repair: bool = False) -> "CallRecord":
        u = response.usage
        return cls(stage=stage, role=role, round=round, agent_id=agent_id, repair=repair,
                   prompt_tokens=u.prompt_tokens, completion_tokens=u.completion_tokens, estimated=u.estimated)


class TraceBase(BaseModel):
    model_config = ConfigDict(extra="ignore")

    sample_id: str
    workflow: str
    prediction: Prediction = Prediction.INVALID
    backends: Dict[str, str] = Field(default_factory=dict)
    calls: List[CallRecord] = Field(default_factory=list)
    flags: List[str] = Field(default_factory=list)
    config_digest: Optional[str] = None

    def add_call(self, record: CallRecord) -> None:
        self.calls.append(record)

    def flag(self, name: str) -> None:
        self.flags.append(name)

    @property
    def usage(self) -> Usage:
        total = Usage()
        for c in self.calls:
            total = total + Usage(prompt_tokens=c.prompt_tokens, completion_tokens=c.completion_tokens,
                                  estimated=c.estimated)
        return total

    @property
    def remote_calls(self) -> int:
        return sum(1 for c in self.calls if c.role is Role.REMOTE)

    def to_row(self) -> dict:
        return self.model_dump(mode="json")


class AcquisitionRound(BaseModel):
    round: int
    valid: bool
    repaired: bool = False
    need_data: Optional[bool] = None
    requested_keys: List[str] = Field(default_factory=list)
    dropped_keys: List[str] = Field(default_factory=list)
    retrieved: Dict[str, Any] = Field(default_factory=dict)
    sufficiency: Optional[Dict[str, Any]] = None


class DecisionRecord(BaseModel):
    differential_diagnosis: str = ""
    candidate_action: str
    final_action: str
    gate: str
    support_count: int
    support_flags: Dict[str, bool]


class StageTrace(TraceBase):
    """Full CARE record for one sample. Values in here are local-only."""

    initial_state: Optional[Dict[str, Any]] = None
    acquisition_rounds: List[AcquisitionRound] = Field(default_factory=list)
    retrieved_keys: List[str] = Field(default_factory=list)
    remote_payload_keys: Optional[List[str]] = None
    advisory: Optional[Dict[str, Any]] = None
    recomputed_state: Optional[Dict[str, Any]] = None
    merged_state: Optional[Dict[str, Any]] = None
    decision: Optional[DecisionRecord] = None
