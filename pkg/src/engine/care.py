"""
CARE Engine - four-stage, privacy-partitioned decision workflow.

  Stage 1  programmatic rubric state from the bedside snapshot
  Stage 2  category-aware evidence acquisition against the local fact store
  Stage 3  remote transition advice (metadata only), local recompute, constrained merge
  Stage 4  local final decision, then the balance gate

One engine instance handles one sample at a time; the CLI runs several in
parallel. Stage failures become trace flags instead of exceptions, except a
privacy refusal, which always propagates.
"""

import logging
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, Field

from src.base.domain import Prediction
from src.base.errors import BackendError, ConfigError, ParseError
from src.cohort.builder import Sample
from src.cohort.features import (
    DIRECT_OBJECTIVE_KEYS,
    RETRIEVABLE_KEYS,
    STAGE1_KEYS,
    encode_value,
)
from src.engine.facts import FactStore
from src.engine.gate import GateThresholds, balance_gate
from src.engine.prompts import acquisition_messages, decision_messages
from src.engine.trace import AcquisitionRound, CallRecord, DecisionRecord, StageTrace
from src.gateway.llm_gateway import ChatRequest, LLMBackend, Stage
from src.gateway.parsing import (
    ExpectedSchema,
    SufficiencyResult,
    format_reminder,
    parse_stage_output,
)
from src.privacy.channel import RemoteChannel
from src.privacy.payload import build_remote_payload, sensitive_corpus
from src.rubric.merge import RemoteAdvisory, constrained_merge
from src.rubric.rules import RubricState, RuleThresholds, assign_initial_state, neutral_state, recompute_state
from src.rubric.schema import RubricSchema

logger = logging.getLogger(__name__)

REQUESTABLE_KEYS = set(RETRIEVABLE_KEYS) | set(DIRECT_OBJECTIVE_KEYS)


class EngineLimits(BaseModel):
    max_acquisition_rounds: int = Field(default=3, ge=1)
    max_facts_per_round: int = Field(default=6, ge=1)
    max_repair_attempts: int = Field(default=1, ge=0)


class AblationSwitches(BaseModel):
    no_stage1: bool = False
    no_stage3: bool = False

    @property
    def workflow_id(self) -> str:
        if self.no_stage1 and self.no_stage3:
            return "care-backbone"
        if self.no_stage1:
            return "care-no-stage1"
        if self.no_stage3:
            return "care-no-stage3"
        return "care"


class CareSettings(BaseModel):
    limits: EngineLimits = Field(default_factory=EngineLimits)
    rules: RuleThresholds = Field(default_factory=RuleThresholds)
    gate: GateThresholds = Field(default_factory=GateThresholds)
    ablation: AblationSwitches = Field(default_factory=AblationSwitches)


class CareEngine:
    def __init__(self, schema: RubricSchema, local_backend: LLMBackend, remote_channel: Optional[RemoteChannel],
                 settings: Optional[CareSettings] = None, config_digest: Optional[str] = None):
        self.schema = schema
        self.local = local_backend
        self.remote = remote_channel
        self.settings = settings or CareSettings()
        self.config_digest = config_digest
        if self.remote is None and not self.settings.ablation.no_stage3:
            raise ConfigError("Stage 3 is enabled but no remote channel was given")

    @property
    def workflow_id(self) -> str:
        return self.settings.ablation.workflow_id

    def run_care(self, sample: Sample) -> Tuple[Prediction, StageTrace]:
        values = sample.values()
        backends = {"local": self.local.backend_id}
        if self.remote is not None and not self.settings.ablation.no_stage3:
            backends["remote"] = self.remote.backend.backend_id
        trace = StageTrace(sample_id=sample.sample_id, workflow=self.workflow_id, backends=backends,
                           config_digest=self.config_digest)
        try:
            prediction = self._run(sample, values, trace)
        except BackendError as e:
            logger.warning(f"⚠️ {sample.sample_id}: local backend failed ({e}), marking INVALID")
            trace.flag("local_backend_failure")
            prediction = Prediction.INVALID
        trace.prediction = prediction
        return prediction, trace

    def _run(self, sample: Sample, values: Dict[str, Any], trace: StageTrace) -> Prediction:
        s = self.settings

        # Stage 1
        if s.ablation.no_stage1:
            initial = neutral_state(self.schema)
        else:
            initial = assign_initial_state(values, self.schema, s.rules)
        trace.initial_state = initial.to_dict()

        # Stage 2
        store = FactStore(values)
        retrieved, rounds = self.acquisition_loop(initial, values, store, sample.sample_id, trace)
        trace.acquisition_rounds = rounds
        trace.retrieved_keys = list(retrieved)

        # Stage 3
        visible = {k: values[k] for k in STAGE1_KEYS}
        visible.update(retrieved)
        recomputed = recompute_state(visible, self.schema, s.rules)
        trace.recomputed_state = recomputed.to_dict()
        if s.ablation.no_stage3:
            updated = recomputed
        else:
            advisory = self._advise(initial, list(retrieved), sample, values, trace)
            updated = constrained_merge(recomputed, advisory, self.schema)
        trace.merged_state = updated.to_dict()

        # Stage 4
        report = FactStore.report(retrieved)
        messages = decision_messages(values, report, initial, updated)
        decision = self._ask(messages, Stage.DECISION, ExpectedSchema.DECISION, sample.sample_id, 0, trace)
        if decision is None:
            trace.flag("stage4_unparseable")
            return Prediction.INVALID

        outcome = balance_gate(decision.final_action, visible, s.gate)
        trace.decision = DecisionRecord(
            differential_diagnosis=decision.differential_diagnosis,
            candidate_action=outcome.candidate_action.value,
            final_action=outcome.final_action.value,
            gate=outcome.gate.value,
            support_count=outcome.support_count,
            support_flags=outcome.support_flags,
        )
        return outcome.final_action.to_prediction()

    def acquisition_loop(self, state: RubricState, values: Dict[str, Any], store: FactStore, sid: str,
                         trace: StageTrace) -> Tuple[Dict[str, Any], List[AcquisitionRound]]:
        """
        Ask for keys, retrieve at most max_facts_per_round of them, repeat until
        nothing is pending, the model stops asking, or the round cap is hit.
        """
        limits = self.settings.limits
        retrieved: Dict[str, Any] = {}
        pending: List[str] = []
        rounds: List[AcquisitionRound] = []

        for r in range(limits.max_acquisition_rounds):
            messages = acquisition_messages(state, values, self.schema, retrieved, pending)
            calls_before = len(trace.calls)
            request = self._ask(messages, Stage.ACQUISITION, ExpectedSchema.ACQUISITION, sid, r, trace)
            repaired = len(trace.calls) - calls_before > 1
            if request is None:
                trace.flag(f"stage2_round{r}_unparseable")
                rounds.append(AcquisitionRound(round=r, valid=False, repaired=repaired))
                continue

            if not request.need_data:
                rounds.append(AcquisitionRound(round=r, valid=True, repaired=repaired, need_data=False))
                break

            dropped = [k for k in request.facts_keys if k not in REQUESTABLE_KEYS]
            if dropped:
                trace.flag(f"stage2_round{r}_dropped_keys")
            wanted = _ordered_union(pending, [k for k in request.facts_keys if k in REQUESTABLE_KEYS])
            wanted = [k for k in wanted if k not in retrieved]
            batch = wanted[:limits.max_facts_per_round]
            facts = store.retrieve(batch)
            retrieved.update(facts)
            pending = wanted[limits.max_facts_per_round:]

            sufficiency = SufficiencyResult(
                is_sufficient=not pending,
                remaining_requested_keys=pending,
                updated_available_keys=list(retrieved),
            )
            rounds.append(AcquisitionRound(
                round=r, valid=True, repaired=repaired, need_data=True,
                requested_keys=list(request.facts_keys), dropped_keys=dropped,
                retrieved={k: encode_value(v) for k, v in facts.items()},
                sufficiency=sufficiency.model_dump(),
            ))
            if sufficiency.is_sufficient:
                break

        return retrieved, rounds

    def _advise(self, state: RubricState, keys: List[str], sample: Sample, values: Dict[str, Any],
                trace: StageTrace) -> RemoteAdvisory:
        """Single remote call, no repair. Failures degrade to an empty advisory."""
        payload = build_remote_payload(state, keys, self.schema)
        trace.remote_payload_keys = payload.keys
        corpus = sensitive_corpus(values, sample.stay_id, sample.t_eval)
        try:
            response = self.remote.send(payload, corpus, Stage.ADVISORY)
        except BackendError as e:
            logger.warning(f"⚠️ {sample.sample_id}: remote advisory failed ({e}), continuing without it")
            trace.flag("stage3_remote_failure")
            return RemoteAdvisory.empty()
        trace.add_call(CallRecord.of(response, Stage.ADVISORY, self.remote.backend.role))
        try:
            advisory = parse_stage_output(response.text, ExpectedSchema.ADVISORY)
        except ParseError as e:
            logger.debug(f"{sample.sample_id}: advisory unparseable ({e.detail})")
            trace.flag("stage3_advisory_unparseable")
            return RemoteAdvisory.empty()
        trace.advisory = advisory.model_dump()
        return advisory

    def _ask(self, messages: List[dict], stage: Stage, expected: ExpectedSchema, sid: str, round: int,
             trace: StageTrace):
        """One local call plus up to max_repair_attempts format re-prompts. None if still unparseable."""
        attempt_messages = list(messages)
        for attempt in range(self.settings.limits.max_repair_attempts + 1):
            request = ChatRequest(messages=attempt_messages, stage=stage, sample_id=sid, round=round)
            response = self.local.complete(request)
            trace.add_call(CallRecord.of(response, stage, self.local.role, round=round, repair=attempt > 0))
            try:
                return parse_stage_output(response.text, expected)
            except ParseError as e:
                logger.debug(f"{sid}: {stage.value} round {round} unparseable ({e.detail})")
                attempt_messages = attempt_messages + [
                    {"role": "assistant", "content": response.text},
                    {"role": "user", "content": format_reminder(expected)},
                ]
        return None


def _ordered_union(first: List[str], second: List[str]) -> List[str]:
    out: List[str] = []
    for k in first + second:
        if k not in out:
            out.append(k)
    return out
