"""
Single-pass and 3-agent majority-vote baselines over the flat feature block.
"""

import logging
from typing import Optional, Sequence, Tuple

from src.base.domain import Prediction
from src.base.errors import ConfigError
from src.baselines.common import AGENT_IDS, BaselineTrace, call_agent, majority_vote, system_message
from src.cohort.builder import Sample
from src.engine.prompts import baseline_task, render_feature_block
from src.gateway.llm_gateway import LLMBackend

logger = logging.getLogger(__name__)


def _independent_messages(sample: Sample) -> list:
    return [system_message(), {"role": "user", "content": baseline_task(render_feature_block(sample.values()))}]


def check_agents(backends: Sequence[LLMBackend]) -> None:
    if len(backends) != len(AGENT_IDS):
        raise ConfigError(f"multi-agent workflows need {len(AGENT_IDS)} backends, got {len(backends)}")


def agent_backends(backends: Sequence[LLMBackend]) -> dict:
    return {f"agent_{a.lower()}": b.backend_id for a, b in zip(AGENT_IDS, backends)}


def run_single_pass(sample: Sample, backend: LLMBackend,
                    config_digest: Optional[str] = None) -> Tuple[Prediction, BaselineTrace]:
    trace = BaselineTrace(sample_id=sample.sample_id, workflow="single",
                          backends={"local": backend.backend_id}, config_digest=config_digest)
    turn = call_agent(backend, _independent_messages(sample), sample.sample_id, trace)
    trace.turns.append(turn)
    trace.prediction = turn.prediction
    return trace.prediction, trace


def run_majority_vote(sample: Sample, backends: Sequence[LLMBackend],
                      config_digest: Optional[str] = None) -> Tuple[Prediction, BaselineTrace]:
    """Three independent single passes; majority over their binary mappings."""
    check_agents(backends)
    trace = BaselineTrace(sample_id=sample.sample_id, workflow="vote", backends=agent_backends(backends),
                          config_digest=config_digest)
    messages = _independent_messages(sample)
    for agent_id, backend in zip(AGENT_IDS, backends):
        trace.turns.append(call_agent(backend, messages, sample.sample_id, trace, agent_id=agent_id))
    trace.prediction = majority_vote(trace.turns)
    if trace.prediction is Prediction.INVALID:
        logger.debug(f"{sample.sample_id}: vote failure")
        trace.flag("vote_failure")
    return trace.prediction, trace
