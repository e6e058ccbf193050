"""
Multi-agent debate baselines.

RSMAD  round 0 independent; in rounds 1 and 2 every agent sees the previous
       round only (the other two agents plus its own turn). Final answer is
       the majority over round-2 turns.
ConfMAD round 0 independent; rounds 1 and 2 run A -> B -> C, each speaker
       reading the whole history so far, same-round earlier speakers
       included. Final answer is the valid round-2 turn with the highest
       confidence; ties go to the lowest tie_break_key.
"""

import logging
from typing import List, Optional, Sequence, Tuple

from src.base.domain import Prediction
from src.baselines.common import (
    AGENT_IDS,
    AgentTurn,
    BaselineTrace,
    call_agent,
    majority_vote,
    system_message,
    tie_break_key,
)
from src.baselines.single import agent_backends, check_agents
from src.cohort.builder import Sample
from src.engine.prompts import baseline_task, render_feature_block
from src.gateway.llm_gateway import LLMBackend

logger = logging.getLogger(__name__)

DEBATE_ROUNDS = 2


def _debate_messages(task: str, own: Optional[AgentTurn], others: List[AgentTurn], history: str) -> List[dict]:
    parts = [task, "", "### Debate"]
    if own is not None:
        parts += ["Your previous response:", own.render(), ""]
    parts += [history, ""]
    parts += [turn.render() for turn in others] or ["(no responses yet)"]
    parts += ["", "Reconsider the case in light of these responses and give your own final answer in the same JSON format."]
    return [system_message(), {"role": "user", "content": "\n".join(parts)}]


def run_rsmad(sample: Sample, backends: Sequence[LLMBackend],
              config_digest: Optional[str] = None) -> Tuple[Prediction, BaselineTrace]:
    check_agents(backends)
    sid = sample.sample_id
    trace = BaselineTrace(sample_id=sid, workflow="rsmad", backends=agent_backends(backends),
                          config_digest=config_digest)
    task = baseline_task(render_feature_block(sample.values()))

    previous = {a: call_agent(b, [system_message(), {"role": "user", "content": task}], sid, trace, agent_id=a)
                for a, b in zip(AGENT_IDS, backends)}
    trace.turns.extend(previous.values())

    for r in range(1, DEBATE_ROUNDS + 1):
        current = {}
        for agent_id, backend in zip(AGENT_IDS, backends):
            others = [previous[a] for a in AGENT_IDS if a != agent_id]
            messages = _debate_messages(task, previous[agent_id], others,
                                        f"Responses of the other agents in round {r - 1}:")
            current[agent_id] = call_agent(backend, messages, sid, trace, agent_id=agent_id, round=r)
        # Synchronous: nobody in round r sees a round-r turn
        trace.turns.extend(current.values())
        previous = current

    trace.prediction = majority_vote(list(previous.values()))
    if trace.prediction is Prediction.INVALID:
        trace.flag("vote_failure")
    return trace.prediction, trace


def select_confident(sid: str, turns: Sequence[AgentTurn]) -> Optional[AgentTurn]:
    valid = [t for t in turns if t.valid and t.confidence is not None]
    if not valid:
        return None
    return min(valid, key=lambda t: (-t.confidence, tie_break_key(sid, t.agent_id)))


def run_confmad(sample: Sample, backends: Sequence[LLMBackend],
                config_digest: Optional[str] = None) -> Tuple[Prediction, BaselineTrace]:
    check_agents(backends)
    sid = sample.sample_id
    trace = BaselineTrace(sample_id=sid, workflow="confmad", backends=agent_backends(backends),
                          config_digest=config_digest)
    task = baseline_task(render_feature_block(sample.values()), with_confidence=True)

    history: List[AgentTurn] = [
        call_agent(b, [system_message(), {"role": "user", "content": task}], sid, trace,
                   agent_id=a, with_confidence=True)
        for a, b in zip(AGENT_IDS, backends)
    ]

    final_round: List[AgentTurn] = []
    for r in range(1, DEBATE_ROUNDS + 1):
        final_round = []
        for agent_id, backend in zip(AGENT_IDS, backends):
            messages = _debate_messages(task, None, list(history), "Debate history so far:")
            turn = call_agent(backend, messages, sid, trace, agent_id=agent_id, round=r, with_confidence=True)
            history.append(turn)
            final_round.append(turn)
    trace.turns = history

    winner = select_confident(sid, final_round)
    if winner is None:
        logger.debug(f"{sid}: no valid round-{DEBATE_ROUNDS} turn")
        trace.flag("no_valid_final_turn")
        trace.prediction = Prediction.INVALID
    else:
        trace.winner = winner.agent_id
        trace.prediction = winner.prediction
    return trace.prediction, trace
