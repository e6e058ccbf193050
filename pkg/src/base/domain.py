"""Shared vocabulary: labels, actions and predictions."""

from enum import Enum


class Label(str, Enum):
    POSITIVE = "POSITIVE"
    NEGATIVE = "NEGATIVE"


class Prediction(str, Enum):
    POSITIVE = "POSITIVE"
    NEGATIVE = "NEGATIVE"
    INVALID = "INVALID"


class Action(str, Enum):
    OBSERVE = "OBSERVE"
    TREAT_S = "TREAT_S"
    INVESTIGATE_O = "INVESTIGATE_O"

    def to_prediction(self) -> Prediction:
        # Only escalation to investigation counts as a positive call
        if self is Action.INVESTIGATE_O:
            return Prediction.POSITIVE
        return Prediction.NEGATIVE


def sample_id(stay_id: str, t_eval: int) -> str:
    return f"{stay_id}:{t_eval}"
