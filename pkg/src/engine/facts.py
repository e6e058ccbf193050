"""Local fact store: materializes requested feature keys for one sample."""

from typing import Any, Dict, Iterable

from src.cohort.features import FEATURES, MISSING, render_value


class FactStore:
    def __init__(self, values: Dict[str, Any]):
        self._values = dict(values)

    def retrieve(self, keys: Iterable[str]) -> Dict[str, Any]:
        """Values for known keys, MISSING where the sample has none."""
        return {k: self._values.get(k, MISSING) for k in keys if k in FEATURES}

    @staticmethod
    def report(facts: Dict[str, Any]) -> str:
        if not facts:
            return "(no additional facts were retrieved)"
        return "\n".join(f"{k} = {render_value(v)}" for k, v in facts.items())
