"""Symptom questionnaire and rule-based triage scoring.

The rule table lives in a data file so health authorities can swap it without
touching code. Every rule is a monotone condition on the set of yes-answers
(required ids, an any-of group, a minimum yes count), which guarantees that
answering yes to more symptoms can never downgrade the recommendation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping

TEST_ADVISED = "test_advised"
SELF_MONITOR = "self_monitor"

#: Stable question ids and display text, in presentation order.
QUESTIONS: tuple[tuple[str, str], ...] = (
    ("cough", "New or worsening cough"),
    ("shortness_of_breath", "Shortness of breath"),
    ("sore_throat", "Sore throat"),
    ("runny_nose", "Runny nose, sneezing or nasal congestion"),
    ("hoarse_voice", "Hoarse voice"),
    ("difficulty_swallowing", "Difficulty swallowing"),
    ("nausea", "Nausea, vomiting, diarrhea or abdominal pain"),
    ("fatigue", "Unexpected fatigue"),
    ("fever", "Fever"),
)

QUESTION_IDS: tuple[str, ...] = tuple(qid for qid, _ in QUESTIONS)


def questionnaire_schema() -> list[dict]:
    """The questionnaire as served to clients: stable ids, stable order."""
    return [
        {"id": qid, "text": text, "index": i}
        for i, (qid, text) in enumerate(QUESTIONS, start=1)
    ]


@dataclass(frozen=True)
class Questionnaire:
    """One filled-in questionnaire: answers in schema order."""

    answers: tuple[bool, ...]

    def __post_init__(self) -> None:
        if len(self.answers) != len(QUESTIONS):
            raise ValueError(
                f"expected {len(QUESTIONS)} answers, got {len(self.answers)}"
            )
        if not all(isinstance(a, bool) for a in self.answers):
            raise ValueError("answers must be booleans")

    @classmethod
    def from_mapping(cls, answers: Mapping[str, bool]) -> "Questionnaire":
        """Build from an id-keyed mapping; the wire format is order-independent."""
        extra = set(answers) - set(QUESTION_IDS)
        missing = set(QUESTION_IDS) - set(answers)
        if extra or missing:
            parts = []
            if missing:
                parts.append(f"missing: {sorted(missing)}")
            if extra:
                parts.append(f"unknown: {sorted(extra)}")
            raise ValueError("bad answer keys; " + "; ".join(parts))
        return cls(tuple(bool(answers[qid]) for qid in QUESTION_IDS))

    def yes_ids(self) -> frozenset[str]:
        return frozenset(
            qid for qid, answer in zip(QUESTION_IDS, self.answers) if answer
        )


@dataclass(frozen=True)
class TriageResult:
    recommendation: str
    yes_count: int
    rule_fired: str | None


@dataclass(frozen=True)
class Rule:
    rule_id: str
    requires_all: tuple[str, ...] = ()
    requires_any: tuple[str, ...] = ()
    min_yes_count: int | None = None

    def fires(self, yes: frozenset[str]) -> bool:
        if any(qid not in yes for qid in self.requires_all):
            return False
        if self.requires_any and not yes.intersection(self.requires_any):
            return False
        if self.min_yes_count is not None and len(yes) < self.min_yes_count:
            return False
        return True


@dataclass(frozen=True)
class RuleSet:
    rules: tuple[Rule, ...]

    def score(self, questionnaire: Questionnaire) -> TriageResult:
        yes = questionnaire.yes_ids()
        for rule in self.rules:
            if rule.fires(yes):
                return TriageResult(TEST_ADVISED, len(yes), rule.rule_id)
        return TriageResult(SELF_MONITOR, len(yes), None)


class RuleFileError(ValueError):
    """Raised when a rule table file cannot be used."""


def _parse_rule(obj: object, position: int) -> Rule:
    if not isinstance(obj, dict):
        raise RuleFileError(f"rule #{position} is not an object")
    rule_id = obj.get("id")
    if not isinstance(rule_id, str) or not rule_id:
        raise RuleFileError(f"rule #{position} needs a non-empty string id")
    requires_all = obj.get("requires_all", [])
    requires_any = obj.get("requires_any", [])
    for name, group in (("requires_all", requires_all), ("requires_any", requires_any)):
        if not isinstance(group, list):
            raise RuleFileError(f"rule {rule_id}: {name} must be a list")
        unknown = [q for q in group if q not in QUESTION_IDS]
        if unknown:
            raise RuleFileError(f"rule {rule_id}: unknown question ids {unknown}")
    min_yes = obj.get("min_yes_count")
    if min_yes is not None:
        if not isinstance(min_yes, int) or not 1 <= min_yes <= len(QUESTIONS):
            raise RuleFileError(
                f"rule {rule_id}: min_yes_count must be 1..{len(QUESTIONS)}"
            )
    if not requires_all and not requires_any and min_yes is None:
        raise RuleFileError(f"rule {rule_id} has no conditions and would always fire")
    return Rule(
        rule_id=rule_id,
        requires_all=tuple(requires_all),
        requires_any=tuple(requires_any),
        min_yes_count=min_yes,
    )


def parse_rules(text: str) -> RuleSet:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise RuleFileError(f"rule table is not valid JSON: {exc.msg}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("rules"), list):
        raise RuleFileError('rule table must be an object with a "rules" list')
    rules = [_parse_rule(obj, i) for i, obj in enumerate(doc["rules"], start=1)]
    if not rules:
        raise RuleFileError("rule table has no rules")
    seen: set[str] = set()
    for rule in rules:
        if rule.rule_id in seen:
            raise RuleFileError(f"duplicate rule id {rule.rule_id}")
        seen.add(rule.rule_id)
    return RuleSet(tuple(rules))


def load_rules(path: str | Path) -> RuleSet:
    return parse_rules(Path(path).read_text(encoding="utf-8"))


def default_rules() -> RuleSet:
    text = resources.files("celltrace").joinpath("data/triage_rules.json").read_text(
        encoding="utf-8"
    )
    return parse_rules(text)


def score_questionnaire(
    questionnaire: Questionnaire, rules: RuleSet | None = None
) -> TriageResult:
    """Deterministic scoring: the first matching rule advises a test."""
    if rules is None:
        rules = default_rules()
    return rules.score(questionnaire)
