"""Rule table for the deterministic mock provider.

Each rule recognizes one issue in student code and carries the texts the mock
emits for it at the three abstraction levels. Matching is a pure function of
the code, which makes the whole mock provider a reproducible test oracle.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from ..errors import ValidationError

_NAME_TOKEN_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_ASSIGN_RE = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*(=|\+=)(?!=)\s*(.*)$")

RULE_KINDS = ("token_absent", "augmented_assign_list", "pattern_with_absence",
              "unused_accumulator")


@dataclass(frozen=True)
class Rule:
    rule_id: str
    kind: str
    params: dict
    issue_tag: str
    filter_summary: str
    issue_texts: tuple[str, str, str]    # abstraction levels 1..3
    fix_hint: str
    concept: str
    example_snippet: str

    def issue_text(self, level: int) -> str:
        return self.issue_texts[level - 1]


@dataclass(frozen=True)
class RuleMatch:
    rule: Rule
    line_ranges: tuple[tuple[int, int], ...]   # 1-based inclusive

    @property
    def first_line(self) -> int:
        return self.line_ranges[0][0]


class MockRuleTable:
    def __init__(self, rules: list[Rule]):
        seen = set()
        for rule in rules:
            if rule.rule_id in seen:
                raise ValidationError(f"duplicate rule_id {rule.rule_id!r}")
            if rule.kind not in RULE_KINDS:
                raise ValidationError(f"unknown rule kind {rule.kind!r}")
            if len(rule.issue_texts) != 3:
                raise ValidationError(f"rule {rule.rule_id!r} needs exactly 3 level texts")
            seen.add(rule.rule_id)
        self.rules = list(rules)

    @classmethod
    def from_file(cls, path: str | Path) -> "MockRuleTable":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls.from_dicts(data["rules"])

    @classmethod
    def from_dicts(cls, dicts: list[dict]) -> "MockRuleTable":
        rules = []
        for d in dicts:
            rules.append(Rule(
                rule_id=d["rule_id"],
                kind=d["kind"],
                params=d.get("params", {}),
                issue_tag=d["issue_tag"],
                filter_summary=d["filter_summary"],
                issue_texts=tuple(d["issue_texts"]),
                fix_hint=d["fix_hint"],
                concept=d["concept"],
                example_snippet=d.get("example_snippet", ""),
            ))
        return cls(rules)

    @classmethod
    def default(cls) -> "MockRuleTable":
        raw = resources.files("reviewkit.providers").joinpath("rule_table.json")
        data = json.loads(raw.read_text(encoding="utf-8"))
        return cls.from_dicts(data["rules"])

    def by_tag(self, tag: str) -> Rule | None:
        for rule in self.rules:
            if rule.issue_tag == tag:
                return rule
        return None

    def match(self, code: str) -> list[RuleMatch]:
        """Evaluate all rules in table order; pure function of the code."""
        lines = code.split("\n")
        matches = []
        for rule in self.rules:
            ranges = _MATCHERS[rule.kind](rule, code, lines)
            if ranges:
                matches.append(RuleMatch(rule=rule, line_ranges=tuple(ranges)))
        return matches


def code_tokens(code: str) -> list[str]:
    return _NAME_TOKEN_RE.findall(code)


def _last_nonempty_line(lines: list[str]) -> int:
    for i in range(len(lines), 0, -1):
        if lines[i - 1].strip():
            return i
    return 1


def _match_token_absent(rule: Rule, code: str, lines: list[str]):
    token = rule.params["token"]
    if token in code_tokens(code):
        return []
    last = _last_nonempty_line(lines)
    return [(last, last)]


def _match_augmented_assign_list(rule: Rule, code: str, lines: list[str]):
    list_names = set()
    for line in lines:
        m = _ASSIGN_RE.match(line)
        if m and m.group(2) == "=":
            rhs = m.group(3).strip()
            if rhs.startswith("[]") or rhs.startswith("list("):
                list_names.add(m.group(1))
    if not list_names:
        return []
    ranges = []
    for i, line in enumerate(lines, start=1):
        m = _ASSIGN_RE.match(line)
        if m and m.group(2) == "+=" and m.group(1) in list_names:
            rhs = m.group(3).strip()
            if not (rhs.startswith("[") or rhs.startswith("list(")):
                ranges.append((i, i))
    return ranges


def _match_pattern_with_absence(rule: Rule, code: str, lines: list[str]):
    pattern = rule.params["pattern"]
    absent = rule.params["absent"]
    if pattern not in code or absent in code:
        return []
    return [(i, i) for i, line in enumerate(lines, start=1) if pattern in line]


def _match_unused_accumulator(rule: Rule, code: str, lines: list[str]):
    # A name is an unused accumulator when every occurrence is a plain
    # assignment target: augmented assignment reads its target, so it counts
    # as a use, as does any other mention.
    assign_lines: dict[str, list[int]] = {}
    plain_targets: dict[str, int] = {}
    for i, line in enumerate(lines, start=1):
        m = _ASSIGN_RE.match(line)
        if m and m.group(2) == "=":
            name = m.group(1)
            assign_lines.setdefault(name, []).append(i)
            plain_targets[name] = plain_targets.get(name, 0) + 1
    if not assign_lines:
        return []
    occurrences: dict[str, int] = {}
    for tok in code_tokens(code):
        occurrences[tok] = occurrences.get(tok, 0) + 1
    ranges = []
    for name in sorted(assign_lines):
        # Any occurrence beyond the plain-assignment targets is a use.
        if occurrences.get(name, 0) == plain_targets[name]:
            ranges.extend((i, i) for i in assign_lines[name])
    return sorted(set(ranges))


_MATCHERS = {
    "token_absent": _match_token_absent,
    "augmented_assign_list": _match_augmented_assign_list,
    "pattern_with_absence": _match_pattern_with_absence,
    "unused_accumulator": _match_unused_accumulator,
}
