"""Deterministic rule-based provider.

Every response is a pure function of (request, rule table): no randomness, no
clock, no external calls. That makes it both the offline default and the
ground truth the test suite scores the rest of the system against.
"""

from __future__ import annotations

from ..embedding import EmbeddingVector, embed_text
from ..errors import ProviderProtocolError
from .base import ProviderRequest, validate_response
from .rules import MockRuleTable, Rule, RuleMatch, code_tokens

_GREETING_WORDS = {
    "hi", "hello", "hey", "great", "nice", "good", "well", "awesome",
    "keep", "thanks", "thank", "job", "effort", "progress", "proud",
    "encouraging", "congrats",
}

_STOPWORDS = {"the", "and", "for", "with", "about", "this", "that", "your"}

_NO_ISSUE_TEXTS = {
    "Issue": (
        "No blocking issues found: the code follows the expected structure for this exercise.",
        "No blocking issues found in this submission.",
        "The approach looks sound.",
    ),
    "Strategy": (
        "Re-read the exercise statement and walk through your code with one sample input.",
        "Double-check the solution against the exercise requirements.",
        "Verify the approach matches the goal.",
    ),
    "Solution": (
        "The code already satisfies the exercise; no changes required.",
        "No changes required.",
        "Keep this approach.",
    ),
    "Example": (
        "Your structure already mirrors the reference solution for this exercise.",
        "Your solution matches the reference pattern.",
        "This is a solid reference point for future exercises.",
    ),
    "NextStep": (
        "Run the provided tests once more and submit.",
        "Confirm the sample inputs pass and submit.",
        "Move on to the next exercise.",
    ),
}


def _fill(template: str, match: RuleMatch, lines: list[str]) -> str:
    line = match.first_line
    excerpt = lines[line - 1].strip() if 0 < line <= len(lines) else ""
    return template.replace("{line}", str(line)).replace("{excerpt}", excerpt)


def _join_with_spans(sentences: list[str]) -> tuple[str, list[tuple[int, int]]]:
    spans = []
    pos = 0
    parts = []
    for i, s in enumerate(sentences):
        if i > 0:
            pos += 1  # joining space
        spans.append((pos, pos + len(s)))
        parts.append(s)
        pos += len(s)
    return " ".join(parts), spans


def is_greeting_text(text: str) -> bool:
    """Keyword heuristic for personal-level (greeting/encouragement) edits."""
    return bool({t.lower() for t in code_tokens(text)} & _GREETING_WORDS)


def keyword_tokens(text: str) -> list[str]:
    """Lowercased content tokens for pattern keywords; order-preserving, deduped."""
    out = []
    seen = set()
    for tok in code_tokens(text):
        low = tok.lower()
        if len(low) < 3 or low in _STOPWORDS or low in seen:
            continue
        seen.add(low)
        out.append(low)
    return out[:8]


class MockProvider:
    def __init__(self, rule_table: MockRuleTable | None = None, embedding_dim: int = 256):
        self.rules = rule_table or MockRuleTable.default()
        self.embedding_dim = embedding_dim

    # -- gateway surface ---------------------------------------------------

    def generate(self, request: ProviderRequest) -> dict:
        handler = getattr(self, f"_task_{request.task}")
        return validate_response(request.task, handler(request))

    def embed(self, text: str) -> EmbeddingVector:
        return embed_text(text, dim=self.embedding_dim)

    # -- component generation ----------------------------------------------

    def _task_generate_components(self, request: ProviderRequest) -> dict:
        code = request.context["code"]
        kinds = request.context["components"]
        lines = code.split("\n")
        matches = self.rules.match(code)
        tags = sorted({m.rule.issue_tag for m in matches})
        components = []
        for kind in kinds:
            builder = getattr(self, f"_build_{kind.lower()}")
            variants, anchors = builder(matches, lines)
            components.append({
                "kind": kind,
                "variants": {str(level): text for level, text in variants.items()},
                "issue_tags": tags,
                "anchors": anchors,
            })
        return {"components": components}

    def _build_issue(self, matches, lines):
        if not matches:
            texts = _NO_ISSUE_TEXTS["Issue"]
            return {1: texts[0], 2: texts[1], 3: texts[2]}, []
        variants = {}
        spans_by_level = {}
        for level in (1, 2, 3):
            sentences = [_fill(m.rule.issue_text(level), m, lines) for m in matches]
            variants[level], spans_by_level[level] = _join_with_spans(sentences)
        anchors = []
        for idx, m in enumerate(matches):
            ls, le = m.line_ranges[0]
            anchors.append({
                "line_start": ls,
                "line_end": le,
                "spans": {str(level): list(spans_by_level[level][idx]) for level in (1, 2, 3)},
            })
        return variants, anchors

    def _build_strategy(self, matches, lines):
        if not matches:
            texts = _NO_ISSUE_TEXTS["Strategy"]
            return {1: texts[0], 2: texts[1], 3: texts[2]}, []
        hints = [m.rule.fix_hint for m in matches]
        concepts = [m.rule.concept for m in matches]
        variants = {
            1: "Trace the code line by line: "
               + "; ".join(f"{h} (line {m.first_line})" for h, m in zip(hints, matches)) + ".",
            2: "Focus on: " + "; ".join(hints) + ".",
            3: "Plan the fix around " + " and ".join(concepts) + ".",
        }
        return variants, []

    def _build_solution(self, matches, lines):
        if not matches:
            texts = _NO_ISSUE_TEXTS["Solution"]
            return {1: texts[0], 2: texts[1], 3: texts[2]}, []
        l1_sentences = [f"On line {m.first_line}, {m.rule.fix_hint}." for m in matches]
        l2_sentences = [m.rule.fix_hint[0].upper() + m.rule.fix_hint[1:] + "." for m in matches]
        concepts = " and ".join(m.rule.concept for m in matches)
        text1, spans1 = _join_with_spans(l1_sentences)
        text2, spans2 = _join_with_spans(l2_sentences)
        variants = {1: text1, 2: text2, 3: f"Once you revisit {concepts}, the fix follows."}
        anchors = []
        for idx, m in enumerate(matches):
            ls, le = m.line_ranges[0]
            anchors.append({
                "line_start": ls,
                "line_end": le,
                "spans": {
                    "1": list(spans1[idx]),
                    "2": list(spans2[idx]),
                    "3": None,       # the conceptual variant has no per-issue sentence
                },
            })
        return variants, anchors

    def _build_example(self, matches, lines):
        if not matches:
            texts = _NO_ISSUE_TEXTS["Example"]
            return {1: texts[0], 2: texts[1], 3: texts[2]}, []
        first = matches[0].rule
        variants = {
            1: f"A working pattern:\n{first.example_snippet}",
            2: f"Compare your code with:\n{first.example_snippet}",
            3: f"Recall an example that demonstrates {first.concept}.",
        }
        return variants, []

    def _build_nextstep(self, matches, lines):
        if not matches:
            texts = _NO_ISSUE_TEXTS["NextStep"]
            return {1: texts[0], 2: texts[1], 3: texts[2]}, []
        concepts = " and ".join(m.rule.concept for m in matches)
        variants = {
            1: "Apply the changes above, rerun the provided tests, and resubmit your solution.",
            2: "Revise the function and check it against the sample inputs again.",
            3: f"Reflect on {concepts} before the next exercise.",
        }
        return variants, []

    # -- selection interpretation -------------------------------------------

    def _lookup_rule_for_selection(self, code: str, selection: dict) -> RuleMatch | None:
        matches = self.rules.match(code)
        if selection["source"] == "code":
            lo, hi = int(selection["start"]), int(selection["end"])
            for m in matches:
                for ls, le in m.line_ranges:
                    if ls <= hi and lo <= le:
                        return m
            return None
        return self._lookup_rule_for_text(matches, selection.get("text", ""))

    def _lookup_rule_for_text(self, matches, text: str) -> RuleMatch | None:
        probe = set(keyword_tokens(text))
        if not probe:
            return None
        for m in matches:
            rule_words = set(keyword_tokens(
                m.rule.issue_tag.replace("-", " ") + " " + m.rule.filter_summary
            ))
            if probe & rule_words:
                return m
        return None

    def _task_interpret_selection(self, request: ProviderRequest) -> dict:
        code = request.context["code"]
        selection = request.context["selection"]
        match = self._lookup_rule_for_selection(code, selection)
        if match is not None:
            summary = match.rule.filter_summary
            tag = match.rule.issue_tag
        else:
            text = selection.get("text", "").strip()
            short = text if len(text) <= 60 else text[:57] + "..."
            summary = f'Attention: "{short}"'
            tag = None
        return {
            "summary": summary,
            "target": "code" if selection["source"] == "code" else "feedback",
            "issue_tag": tag,
        }

    # -- revision suggestions -----------------------------------------------

    def _task_revise(self, request: ProviderRequest) -> dict:
        ctx = request.context
        req = ctx["request"]
        origin = req["origin"]
        if origin == "in_situ":
            return self._revise_in_situ(ctx, req)
        if origin == "general":
            return self._revise_general(ctx, req)
        if origin == "propagation":
            return self._revise_propagation(ctx, req)
        raise ProviderProtocolError(f"mock cannot revise origin {origin!r}")

    def _target_component(self, ctx, preferred: str = "Issue") -> str:
        order = ctx["component_order"]
        return preferred if preferred in order else order[0]

    def _insert_at_end(self, text: str, sentence: str) -> dict:
        sep = "" if (not text or text.endswith((" ", "\n"))) else " "
        return {"start": len(text), "end": len(text), "replacement": sep + sentence}

    def _issue_sentence(self, rule: Rule, level: int, code: str) -> str:
        lines = code.split("\n")
        for m in self.rules.match(code):
            if m.rule.rule_id == rule.rule_id:
                return _fill(rule.issue_text(level), m, lines)
        # The rule does not fire on this code; fall back to the placeholder-free
        # mid-level phrasing.
        return rule.issue_text(max(level, 2))

    def _revise_in_situ(self, ctx, req) -> dict:
        code = ctx["code"]
        selection = req["selection"]
        shortcut = req["shortcut"]
        if shortcut == "mention_issue":
            match = self._lookup_rule_for_selection(code, selection)
            component = self._target_component(ctx)
            text = ctx["feedback"][component]
            level = ctx["active_levels"][component]
            if match is not None:
                sentence = self._issue_sentence(match.rule, level, code)
                return {
                    "component": component,
                    "edits": [self._insert_at_end(text, sentence)],
                    "description": f"Mention the {match.rule.issue_tag} issue in the feedback.",
                    "level_class": "content",
                    "tag_additions": [match.rule.issue_tag],
                    "tag_removals": [],
                    "issue_tag": match.rule.issue_tag,
                }
            sel_text = selection.get("text", "").strip()
            sentence = f'Take another look at "{sel_text}"; it needs attention.'
            return {
                "component": component,
                "edits": [self._insert_at_end(text, sentence)],
                "description": "Add a note about the selected content.",
                "level_class": "content",
                "tag_additions": [],
                "tag_removals": [],
                "issue_tag": None,
            }
        component = selection["component"]
        start, end = int(selection["start"]), int(selection["end"])
        if shortcut == "remove":
            return {
                "component": component,
                "edits": [{"start": start, "end": end, "replacement": ""}],
                "description": "Remove the selected text.",
                "level_class": "abstraction",
                "tag_additions": [],
                "tag_removals": [],
                "issue_tag": None,
            }
        matches = self.rules.match(code)
        match = self._lookup_rule_for_text(matches, selection.get("text", ""))
        if match is None and matches:
            match = matches[0]
        if shortcut == "fix_error":
            level = ctx["active_levels"][component]
            if match is not None:
                replacement = self._issue_sentence(match.rule, level, code)
                tag_additions = [match.rule.issue_tag]
                description = f"Correct the feedback to describe the {match.rule.issue_tag} issue."
                issue_tag = match.rule.issue_tag
            else:
                replacement = "[revised] " + selection.get("text", "")
                tag_additions = []
                description = "Rewrite the selected sentence."
                issue_tag = None
            return {
                "component": component,
                "edits": [{"start": start, "end": end, "replacement": replacement}],
                "description": description,
                "level_class": "content",
                "tag_additions": tag_additions,
                "tag_removals": [],
                "issue_tag": issue_tag,
            }
        if shortcut == "expand":
            if match is not None:
                detail = self._issue_sentence(match.rule, 1, code)
            else:
                detail = "In particular, walk through this part with a concrete input."
            return {
                "component": component,
                "edits": [{"start": end, "end": end, "replacement": " " + detail}],
                "description": "Expand the selected explanation with more detail.",
                "level_class": "abstraction",
                "tag_additions": [],
                "tag_removals": [],
                "issue_tag": None,
            }
        raise ProviderProtocolError(f"mock cannot handle shortcut {shortcut!r}")

    def _revise_general(self, ctx, req) -> dict:
        code = ctx["code"]
        query = (req.get("query_text") or "").strip()
        tokens = {t.lower() for t in code_tokens(query)}
        if tokens & _GREETING_WORDS:
            component = ctx["component_order"][-1]
            sentence = query if query.endswith((".", "!", "?")) else query + "."
            return {
                "component": component,
                "edits": [self._insert_at_end(ctx["feedback"][component], sentence)],
                "description": "Add a personal note for the student.",
                "level_class": "personal",
                "tag_additions": [],
                "tag_removals": [],
                "issue_tag": None,
            }
        matches = self.rules.match(code)
        match = self._lookup_rule_for_text(matches, query)
        component = self._target_component(ctx)
        text = ctx["feedback"][component]
        if match is not None:
            level = ctx["active_levels"][component]
            sentence = self._issue_sentence(match.rule, level, code)
            return {
                "component": component,
                "edits": [self._insert_at_end(text, sentence)],
                "description": f"Mention the {match.rule.issue_tag} issue in the feedback.",
                "level_class": "content",
                "tag_additions": [match.rule.issue_tag],
                "tag_removals": [],
                "issue_tag": match.rule.issue_tag,
            }
        sentence = f"Reviewer note: {query}" if query else "Reviewer note."
        if not sentence.endswith((".", "!", "?")):
            sentence += "."
        return {
            "component": component,
            "edits": [self._insert_at_end(text, sentence)],
            "description": "Add a reviewer note to the feedback.",
            "level_class": "content",
            "tag_additions": [],
            "tag_removals": [],
            "issue_tag": None,
        }

    def _revise_propagation(self, ctx, req) -> dict:
        action = req["action"]
        code = ctx["code"]
        goal = action["goal"]
        tag = action.get("issue_tag")
        if tag:
            rule = self.rules.by_tag(tag)
            if rule is None:
                raise ProviderProtocolError(f"unknown issue tag {tag!r}")
            component = self._target_component(ctx, preferred=action.get("component", "Issue"))
            text = ctx["feedback"][component]
            level = ctx["active_levels"][component]
            sentence = self._issue_sentence(rule, level, code)
            return {
                "component": component,
                "edits": [self._insert_at_end(text, sentence)],
                "description": f"Apply: {goal}",
                "level_class": "content",
                "tag_additions": [tag],
                "tag_removals": [],
                "issue_tag": tag,
            }
        old, new = action.get("old_text", ""), action.get("new_text", "")
        component = self._target_component(ctx, preferred=action.get("component", "Issue"))
        text = ctx["feedback"][component]
        if old:
            pos = text.find(old)
            edits = [] if pos < 0 else [
                {"start": pos, "end": pos + len(old), "replacement": new}
            ]
        else:
            edits = [] if new and new in text else (
                [self._insert_at_end(text, new)] if new else []
            )
        return {
            "component": component,
            "edits": edits,
            "description": f"Apply: {goal}",
            "level_class": "content",
            "tag_additions": [],
            "tag_removals": [],
            "issue_tag": None,
        }

    # -- action extraction ----------------------------------------------------

    def _task_extract_action(self, request: ProviderRequest) -> dict:
        revision = request.context["revision"]
        tag = revision.get("issue_tag")
        if tag:
            return {
                "goal": f"Mention the {tag} issue in the feedback.",
                "code_pattern": {
                    "description": f"code that triggers {tag}",
                    "keywords": [tag],
                },
                "feedback_pattern": {"description": "", "keywords": []},
            }
        old = revision.get("old_text", "")
        new = revision.get("new_text", "")
        short_old = old if len(old) <= 40 else old[:37] + "..."
        short_new = new if len(new) <= 40 else new[:37] + "..."
        if old and new:
            goal = f'Replace "{short_old}" with "{short_new}".'
        elif new:
            goal = f'Ensure the feedback includes "{short_new}".'
        else:
            goal = f'Remove "{short_old}" from the feedback.'
        keywords = keyword_tokens(old) or keyword_tokens(new)
        return {
            "goal": goal,
            "code_pattern": {"description": "", "keywords": []},
            "feedback_pattern": {
                "description": "feedback containing the edited phrase",
                "keywords": keywords,
            },
        }

    # -- pattern matching -------------------------------------------------------

    def _keyword_in_code(self, keyword: str, code: str, matched_tags: set[str]) -> bool:
        if self.rules.by_tag(keyword) is not None:
            return keyword in matched_tags
        return keyword.lower() in {t.lower() for t in code_tokens(code)}

    def _keyword_in_feedback(self, keyword: str, feedback: str, tags: list[str]) -> bool:
        if self.rules.by_tag(keyword) is not None and keyword in tags:
            return True
        return keyword.lower() in feedback.lower()

    def _task_match_pattern(self, request: ProviderRequest) -> dict:
        ctx = request.context
        code = ctx["code"]
        feedback = ctx["feedback"]          # {component kind: active text}
        tags = ctx["tags"]
        code_keywords = list(ctx["code_pattern"].get("keywords", []))
        feedback_keywords = list(ctx["feedback_pattern"].get("keywords", []))
        matched_tags = {m.rule.issue_tag for m in self.rules.match(code)}
        joined = "\n".join(feedback.values())

        code_ok = all(self._keyword_in_code(k, code, matched_tags) for k in code_keywords)
        feedback_ok = all(self._keyword_in_feedback(k, joined, tags) for k in feedback_keywords)
        matched = code_ok and feedback_ok

        code_lines: list[list[int]] = []
        feedback_spans: list[dict] = []
        if matched:
            code_lines = self._highlight_code_lines(code, code_keywords, matched_tags)
            feedback_spans = self._highlight_feedback(feedback, code_keywords + feedback_keywords)
        return {
            "matched": matched,
            "code_lines": code_lines,
            "feedback_spans": feedback_spans,
        }

    def _highlight_code_lines(self, code, keywords, matched_tags):
        ranges: list[tuple[int, int]] = []
        lines = code.split("\n")
        for keyword in keywords:
            rule = self.rules.by_tag(keyword)
            if rule is not None:
                for m in self.rules.match(code):
                    if m.rule.rule_id == rule.rule_id:
                        ranges.extend(m.line_ranges)
            else:
                low = keyword.lower()
                for i, line in enumerate(lines, start=1):
                    if low in {t.lower() for t in code_tokens(line)}:
                        ranges.append((i, i))
        return [list(r) for r in sorted(set(ranges))]

    def _highlight_feedback(self, feedback: dict, keywords: list[str]) -> list[dict]:
        spans = []
        probes = set()
        for keyword in keywords:
            rule = self.rules.by_tag(keyword)
            words = keyword.replace("-", " ").split() if rule is not None else [keyword]
            probes.update(w.lower() for w in words if len(w) >= 4)
        for kind in feedback:
            text = feedback[kind]
            low = text.lower()
            for probe in sorted(probes):
                start = 0
                while True:
                    pos = low.find(probe, start)
                    if pos < 0:
                        break
                    spans.append({
                        "component": kind,
                        "start": pos,
                        "end": pos + len(probe),
                        "strength": "dark",
                    })
                    start = pos + len(probe)
        spans.sort(key=lambda s: (s["component"], s["start"], s["end"]))
        return spans

    # -- cluster summaries -------------------------------------------------------

    def _task_summarize_cluster(self, request: ProviderRequest) -> dict:
        tags = list(request.context["tags"])
        size = int(request.context["size"])
        noun = "submission" if size == 1 else "submissions"
        if not tags:
            return {"summary": f"{size} {noun} with no rule-matched issues"}
        parts = []
        for tag in tags:
            rule = self.rules.by_tag(tag)
            parts.append(rule.filter_summary if rule else tag)
        return {"summary": f"{size} {noun}: " + "; ".join(parts)}
