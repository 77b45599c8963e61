import pytest

from reviewkit import FeedbackTemplate, Selection
from reviewkit.errors import (
    AlreadyDecided,
    NotFound,
    RetriableProviderError,
    ValidationError,
)

from .conftest import (
    FailingProvider,
    clean_code,
    list_concat_code,
    missing_return_code,
)


@pytest.fixture
def opened(make_engine):
    """Engine with one missing-return pair opened for review."""
    engine = make_engine([missing_return_code()])
    submission, draft = engine.next_pair()
    return engine, submission, draft


def code_selection(submission, draft, line):
    lines = submission.code.split("\n")
    return Selection(source="code", start=line, end=line, text=lines[line - 1],
                     draft_id=draft.draft_id)


def feedback_selection(draft, kind, start, end):
    text = draft.component(kind).active_text
    return Selection(source="feedback", start=start, end=end,
                     text=text[start:end], draft_id=draft.draft_id, component=kind)


class TestRequestRevision:
    def test_mention_issue_inserts_tagged_sentence(self, opened):
        engine, submission, draft = opened
        selection = code_selection(submission, draft, 4)   # the total+=x line
        revision = engine.request_revision(
            draft.draft_id, "in_situ", shortcut="mention_issue", selection=selection
        )
        assert revision.state == "pending"
        assert revision.component == "Issue"
        assert revision.issue_tag == "missing-return"
        assert revision.tag_additions == ["missing-return"]
        assert revision.level_class == "content"
        (edit,) = revision.suggestion.edits
        assert edit.start == edit.end == len(draft.component("Issue").active_text)
        assert revision.suggestion.description

    def test_remove_replaces_exact_span_with_empty(self, opened):
        engine, submission, draft = opened
        selection = feedback_selection(draft, "Issue", 4, 12)
        revision = engine.request_revision(
            draft.draft_id, "in_situ", shortcut="remove", selection=selection
        )
        (edit,) = revision.suggestion.edits
        assert (edit.start, edit.end, edit.replacement) == (4, 12, "")
        assert revision.level_class == "abstraction"

    def test_in_situ_without_selection_rejected(self, opened):
        engine, _, draft = opened
        with pytest.raises(ValidationError):
            engine.request_revision(draft.draft_id, "in_situ", shortcut="mention_issue")

    def test_mention_issue_rejects_feedback_selection(self, opened):
        engine, _, draft = opened
        selection = feedback_selection(draft, "Issue", 0, 4)
        with pytest.raises(ValidationError):
            engine.request_revision(
                draft.draft_id, "in_situ", shortcut="mention_issue", selection=selection
            )

    def test_remove_rejects_code_selection(self, opened):
        engine, submission, draft = opened
        selection = code_selection(submission, draft, 2)
        with pytest.raises(ValidationError):
            engine.request_revision(
                draft.draft_id, "in_situ", shortcut="remove", selection=selection
            )

    def test_selection_text_must_match_slice(self, opened):
        engine, submission, draft = opened
        bad = Selection(source="code", start=2, end=2, text="not the line",
                        draft_id=draft.draft_id)
        with pytest.raises(ValidationError):
            engine.request_revision(
                draft.draft_id, "in_situ", shortcut="mention_issue", selection=bad
            )

    def test_revision_requires_open_draft(self, make_engine):
        engine = make_engine([missing_return_code()])
        (draft,) = engine.state.drafts.values()     # still unreviewed
        with pytest.raises(ValidationError):
            engine.request_revision(draft.draft_id, "general", query_text="fix it")

    def test_slider_origin_redirected(self, opened):
        engine, _, draft = opened
        with pytest.raises(ValidationError):
            engine.request_revision(draft.draft_id, "slider")

    def test_general_greeting_is_personal_level(self, opened):
        engine, _, draft = opened
        revision = engine.request_revision(
            draft.draft_id, "general", query_text="Great effort, keep going"
        )
        assert revision.level_class == "personal"
        assert revision.component == draft.components[-1].kind

    def test_expand_is_abstraction_level(self, opened):
        engine, _, draft = opened
        selection = feedback_selection(draft, "Issue", 0, 12)
        revision = engine.request_revision(
            draft.draft_id, "in_situ", shortcut="expand", selection=selection
        )
        assert revision.level_class == "abstraction"
        (edit,) = revision.suggestion.edits
        assert edit.start == edit.end == selection.end

    def test_provider_failure_leaves_no_state(self, make_engine):
        engine = make_engine([missing_return_code()],
                             provider=FailingProvider(fail_tasks={"revise"}))
        _, draft = engine.next_pair()
        before = engine.state.to_snapshot()
        with pytest.raises(RetriableProviderError):
            engine.request_revision(draft.draft_id, "general", query_text="fix")
        assert engine.state.to_snapshot() == before

    def test_new_request_supersedes_pending_on_component(self, opened):
        engine, submission, draft = opened
        first = engine.request_revision(
            draft.draft_id, "general", query_text="mention the missing return"
        )
        second = engine.request_revision(
            draft.draft_id, "general", query_text="mention the missing return again"
        )
        assert engine.state.revisions[first.revision_id].state == "dismissed"
        assert engine.state.revisions[second.revision_id].state == "pending"


class TestManualRevisions:
    def test_manual_edit_normalized_to_span_diff(self, opened):
        engine, _, draft = opened
        old = draft.component("Issue").active_text
        new = old.replace("never returns", "never hands back")
        revision = engine.request_revision(
            draft.draft_id, "manual", component="Issue", new_text=new
        )
        assert revision.origin == "manual"
        assert revision.suggestion.edits
        engine.decide_revision(revision.revision_id, "accept")
        assert draft.component("Issue").active_text == new

    def test_manual_greeting_classified_personal(self, opened):
        engine, _, draft = opened
        old = draft.component("Issue").active_text
        revision = engine.request_revision(
            draft.draft_id, "manual", component="Issue",
            new_text=old + " Great job overall!",
        )
        assert revision.level_class == "personal"

    def test_manual_typo_fix_classified_content(self, opened):
        engine, _, draft = opened
        old = draft.component("Issue").active_text
        revision = engine.request_revision(
            draft.draft_id, "manual", component="Issue",
            new_text=old.replace("function", "procedure"),
        )
        assert revision.level_class == "content"

    def test_manual_requires_component_and_text(self, opened):
        engine, _, draft = opened
        with pytest.raises(ValidationError):
            engine.request_revision(draft.draft_id, "manual", component="Issue")
        with pytest.raises(NotFound):
            engine.request_revision(draft.draft_id, "manual",
                                    component="Summary", new_text="x")


class TestDecideRevision:
    def test_accept_changes_text_with_exactly_two_revision_events(self, opened):
        engine, _, draft = opened
        before_events = len(engine.events())
        original = draft.component("Issue").active_text
        selection = feedback_selection(draft, "Issue", 0, 4)
        revision = engine.request_revision(
            draft.draft_id, "in_situ", shortcut="remove", selection=selection
        )
        engine.decide_revision(revision.revision_id, "accept")
        new_events = engine.events()[before_events:]
        assert [e.kind for e in new_events] == ["revision_requested", "revision_decided"]
        assert draft.component("Issue").active_text == original[4:]

    def test_accepted_resulting_text_matches_apply(self, opened):
        engine, submission, draft = opened
        selection = code_selection(submission, draft, 4)
        revision = engine.request_revision(
            draft.draft_id, "in_situ", shortcut="mention_issue", selection=selection
        )
        pre = draft.component("Issue").active_text
        outcome = engine.decide_revision(revision.revision_id, "accept")
        from reviewkit.textspan import apply_diff
        assert outcome.resulting_text == apply_diff(pre, outcome.suggestion)
        assert draft.component("Issue").active_text == outcome.resulting_text

    def test_dismiss_is_noop_on_text(self, opened):
        engine, _, draft = opened
        original = draft.component("Issue").active_text
        revision = engine.request_revision(
            draft.draft_id, "general", query_text="mention the missing return"
        )
        engine.decide_revision(revision.revision_id, "dismiss")
        assert draft.component("Issue").active_text == original

    def test_double_decision_rejected(self, opened):
        engine, _, draft = opened
        revision = engine.request_revision(
            draft.draft_id, "general", query_text="note the missing return"
        )
        engine.decide_revision(revision.revision_id, "accept")
        with pytest.raises(AlreadyDecided):
            engine.decide_revision(revision.revision_id, "accept")

    def test_unknown_revision_not_found(self, opened):
        engine, _, _ = opened
        with pytest.raises(NotFound):
            engine.decide_revision("s0-r99", "accept")

    def test_tags_change_only_by_explicit_additions(self, opened):
        engine, submission, draft = opened
        component = draft.component("Issue")
        tags_before = list(component.issue_tags)
        selection = feedback_selection(draft, "Issue", 0, 4)
        revision = engine.request_revision(
            draft.draft_id, "in_situ", shortcut="remove", selection=selection
        )
        engine.decide_revision(revision.revision_id, "accept")
        assert component.issue_tags == tags_before   # remove carries no tag changes

    def test_anchor_inside_deleted_span_is_dropped(self, make_engine):
        engine = make_engine([missing_return_code()],
                             template=FeedbackTemplate(("Issue",), 1))
        _, draft = engine.next_pair()
        component = draft.component("Issue")
        (anchor,) = component.anchors
        span = anchor.span_at(1)
        selection = feedback_selection(draft, "Issue", span[0], span[1])
        revision = engine.request_revision(
            draft.draft_id, "in_situ", shortcut="remove", selection=selection
        )
        engine.decide_revision(revision.revision_id, "accept")
        assert component.anchors == []

    def test_anchor_after_insertion_shifts(self, opened):
        engine, submission, draft = opened
        component = draft.component("Issue")
        (anchor,) = component.anchors
        original_span = anchor.span_at(2)
        text = component.active_text
        revision = engine.request_revision(
            draft.draft_id, "manual", component="Issue", new_text="Heads up: " + text
        )
        engine.decide_revision(revision.revision_id, "accept")
        shifted = component.anchors[0].span_at(2)
        offset = len("Heads up: ")
        assert shifted == (original_span[0] + offset, original_span[1] + offset)
