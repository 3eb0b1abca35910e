import pytest
from hypothesis import given, strategies as st

from gensco.models import (
    AnswerRecord,
    BlankQuestion,
    DanglingSupportIndex,
    Dataset,
    EmptyPassageSet,
    GeneratorParams,
    MultiHopInstance,
    Passage,
    ScoredCandidate,
    SelectionTrace,
    StopReason,
    SubQuestion,
    TraceLevel,
    Variant,
    replay_trace,
    validate_instance,
)

from helpers import trace_instance


def make_instance(**overrides):
    fields = dict(
        id="x1",
        question="Who directed the film?",
        gold_answer="Somebody",
        passages=(Passage(0, "T", "Body text."),),
        supporting_indices=frozenset({0}),
        dataset=Dataset.SYNTHETIC,
    )
    fields.update(overrides)
    return MultiHopInstance(**fields)


class TestValidateInstance:
    def test_valid_ten_passage_instance(self):
        inst = trace_instance()
        assert validate_instance(inst) is inst
        assert inst.supporting_indices == {1, 8}

    def test_empty_passage_set(self):
        with pytest.raises(EmptyPassageSet):
            validate_instance(make_instance(passages=(), supporting_indices=None))

    def test_dangling_support_index(self):
        passages = tuple(Passage(i, "", f"body {i}") for i in range(10))
        with pytest.raises(DanglingSupportIndex):
            validate_instance(
                make_instance(passages=passages, supporting_indices=frozenset({12}))
            )

    def test_blank_question(self):
        with pytest.raises(BlankQuestion):
            validate_instance(make_instance(question="   "))

    def test_blank_passage_body(self):
        with pytest.raises(ValueError):
            validate_instance(
                make_instance(passages=(Passage(0, "t", "  "),), supporting_indices=None)
            )

    def test_duplicate_passage_index(self):
        passages = (Passage(0, "", "a"), Passage(0, "", "b"))
        with pytest.raises(ValueError):
            validate_instance(make_instance(passages=passages, supporting_indices=None))


def sample_trace():
    levels = (
        TraceLevel(
            sub_question=SubQuestion(1, "Who directed it?"),
            candidates=(
                ScoredCandidate(1, 0, 0.4),
                ScoredCandidate(1, 1, 0.2),
            ),
            chosen_index=1,
        ),
    )
    return SelectionTrace(
        instance_id="x1",
        variant=Variant.STOP,
        levels=levels,
        stop_reason=StopReason.FIN_KEYWORD,
        selected_sequence=(1,),
    )


class TestSerialization:
    def test_instance_round_trip(self):
        inst = trace_instance()
        assert MultiHopInstance.from_dict(inst.to_dict()) == inst

    def test_trace_round_trip(self):
        trace = sample_trace()
        assert SelectionTrace.from_dict(trace.to_dict()) == trace

    def test_answer_record_round_trip(self):
        rec = AnswerRecord(
            instance_id="x1",
            predicted_answer="London",
            context_order=(8, 1),
            generator_params=GeneratorParams("scripted", 0.0, 2),
            permutation=(1, 0),
        )
        assert AnswerRecord.from_dict(rec.to_dict()) == rec

    def test_none_supports_round_trip(self):
        inst = make_instance(supporting_indices=None)
        assert MultiHopInstance.from_dict(inst.to_dict()) == inst

    @given(
        st.lists(
            st.tuples(st.text(max_size=20), st.text(min_size=1, max_size=50)),
            min_size=1,
            max_size=5,
        )
    )
    def test_passage_list_round_trip(self, pairs):
        passages = tuple(
            Passage(i, title, body) for i, (title, body) in enumerate(pairs)
        )
        assert tuple(
            Passage.from_dict(p.to_dict()) for p in passages
        ) == passages


class TestReplayTrace:
    def test_consistent_trace_replays(self):
        assert replay_trace(sample_trace())

    def test_non_argmin_choice_detected(self):
        trace = sample_trace()
        bad = SelectionTrace(
            instance_id=trace.instance_id,
            variant=trace.variant,
            levels=(
                TraceLevel(
                    sub_question=trace.levels[0].sub_question,
                    candidates=trace.levels[0].candidates,
                    chosen_index=0,
                ),
            ),
            stop_reason=trace.stop_reason,
            selected_sequence=(0,),
        )
        assert not replay_trace(bad)

    def test_sequence_level_mismatch_detected(self):
        trace = sample_trace()
        bad = SelectionTrace(
            instance_id=trace.instance_id,
            variant=trace.variant,
            levels=trace.levels,
            stop_reason=trace.stop_reason,
            selected_sequence=(1, 1),
        )
        assert not replay_trace(bad)

    def test_tie_breaks_to_lowest_index(self):
        levels = (
            TraceLevel(
                sub_question=SubQuestion(1, "q?"),
                candidates=(ScoredCandidate(1, 3, 0.5), ScoredCandidate(1, 5, 0.5)),
                chosen_index=3,
            ),
        )
        trace = SelectionTrace("x", Variant.MAX, levels, StopReason.MAX_LEVELS, (3,))
        assert replay_trace(trace)
