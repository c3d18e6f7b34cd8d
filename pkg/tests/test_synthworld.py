import pytest

from planrag.corpus import tokenize
from planrag.gateway import TokenUsage
from planrag.orchestrator import OrchestratorConfig, ScriptedPlanner, rollout
from planrag.reward import DEFAULT_COSTS
from planrag.synthworld import (
    NOISE_PREFIX,
    SCRIPTED_MODEL,
    QuestionKind,
    ScriptedBackend,
    SynthWorld,
    generate_world,
    scripted_pricing_table,
)
from planrag.workflow import ExecutorId


def by_kind(world, kind):
    return world.questions_of_kind(kind)


def test_same_seed_same_world():
    assert generate_world(seed=7).to_json() == generate_world(seed=7).to_json()


def test_different_seeds_differ():
    assert generate_world(seed=1).to_json() != generate_world(seed=2).to_json()


def test_json_round_trip(tmp_path, world0):
    path = tmp_path / "world.json"
    world0.save(path)
    loaded = SynthWorld.load(path)
    assert loaded.to_json() == world0.to_json()
    assert loaded.questions == world0.questions


def test_world_shape(world0):
    # 10 entities x 4 facts + 10 mentor facts, one doc each, plus 10 fillers
    assert len(world0.facts) == 50
    assert len(world0.documents) == 60
    assert len(world0.questions) == 40
    for kind in QuestionKind:
        assert len(by_kind(world0, kind)) == 10


def test_dataset_records_match_questions(world0):
    records = world0.dataset_records()
    assert len(records) == 40
    assert records[0] == {
        "question": world0.questions[0].text,
        "golden_answers": list(world0.questions[0].golds),
    }


def test_generation_guards():
    with pytest.raises(ValueError):
        generate_world(seed=0, n_entities=1)
    with pytest.raises(ValueError):
        generate_world(seed=0, n_questions_per_kind=0)
    with pytest.raises(ValueError):
        generate_world(seed=0, n_entities=3, n_questions_per_kind=4)


def test_noisy_questions_carry_the_prefix(world0):
    for q in by_kind(world0, QuestionKind.NOISY_SINGLE_HOP):
        assert q.text.startswith(NOISE_PREFIX)
        assert q.text == NOISE_PREFIX + q.clean_text


def test_distractors_never_share_tokens_with_golds(world0):
    for q in world0.questions:
        gold_tokens = set()
        for gold in q.golds:
            gold_tokens |= set(tokenize(gold))
        assert not set(tokenize(q.root_distractor)) & gold_tokens
    for fallback in world0.fallback_distractors.values():
        for q in world0.questions:
            assert fallback not in q.golds


def _rating_bounds(world):
    values = sorted(int(f.obj) for f in world.facts if f.relation == "rating")
    return values[0], values[-1]


def test_compare_slot_distractors_flip_the_comparison(world0):
    # a flipping value only exists when the pool extends past the loser
    # (resp. winner); otherwise the generator falls back to any wrong value
    lo, hi = _rating_bounds(world0)
    for q in by_kind(world0, QuestionKind.PARALLEL_COMPARE):
        true1, true2 = (int(f.obj) for f in q.slot_facts)
        wrong1, wrong2 = (int(d) for d in q.slot_distractors)
        assert wrong1 != true1 and wrong2 != true2
        if (true2 > lo) if true1 > true2 else (true2 < hi):
            assert (wrong1 > true2) != (true1 > true2)
        if (true1 < hi) if true1 > true2 else (true1 > lo):
            assert (true1 > wrong2) != (true1 > true2)


# ------------------------------------------------- scripted solvability

def run_plans(question, plans, suite):
    planner = ScriptedPlanner(plans)
    return rollout(question.text, list(question.golds), planner, suite)


def test_single_hop_solved_by_bare_generation(world0, suite0):
    for q in by_kind(world0, QuestionKind.SINGLE_HOP)[:3]:
        result = run_plans(q, ["AG"], suite0)
        assert result.f1 == 1.0
        assert result.metrics.retrieval_calls == 0


def test_noisy_single_hop_solved_with_rewrite(world0, suite0):
    for q in by_kind(world0, QuestionKind.NOISY_SINGLE_HOP)[:3]:
        result = run_plans(q, ["QR, RA, AG"], suite0)
        assert result.f1 == 1.0
        assert result.metrics.retrieval_calls == 1


def test_serial_2hop_solved_by_serial_decomposition(world0, suite0):
    for q in by_kind(world0, QuestionKind.SERIAL_2HOP)[:3]:
        result = run_plans(q, ["QDS", "RA, AG", "RA, AG", "AS"], suite0)
        assert result.f1 == 1.0
        assert result.metrics.turn_count == 4
        assert result.predicted_answer == q.golds[0]


def test_serial_2hop_fails_without_decomposition(world0, suite0):
    for q in by_kind(world0, QuestionKind.SERIAL_2HOP)[:3]:
        assert run_plans(q, ["AG"], suite0).f1 == 0.0
        assert run_plans(q, ["RA, AG"], suite0).f1 == 0.0


def test_parallel_compare_solved_by_parallel_decomposition(world0, suite0):
    for q in by_kind(world0, QuestionKind.PARALLEL_COMPARE)[:3]:
        result = run_plans(q, ["QDP", "RA, AG", "RA, AG", "AS"], suite0)
        assert result.f1 == 1.0
        # decomposition turn, one shared slot turn, summarize turn
        assert result.metrics.turn_count == 3


def test_parallel_compare_fails_from_memory(world0, suite0):
    for q in by_kind(world0, QuestionKind.PARALLEL_COMPARE)[:3]:
        assert run_plans(q, ["AG"], suite0).f1 == 0.0


def test_compare_slots_fail_without_retrieval(world0, suite0):
    # rating lookups are multi-hop slots: memory alone returns the flipping
    # distractors, so the summarized comparison lands wrong whenever both
    # distractors actually flip
    lo, hi = _rating_bounds(world0)
    flippable = [
        q
        for q in by_kind(world0, QuestionKind.PARALLEL_COMPARE)
        if min(int(f.obj) for f in q.slot_facts) > lo
        and max(int(f.obj) for f in q.slot_facts) < hi
    ]
    assert flippable, "world has no compare pair away from the rating extremes"
    result = run_plans(flippable[0], ["QDP", "AG", "AG", "AS"], suite0)
    assert result.f1 == 0.0


# ------------------------------------------------- scripted usage pricing

def test_scripted_usage_prices_back_to_nominal_costs(world0):
    from planrag.executors import template_for

    backend = ScriptedBackend(world0)
    pricing = scripted_pricing_table()
    q = by_kind(world0, QuestionKind.SINGLE_HOP)[0]
    messages = template_for(ExecutorId.AG).render(question=q.text, documents="No documents.")
    reply = backend.complete(ExecutorId.AG, messages)
    usd = pricing.usage_to_usd(reply.usage, SCRIPTED_MODEL)
    assert usd == DEFAULT_COSTS.per_executor[ExecutorId.AG]


def test_rollout_usage_prices_to_plan_cost_sum(world0, suite0):
    pricing = scripted_pricing_table()
    q = by_kind(world0, QuestionKind.NOISY_SINGLE_HOP)[0]
    result = run_plans(q, ["QR, RA, DS, AG"], suite0)
    usd = pricing.usage_to_usd(result.metrics.usage, SCRIPTED_MODEL)
    table = DEFAULT_COSTS.per_executor
    expected = table[ExecutorId.QR] + table[ExecutorId.DS] + table[ExecutorId.AG]
    assert usd == pytest.approx(expected, rel=1e-12)


def test_scripted_rewriter_strips_noise(world0):
    backend = ScriptedBackend(world0)
    q = by_kind(world0, QuestionKind.NOISY_SINGLE_HOP)[0]
    from planrag.executors import rewrite_query

    query, usage = rewrite_query(q.text, backend)
    assert query == q.clean_text
    assert usage != TokenUsage(0, 0)
