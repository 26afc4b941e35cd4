import json
import multiprocessing

import numpy as np
import pytest

from mvmlfs.errors import (
    BatchTooLarge,
    MalformedResponse,
    MissingPairInResponse,
    TransportError,
)
from mvmlfs.semantic import (
    HttpChatScorer,
    MockScorer,
    PromptSpec,
    ScoreCache,
    SemanticScoreSet,
    _parse_response,
    build_prompt,
    mock_score,
    pair_key,
    score_dataset,
    score_pairs,
)
from mvmlfs.synth import make_toy_semantic

from conftest import DATA_DIR, GOLDEN_DIR


def fl_spec(features, labels, views=None, max_batch=20):
    return PromptSpec(
        pair_kind="feature-label",
        label_entries=labels,
        feature_entries=features,
        view_entries=views or [],
        max_batch=max_batch,
    )


class TestBuildPrompt:
    def test_contains_descriptions_and_task(self):
        spec = fl_spec(
            [(0, "puppy")], [(0, "dog")], views=[(0, "text", "caption words")]
        )
        prompt = build_prompt(spec)
        assert "puppy" in prompt
        assert "dog" in prompt
        assert "[0, 1]" in prompt
        # component order: role, views, features, labels, task
        assert (
            prompt.index("data scientist")
            < prompt.index("Views:")
            < prompt.index("Features:")
            < prompt.index("Labels:")
            < prompt.index("Task:")
        )

    def test_deterministic_bytes(self):
        spec_a = fl_spec([(0, "puppy")], [(0, "dog"), (1, "cat")])
        spec_b = fl_spec([(0, "puppy")], [(0, "dog"), (1, "cat")])
        assert build_prompt(spec_a).encode() == build_prompt(spec_b).encode()

    def test_batch_too_large(self):
        features = [(i, f"feature {i}") for i in range(21)]
        with pytest.raises(BatchTooLarge):
            build_prompt(fl_spec(features, [(0, "dog")], max_batch=20))

    def test_pseudo_named_feature_appears(self, toy_manifest):
        from mvmlfs.dataset import load_dataset

        manifest, _ = toy_manifest
        dataset, catalog = load_dataset(manifest)
        # view "text", local feature 4 has a bare-ish name replaced upstream
        text = catalog.feature_texts[0][4]
        spec = fl_spec([(4, text)], list(enumerate(catalog.label_texts)))
        assert text in build_prompt(spec)


class TestMockScore:
    def test_identical(self):
        assert mock_score("dog", "dog") == 1.0
        assert (
            mock_score("color histogram of the image", "color histogram of the image")
            == 1.0
        )

    def test_disjoint(self):
        assert mock_score("dog", "histogram") == 0.0

    def test_hand_enumerated_jaccard(self):
        assert mock_score("red color histogram", "color of sky") == pytest.approx(0.2)

    def test_synonym_canonicalization(self):
        assert mock_score("puppy playing", "dog", {"puppy": "dog"}) == pytest.approx(0.5)

    def test_symmetry(self):
        rng = np.random.default_rng(0)
        words = ["dog", "cat", "eye", "fur", "wheel", "red", "sky"]
        for _ in range(100):
            a = " ".join(rng.choice(words, size=rng.integers(1, 5)))
            b = " ".join(rng.choice(words, size=rng.integers(1, 5)))
            assert mock_score(a, b) == mock_score(b, a)


class TestScoreCache:
    def test_round_trip(self, tmp_path):
        cache = ScoreCache(tmp_path / "c.jsonl")
        cache.put("k1", 0.5, "mock")
        assert cache.get("k1") == 0.5
        reloaded = ScoreCache(tmp_path / "c.jsonl")
        assert reloaded.get("k1") == 0.5

    def test_unknown_key_absent(self, tmp_path):
        cache = ScoreCache(tmp_path / "c.jsonl")
        assert cache.get("nope") is None

    def test_corrupt_entry_skipped(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text(
            '{"key": "good", "score": 0.25, "model": "m", "timestamp": 0}\n'
            "NOT JSON AT ALL\n",
            encoding="utf-8",
        )
        with pytest.warns(UserWarning, match="corrupt"):
            cache = ScoreCache(path)
        assert cache.get("good") == 0.25

    def test_concurrent_appends(self, tmp_path):
        path = tmp_path / "c.jsonl"
        procs = [
            multiprocessing.Process(target=_append_keys, args=(str(path), prefix))
            for prefix in ("a", "b")
        ]
        for p in procs:
            p.start()
        for p in procs:
            p.join()
        cache = ScoreCache(path)
        for prefix in ("a", "b"):
            for i in range(50):
                assert cache.get(f"{prefix}{i}") == pytest.approx(i / 100)


def _append_keys(path, prefix):
    cache = ScoreCache(path)
    for i in range(50):
        cache.put(f"{prefix}{i}", i / 100, "mock")


class TestScorePairs:
    def test_mock_scores_and_cache_write_through(self, tmp_path):
        cache = ScoreCache(tmp_path / "c.jsonl")
        spec = fl_spec([(7, "puppy")], [(0, "dog"), (1, "cat")])
        result = score_pairs(MockScorer({"puppy": "dog"}), spec, cache)
        assert result.fl[(7, 0)] == 1.0
        assert result.fl[(7, 1)] == 0.0
        assert len(cache) == 2

    def test_cache_hit_bypasses_agent(self, tmp_path):
        calls = []

        class CountingScorer(MockScorer):
            def score_pair(self, a, b):
                calls.append((a, b))
                return super().score_pair(a, b)

        cache = ScoreCache(tmp_path / "c.jsonl")
        spec = fl_spec([(7, "puppy")], [(0, "dog")])
        agent = CountingScorer()
        score_pairs(agent, spec, cache)
        assert len(calls) == 1
        score_pairs(agent, spec, cache)
        assert len(calls) == 1  # second pass served from cache

    def test_out_of_range_scores_clamped(self, tmp_path):
        class WildScorer:
            model = "wild"

            def score_pair(self, a, b):
                return 1.7

        spec = fl_spec([(0, "x")], [(0, "y")])
        with pytest.warns(UserWarning, match="clamped"):
            result = score_pairs(WildScorer(), spec)
        assert result.fl[(0, 0)] == 1.0

    def test_label_label_stored_unordered(self):
        spec = PromptSpec(
            pair_kind="label-label",
            label_entries=[(0, "dog animal"), (1, "cat animal"), (2, "car")],
        )
        result = score_pairs(MockScorer(), spec)
        assert set(result.ll) == {(0, 1), (0, 2), (1, 2)}
        assert result.ll[(0, 1)] == pytest.approx(1 / 3)


class FakeChatAgent:
    """Scripted chat agent: returns queued responses in order."""

    model = "fake-llm"

    def __init__(self, responses):
        self.responses = list(responses)
        self.prompts = []

    def complete(self, prompt):
        self.prompts.append(prompt)
        if not self.responses:
            raise AssertionError("no scripted responses left")
        return self.responses.pop(0)


class TestChatPath:
    def test_batch_parsed(self):
        spec = fl_spec([(5, "puppy")], [(0, "dog"), (1, "cat")])
        agent = FakeChatAgent(
            ['[{"feature":1,"label":1,"score":0.9},{"feature":1,"label":2,"score":0.2}]']
        )
        result = score_pairs(agent, spec)
        assert result.fl == {(5, 0): 0.9, (5, 1): 0.2}

    def test_malformed_then_strict_retry(self):
        spec = fl_spec([(5, "puppy")], [(0, "dog")])
        agent = FakeChatAgent(
            ["I think the score is high.", '[{"feature":1,"label":1,"score":0.8}]']
        )
        result = score_pairs(agent, spec)
        assert result.fl == {(5, 0): 0.8}
        assert "previous answer could not be parsed" in agent.prompts[1]

    def test_twice_malformed_raises(self):
        spec = fl_spec([(5, "puppy")], [(0, "dog")])
        agent = FakeChatAgent(["prose", "more prose"])
        with pytest.raises(MalformedResponse):
            score_pairs(agent, spec)

    def test_missing_pair_requeried_individually(self):
        spec = fl_spec([(5, "puppy"), (6, "bone")], [(0, "dog")])
        agent = FakeChatAgent(
            [
                '[{"feature":1,"label":1,"score":0.9}]',  # second feature missing
                '[{"feature":1,"label":1,"score":0.4}]',  # singleton re-query
            ]
        )
        result = score_pairs(agent, spec)
        assert result.fl == {(5, 0): 0.9, (6, 0): 0.4}

    def test_missing_after_requery_raises(self):
        spec = fl_spec([(5, "puppy"), (6, "bone")], [(0, "dog")])
        agent = FakeChatAgent(['[{"feature":1,"label":1,"score":0.9}]', "[]"])
        with pytest.raises(MissingPairInResponse):
            score_pairs(agent, spec)

    def test_transcript_fixture_matches_golden(self):
        fixture = json.loads(
            (DATA_DIR / "transcript_feature_label.json").read_text(encoding="utf-8")
        )
        spec = PromptSpec(
            pair_kind=fixture["pair_kind"],
            label_entries=[tuple(e) for e in fixture["label_entries"]],
            feature_entries=[tuple(e) for e in fixture["feature_entries"]],
            view_entries=[tuple(e) for e in fixture["view_entries"]],
        )
        parsed = _parse_response(fixture["response"], spec)
        result = SemanticScoreSet()
        for (a, b), score in parsed.items():
            result.add(spec.pair_kind, a, b, score, "fake-llm", "fixture")
        golden = json.loads(
            (GOLDEN_DIR / "transcript_feature_label_scores.json").read_text(encoding="utf-8")
        )
        assert sorted([a, b, s] for (a, b), s in result.fl.items()) == golden["fl"]
        assert list(result.vlw) == []
        assert list(result.ll) == []


class TestHttpChatScorer:
    def test_retries_then_succeeds(self):
        attempts = []

        def flaky_transport(payload):
            attempts.append(payload)
            if len(attempts) < 3:
                raise TransportError("connection reset")
            return {"choices": [{"message": {"content": "[]"}}]}

        scorer = HttpChatScorer(
            endpoint="http://example.invalid",
            model="m",
            transport=flaky_transport,
            backoff_seconds=0.0,
        )
        assert scorer.complete("hi") == "[]"
        assert len(attempts) == 3

    def test_gives_up_after_max_retries(self):
        def dead_transport(payload):
            raise TransportError("refused")

        scorer = HttpChatScorer(
            endpoint="http://example.invalid",
            model="m",
            transport=dead_transport,
            backoff_seconds=0.0,
            max_retries=2,
        )
        with pytest.raises(TransportError, match="giving up"):
            scorer.complete("hi")

    def test_temperature_zero_in_payload(self):
        seen = {}

        def capture(payload):
            seen.update(payload)
            return {"choices": [{"message": {"content": "[]"}}]}

        HttpChatScorer(
            endpoint="http://example.invalid", model="m", transport=capture
        ).complete("hi")
        assert seen["temperature"] == 0.0


class TestScoreDataset:
    def test_covers_all_pairs_deterministically(self, toy_semantic):
        dataset, catalog, synonyms = toy_semantic
        agent = MockScorer(synonyms=synonyms)
        first = score_dataset(dataset, catalog, agent)
        second = score_dataset(dataset, catalog, agent)
        d, c, v = dataset.n_features, dataset.n_labels, dataset.n_views
        assert len(first.fl) == d * c
        assert len(first.vlw) == v * c
        assert len(first.ll) == c * (c - 1) // 2
        assert first.fl == second.fl
        assert first.vlw == second.vlw
        assert first.ll == second.ll

    def test_all_scores_in_unit_interval(self, toy_semantic):
        dataset, catalog, synonyms = toy_semantic
        scores = score_dataset(dataset, catalog, MockScorer(synonyms=synonyms))
        for group in (scores.fl, scores.vlw, scores.ll):
            assert all(0.0 <= s <= 1.0 for s in group.values())

    def test_pair_key_stable(self):
        assert pair_key("m", "feature-label", "a", "b") == pair_key(
            "m", "feature-label", "a", "b"
        )
        assert pair_key("m", "feature-label", "a", "b") != pair_key(
            "m", "label-label", "a", "b"
        )
