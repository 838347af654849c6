"""Metadata feature extraction, statistics, and normalization."""

import dataclasses
import json
from datetime import timedelta
from pathlib import Path

import numpy as np
import pytest

from conftest import T0, build_thread, build_tweet, build_user
from rpdnn.errors import CorpusError
from rpdnn.features import (
    FEATURE_NAMES,
    MetadataVector,
    compute_stats,
    extract_features,
    load_stats,
    normalize,
    save_stats,
    stats_to_obj,
)

GOLDEN = Path(__file__).parent / "data" / "golden_stats.json"


def idx(name: str) -> int:
    return FEATURE_NAMES.index(name)


def feat(reply, source) -> np.ndarray:
    return extract_features(reply, source).values


class TestFeatureDictionary:
    def test_exactly_27_features(self):
        assert len(FEATURE_NAMES) == 27
        assert len(set(FEATURE_NAMES)) == 27

    def test_user_features_precede_tweet_features(self):
        # 16 author-derived columns, then 11 tweet-derived columns
        assert idx("is_source_user") == 15
        assert idx("retweet_count") == 16
        assert idx("has_profile_description") == 26


class TestExtractFeatures:
    def test_follow_ratio(self):
        source = build_tweet("s")
        reply = build_tweet("r", user=build_user("u", followers=100, followings=24))
        assert feat(reply, source)[idx("follow_ratio")] == pytest.approx(4.0)

    def test_follow_ratio_v2_zero_when_no_followers(self):
        source = build_tweet("s")
        reply = build_tweet("r", user=build_user("u", followers=0, followings=0))
        assert feat(reply, source)[idx("follow_ratio_v2")] == 0.0

    def test_response_time_in_minutes(self):
        source = build_tweet("s", ts=T0)
        reply = build_tweet("r", ts=T0 + timedelta(seconds=90))
        assert feat(reply, source)[idx("response_time_decay")] == pytest.approx(1.5)

    def test_account_age_floored_in_days_with_minimum_one(self):
        source = build_tweet("s")
        young = build_user("u", account_created_at=T0 - timedelta(hours=5))
        old = build_user("v", account_created_at=T0 - timedelta(days=10, hours=23))
        assert feat(build_tweet("r", user=young), source)[idx("account_age")] == 1.0
        assert feat(build_tweet("q", user=old), source)[idx("account_age")] == 10.0

    def test_activity_rates_use_age_plus_one(self):
        source = build_tweet("s")
        user = build_user("u", posts_count=300, followings=60, favourites_count=90,
                          account_created_at=T0 - timedelta(days=2))
        v = feat(build_tweet("r", user=user), source)
        assert v[idx("engagement")] == pytest.approx(100.0)
        assert v[idx("following_rate")] == pytest.approx(20.0)
        assert v[idx("favourites_rate")] == pytest.approx(30.0)

    def test_boolean_features_encoded_01(self):
        source = build_tweet("s")
        user = build_user("u", verified=True, geo_enabled=False,
                          has_profile_background_image=True, description_text="")
        v = feat(build_tweet("r", user=user, has_native_media=True), source)
        assert v[idx("is_verified")] == 1.0
        assert v[idx("geo_enabled")] == 0.0
        assert v[idx("has_image")] == 1.0
        assert v[idx("has_native_media")] == 1.0
        assert v[idx("has_profile_description")] == 0.0

    def test_question_mark_checked_on_raw_text(self):
        source = build_tweet("s")
        v1 = feat(build_tweet("r", text="is this real?"), source)
        v2 = feat(build_tweet("q", text="this is real."), source)
        assert v1[idx("has_question")] == 1.0
        assert v2[idx("has_question")] == 0.0

    def test_duplicate_detection_uses_preprocessed_tokens(self):
        source = build_tweet("s", text="Big fire downtown tonight")
        dupe = build_tweet("r", text="big FIRE downtown tonight!!")
        fresh = build_tweet("q", text="big fire downtown yesterday")
        assert feat(dupe, source)[idx("is_duplicate")] == 1.0
        assert feat(fresh, source)[idx("is_duplicate")] == 0.0

    def test_content_length_ignores_mentions_and_urls(self):
        source = build_tweet("s")
        reply = build_tweet("r", text="@origin totally fake https://t.co/x claim")
        assert feat(reply, source)[idx("content_length")] == 3.0

    def test_description_length_in_words_name_length_in_chars(self):
        source = build_tweet("s")
        user = build_user("u", description_text="three short words",
                          display_name="Ann")
        v = feat(build_tweet("r", user=user), source)
        assert v[idx("description_length")] == 3.0
        assert v[idx("profile_name_length")] == 3.0

    def test_is_source_user(self):
        shared = build_user("same")
        source = build_tweet("s", user=shared)
        v_same = feat(build_tweet("r", user=shared), source)
        v_other = feat(build_tweet("q", user=build_user("other")), source)
        assert v_same[idx("is_source_user")] == 1.0
        assert v_other[idx("is_source_user")] == 0.0

    def test_url_features(self):
        source = build_tweet("s")
        v = feat(build_tweet("r", urls=("https://a.io", "https://b.io")), source)
        assert v[idx("has_url")] == 1.0
        assert v[idx("url_count")] == 2.0

    def test_deterministic(self):
        source = build_tweet("s")
        reply = build_tweet("r")
        a = extract_features(reply, source).values
        b = extract_features(reply, source).values
        assert np.array_equal(a, b)

    def test_missing_profile_names_tweet(self):
        source = build_tweet("s")
        broken = dataclasses.replace(build_tweet("r77"), author=None)
        with pytest.raises(CorpusError, match="r77"):
            extract_features(broken, source)

    def test_all_values_finite_for_extreme_profiles(self):
        source = build_tweet("s")
        user = build_user("u", followers=0, followings=0, posts_count=0,
                          favourites_count=0, description_text="")
        v = feat(build_tweet("r", user=user, text=""), source)
        assert np.all(np.isfinite(v))


class TestMetadataVector:
    def test_wrong_length_rejected(self):
        with pytest.raises(ValueError, match="27"):
            MetadataVector(tweet_id="x", values=np.zeros(5))

    def test_non_finite_rejected(self):
        bad = np.zeros(27)
        bad[3] = np.inf
        with pytest.raises(ValueError, match="finite"):
            MetadataVector(tweet_id="x", values=bad)


def _vectors_from(rows: np.ndarray) -> list:
    return [MetadataVector(tweet_id=f"v{i}", values=row) for i, row in enumerate(rows)]


class TestComputeStats:
    def test_constant_feature(self):
        rows = np.full((4, 27), 5.0)
        st = compute_stats(_vectors_from(rows))
        assert st.n == 4
        np.testing.assert_allclose(st.mean, 5.0)
        np.testing.assert_allclose(st.std, 0.0)

    def test_population_std(self):
        rows = np.zeros((2, 27))
        rows[1, 0] = 2.0
        st = compute_stats(_vectors_from(rows))
        assert st.mean[0] == pytest.approx(1.0)
        assert st.std[0] == pytest.approx(1.0)  # divide by n, not n-1

    def test_min_max(self):
        rng = np.random.default_rng(42)
        rows = rng.normal(size=(50, 27))
        st = compute_stats(_vectors_from(rows))
        np.testing.assert_allclose(st.min, rows.min(axis=0))
        np.testing.assert_allclose(st.max, rows.max(axis=0))
        assert np.all(st.min <= st.mean) and np.all(st.mean <= st.max)

    def test_empty_list_rejected(self):
        with pytest.raises(CorpusError, match="empty"):
            compute_stats([])


class TestNormalize:
    def test_centering_and_scaling(self):
        rng = np.random.default_rng(7)
        rows = rng.normal(size=(30, 27))
        st = compute_stats(_vectors_from(rows))
        at_mean = normalize(MetadataVector("m", st.mean.copy()), st)
        np.testing.assert_allclose(at_mean.values, 0.0, atol=1e-12)
        plus_one = normalize(MetadataVector("p", st.mean + st.std), st)
        np.testing.assert_allclose(plus_one.values, 1.0, atol=1e-9)

    def test_constant_feature_maps_to_zero(self):
        rows = np.full((3, 27), 9.0)
        st = compute_stats(_vectors_from(rows))
        out = normalize(MetadataVector("x", np.full(27, 123.0)), st)
        np.testing.assert_allclose(out.values, 0.0)

    def test_self_normalization_gives_unit_stats(self):
        rng = np.random.default_rng(3)
        for trial in range(5):
            rows = rng.normal(loc=rng.normal(), scale=rng.uniform(0.5, 4.0),
                              size=(64, 27))
            st = compute_stats(_vectors_from(rows))
            normed = np.stack(
                [normalize(v, st).values for v in _vectors_from(rows)]
            )
            assert np.all(np.abs(normed.mean(axis=0)) < 1e-9)
            live = st.std > 0
            np.testing.assert_allclose(normed[:, live].std(axis=0), 1.0, atol=1e-6)

    def test_real_thread_vectors_normalize_cleanly(self):
        threads = [build_thread(f"s{i}", n_replies=5) for i in range(6)]
        vectors = [
            extract_features(r, t.source) for t in threads for r in t.replies
        ]
        st = compute_stats(vectors)
        normed = np.stack([normalize(v, st).values for v in vectors])
        assert np.all(np.abs(normed.mean(axis=0)) < 1e-9)


class TestStatsFile:
    def test_round_trip_preserves_values(self, tmp_path):
        rng = np.random.default_rng(11)
        st = compute_stats(_vectors_from(rng.normal(size=(20, 27))))
        path = tmp_path / "stats.json"
        save_stats(path, st)
        back = load_stats(path)
        assert back.n == st.n
        np.testing.assert_array_equal(back.mean, st.mean)
        np.testing.assert_array_equal(back.std, st.std)

    def test_golden_fixture_loads_with_canonical_names(self):
        st = load_stats(GOLDEN)
        assert st.n == 214606
        assert st.mean[idx("account_age")] == pytest.approx(1197.2359)
        assert st.std[idx("account_age")] == pytest.approx(686.5547)
        assert st.max[idx("profile_name_length")] == 50.0
        assert st.min[idx("account_age")] == 1.0

    def test_golden_fixture_round_trips_losslessly(self, tmp_path):
        st = load_stats(GOLDEN)
        path = tmp_path / "again.json"
        save_stats(path, st)
        back = load_stats(path)
        for field in ("mean", "std", "min", "max"):
            np.testing.assert_array_equal(getattr(back, field), getattr(st, field))
        original = json.loads(GOLDEN.read_text())
        rewritten = json.loads(path.read_text())
        assert rewritten == original

    def test_name_order_mismatch_rejected(self, tmp_path):
        obj = stats_to_obj(compute_stats(_vectors_from(np.zeros((2, 27)))))
        obj["features"][0], obj["features"][1] = obj["features"][1], obj["features"][0]
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(obj), encoding="utf-8")
        with pytest.raises(CorpusError, match="order"):
            load_stats(path)

    def test_wrong_feature_count_rejected(self, tmp_path):
        obj = stats_to_obj(compute_stats(_vectors_from(np.zeros((2, 27)))))
        obj["features"] = obj["features"][:-1]
        path = tmp_path / "short.json"
        path.write_text(json.dumps(obj), encoding="utf-8")
        with pytest.raises(CorpusError, match="27"):
            load_stats(path)
