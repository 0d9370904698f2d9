// Copyright 2026 The voiceprivacy Authors
// SPDX-License-Identifier: Apache-2.0

#include <map>
#include <string>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "testutil.hpp"
#include "vp/selection.hpp"

using Catch::Matchers::WithinAbs;

TEST_CASE("draw_target is uniform over the effective pool") {
  vp::SelectionPolicy policy;
  policy.source_pool = {"s"};
  policy.target_pool = {"t0", "t1", "t2", "t3", "t4"};
  policy.rng_seed = 1234;

  const std::size_t n = 10000;
  std::map<std::string, std::size_t> counts;
  for (std::uint64_t i = 0; i < n; ++i) {
    counts[vp::draw_target(policy, "s", i)]++;
  }
  REQUIRE(counts.size() == 5);
  for (const auto& [id, c] : counts) {
    CHECK_THAT(double(c) / double(n), WithinAbs(0.2, 0.02));
  }
}

TEST_CASE("draw_target never selects the source") {
  vp::SelectionPolicy policy;
  policy.target_pool = {"a", "b", "c"};
  policy.rng_seed = 7;
  for (std::uint64_t i = 0; i < 2000; ++i) {
    CHECK(vp::draw_target(policy, "b", i) != "b");
  }
}

TEST_CASE("draw_target handles degenerate pools") {
  vp::SelectionPolicy policy;
  policy.target_pool = {"only"};
  CHECK_THROWS_MATCHES(vp::draw_target(policy, "only", 0), vp::Error,
                       vptest::ErrorCodeIs(vp::ErrorCode::EmptyEffectiveTargetPool));

  SECTION("a singleton pool works for foreign sources") {
    CHECK(vp::draw_target(policy, "someoneelse", 0) == "only");
  }
  SECTION("duplicate pool entries collapse before drawing") {
    policy.target_pool = {"x", "x", "y", "y"};
    std::map<std::string, std::size_t> counts;
    for (std::uint64_t i = 0; i < 4000; ++i) counts[vp::draw_target(policy, "z", i)]++;
    CHECK_THAT(double(counts["x"]) / 4000.0, WithinAbs(0.5, 0.03));
  }
}

TEST_CASE("draw_target is a pure function of seed and ordinal") {
  vp::SelectionPolicy policy;
  policy.target_pool = {"a", "b", "c", "d"};
  policy.rng_seed = 99;

  std::vector<std::string> first;
  for (std::uint64_t i = 0; i < 50; ++i) first.push_back(vp::draw_target(policy, "a", i));
  std::vector<std::string> second;
  for (std::uint64_t i = 0; i < 50; ++i) second.push_back(vp::draw_target(policy, "a", i));
  CHECK(first == second);

  policy.rng_seed = 100;
  std::vector<std::string> reseeded;
  for (std::uint64_t i = 0; i < 50; ++i) reseeded.push_back(vp::draw_target(policy, "a", i));
  CHECK(first != reseeded);
}

TEST_CASE("validate_policy rejects unusable pools") {
  const auto& fx = vptest::trained3();
  vp::SelectionPolicy policy;

  CHECK_THROWS_MATCHES(vp::validate_policy(policy, fx.models.sid), vp::Error,
                       vptest::ErrorCodeIs(vp::ErrorCode::ConfigInvalid));

  policy.source_pool = {"spk00"};
  policy.target_pool = {"spk01", "stranger"};
  CHECK_THROWS_MATCHES(vp::validate_policy(policy, fx.models.sid), vp::Error,
                       vptest::ErrorCodeIs(vp::ErrorCode::ConfigInvalid));

  policy.target_pool = {"spk01", "spk02"};
  CHECK_NOTHROW(vp::validate_policy(policy, fx.models.sid));
}

TEST_CASE("select maps to the closest source and draws a distinct target") {
  const auto& fx = vptest::trained3();
  vp::SelectionPolicy policy;
  policy.source_pool = fx.models.sid.speakers();
  policy.target_pool = fx.models.sid.speakers();
  policy.rng_seed = 5;

  std::uint64_t expect_ordinal = 0;
  for (const auto& [speaker, clips] : fx.test) {
    for (const auto& clip : clips) {
      const vp::FeatureMatrix f = vp::extract_features(clip, fx.cfg.features);
      const vp::SelectionDecision d = vp::select(policy, fx.models.sid, f, clip.id);

      CHECK(d.utterance_id == clip.id);
      CHECK(d.source_id == speaker);
      CHECK(d.target_id != d.source_id);
      CHECK(d.draw_index == expect_ordinal++);
      CHECK_FALSE(d.low_confidence);
      REQUIRE_FALSE(d.source_scores.empty());
      CHECK(d.source_scores.front().speaker_id == d.source_id);
      for (std::size_t i = 1; i < d.source_scores.size(); ++i) {
        CHECK(d.source_scores[i - 1].llr >= d.source_scores[i].llr);
      }
    }
  }
  CHECK(policy.rng_state == expect_ordinal);
}

TEST_CASE("the source decision is independent of the selection seed") {
  const auto& fx = vptest::trained3();
  const vp::AudioClip& clip = fx.test.at("spk01").front();
  const vp::FeatureMatrix f = vp::extract_features(clip, fx.cfg.features);

  std::vector<std::string> sources;
  for (std::uint64_t seed : {1ull, 77ull, 4242ull}) {
    vp::SelectionPolicy policy;
    policy.source_pool = fx.models.sid.speakers();
    policy.target_pool = fx.models.sid.speakers();
    policy.rng_seed = seed;
    sources.push_back(vp::select(policy, fx.models.sid, f, clip.id).source_id);
  }
  CHECK(sources[0] == sources[1]);
  CHECK(sources[1] == sources[2]);
}

TEST_CASE("confidence floor flags but does not reroute") {
  const auto& fx = vptest::trained3();
  const vp::AudioClip& clip = fx.test.at("spk02").front();
  const vp::FeatureMatrix f = vp::extract_features(clip, fx.cfg.features);

  vp::SelectionPolicy relaxed;
  relaxed.source_pool = fx.models.sid.speakers();
  relaxed.target_pool = fx.models.sid.speakers();
  const vp::SelectionDecision base = vp::select(relaxed, fx.models.sid, f, clip.id);
  CHECK_FALSE(base.low_confidence);

  vp::SelectionPolicy strict = relaxed;
  strict.rng_state = 0;
  strict.confidence_floor = 1e9;  // impossible bar
  const vp::SelectionDecision flagged = vp::select(strict, fx.models.sid, f, clip.id);
  CHECK(flagged.low_confidence);
  CHECK(flagged.source_id == base.source_id);
  CHECK(flagged.target_id == base.target_id);  // same seed, same ordinal
}

TEST_CASE("audit records serialize with the documented keys") {
  vp::SelectionDecision d;
  d.utterance_id = "utt42";
  d.source_id = "spk00";
  d.target_id = "spk02";
  d.draw_index = 9;
  d.low_confidence = true;

  const nlohmann::json j = vp::audit_record_json(d);
  CHECK(j.at("utt") == "utt42");
  CHECK(j.at("source") == "spk00");
  CHECK(j.at("target") == "spk02");
  CHECK(j.at("ordinal") == 9);
  CHECK(j.at("low_confidence") == true);
  CHECK(j.size() == 5);  // nothing else leaks into the log

  const std::string line = vp::audit_log({d});
  CHECK(line.back() == '\n');
  CHECK(nlohmann::json::parse(line.substr(0, line.size() - 1)) == j);
}

TEST_CASE("audit log replay reproduces every decision") {
  const auto& fx = vptest::trained3();
  vp::SelectionPolicy policy;
  policy.source_pool = fx.models.sid.speakers();
  policy.target_pool = fx.models.sid.speakers();
  policy.rng_seed = 31337;

  std::vector<vp::SelectionDecision> decisions;
  for (const auto& [speaker, clips] : fx.test) {
    for (const auto& clip : clips) {
      const vp::FeatureMatrix f = vp::extract_features(clip, fx.cfg.features);
      decisions.push_back(vp::select(policy, fx.models.sid, f, clip.id));
    }
  }

  vptest::ScopedDir dir("audit");
  const auto path = dir.path / "audit.jsonl";
  vp::write_audit_log(decisions, path);
  const std::vector<vp::AuditRecord> records = vp::read_audit_log(path);

  REQUIRE(records.size() == decisions.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(records[i].utt == decisions[i].utterance_id);
    CHECK(records[i].source == decisions[i].source_id);
    CHECK(records[i].target == decisions[i].target_id);
    CHECK(records[i].ordinal == decisions[i].draw_index);
    CHECK(records[i].low_confidence == decisions[i].low_confidence);

    // Replay: the logged ordinal and seed regenerate the logged target.
    CHECK(vp::draw_target(policy, records[i].source, records[i].ordinal) ==
          records[i].target);
  }

  SECTION("corrupt lines are rejected") {
    std::ofstream(path, std::ios::app) << "{not json\n";
    CHECK_THROWS_MATCHES(vp::read_audit_log(path), vp::Error,
                         vptest::ErrorCodeIs(vp::ErrorCode::ModelFormatInvalid));
  }
  SECTION("missing files are IO failures") {
    CHECK_THROWS_MATCHES(vp::read_audit_log(dir.path / "none.jsonl"), vp::Error,
                         vptest::ErrorCodeIs(vp::ErrorCode::IoFailure));
  }
}
