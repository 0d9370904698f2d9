// Copyright 2026 The voiceprivacy Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// vpcli: train / convert / identify / eval / bench / synth.
//
// Exit codes
//   0  success (eval: delta constraint met)
//   1  eval: delta constraint violated
//   2  manifest unreadable or malformed
//   3  insufficient data (fewer than two speakers, too little voiced audio)
//   4  audio-format error (not a WAV, bad encoding, wrong sample rate)
//   5  transcription service unreachable or timed out
//   70 unexpected internal error
//   >=100 command-line usage errors (CLI11)

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vp/eval.hpp"
#include "vp/gateway.hpp"
#include "vp/synth.hpp"

namespace {

constexpr int kExitDeltaViolated = 1;
constexpr int kExitManifest = 2;
constexpr int kExitInsufficientData = 3;
constexpr int kExitAudioFormat = 4;
constexpr int kExitAsrUnreachable = 5;
constexpr int kExitInternal = 70;

int map_error(const vp::Error& e) {
  switch (e.code()) {
    case vp::ErrorCode::ManifestInvalid:
      return kExitManifest;
    case vp::ErrorCode::InsufficientVoicedData:
    case vp::ErrorCode::TooFewFrames:
    case vp::ErrorCode::EmptyList:
      return kExitInsufficientData;
    case vp::ErrorCode::NotWav:
    case vp::ErrorCode::UnsupportedEncoding:
    case vp::ErrorCode::MultiChannel:
    case vp::ErrorCode::SampleRateMismatch:
      return kExitAudioFormat;
    case vp::ErrorCode::AsrUnavailable:
    case vp::ErrorCode::TranscriptionTimeout:
      return kExitAsrUnreachable;
    default:
      return kExitInternal;
  }
}

void write_effective_config(const CLI::App& cmd, const std::filesystem::path& dir) {
  std::ofstream out(dir / "effective_config.ini", std::ios::binary);
  if (out) out << cmd.config_to_str(true, false);
}

std::vector<vp::ManifestEntry> load_manifest_or_die(const std::filesystem::path& path) {
  try {
    return vp::load_manifest(path);
  } catch (const vp::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    std::exit(kExitManifest);
  }
}

struct CommonModelArgs {
  std::filesystem::path model_dir;
  int sample_rate = 16000;

  vp::FeatureConfig features() const {
    vp::FeatureConfig cfg;
    cfg.sample_rate = sample_rate;
    return cfg;
  }
};

vp::SelectionPolicy make_policy(const vp::SpeakerRegistry& registry,
                                std::vector<std::string> source_pool,
                                std::vector<std::string> target_pool,
                                std::uint64_t seed) {
  vp::SelectionPolicy policy;
  policy.source_pool = source_pool.empty() ? registry.speakers() : std::move(source_pool);
  policy.target_pool = target_pool.empty() ? registry.speakers() : std::move(target_pool);
  policy.rng_seed = seed;
  return policy;
}

// --- train ---

struct TrainArgs {
  std::filesystem::path manifest;
  std::filesystem::path out_dir;
  int components = 32;
  std::uint64_t seed = 1234;
  double relevance = 16.0;
  double min_voiced_s = 10.0;
  int sample_rate = 16000;
};

int run_train(const CLI::App& cmd, const TrainArgs& args) {
  const std::vector<vp::ManifestEntry> rows = load_manifest_or_die(args.manifest);
  const std::vector<vp::ManifestEntry> train_rows = vp::filter_split(rows, "train");

  std::map<std::string, std::vector<vp::AudioClip>> by_speaker;
  try {
    by_speaker = vp::load_training_clips(train_rows);
  } catch (const vp::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitManifest;  // the manifest references unreadable audio
  }

  try {
    vp::TrainConfig cfg;
    cfg.ubm.components = args.components;
    cfg.ubm.seed = args.seed;
    cfg.relevance = args.relevance;
    cfg.min_voiced_s = args.min_voiced_s;
    cfg.features.sample_rate = args.sample_rate;

    const vp::TrainedModels models = vp::train_models(by_speaker, cfg);
    std::filesystem::create_directories(args.out_dir);
    vp::save_models(models, args.out_dir);
    write_effective_config(cmd, args.out_dir);
    std::cout << models.sid.size() << " SID models, " << models.conversions.size()
              << " conversion models\n";
    return 0;
  } catch (const vp::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return map_error(e);
  }
}

// --- convert ---

struct ConvertArgs {
  std::filesystem::path input;
  std::filesystem::path output;
  CommonModelArgs models;
  std::uint64_t seed = 0;
  bool seeded = false;
  std::vector<std::string> source_pool;
  std::vector<std::string> target_pool;
};

int run_convert(const CLI::App&, const ConvertArgs& args) {
  try {
    const vp::SpeakerRegistry registry = vp::load_registry(args.models.model_dir / "sid");
    const vp::ConversionRegistry conversions =
        vp::load_conversion_registry(args.models.model_dir / "conversion");

    vp::AudioClip clip = vp::load_wav(args.input);
    clip.id = args.input.stem().string();

    vp::SelectionPolicy policy =
        make_policy(registry, args.source_pool, args.target_pool,
                    args.seeded ? args.seed : vp::entropy_seed());
    const vp::FeatureMatrix feats = vp::extract_features(clip, args.models.features());
    const vp::SelectionDecision decision = vp::select(policy, registry, feats, clip.id);
    std::cerr << vp::audit_record_json(decision).dump() << "\n";

    vp::AudioClip converted =
        vp::convert(clip, conversions.get(decision.source_id, decision.target_id));
    converted.id = vp::converted_id(clip.id);
    vp::save_wav(converted, args.output);
    return 0;
  } catch (const vp::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return map_error(e);
  }
}

// --- identify ---

struct IdentifyArgs {
  std::filesystem::path input;
  CommonModelArgs models;
  std::string mode = "llr";
};

int run_identify(const CLI::App&, const IdentifyArgs& args) {
  try {
    const vp::SpeakerRegistry registry = vp::load_registry(args.models.model_dir / "sid");
    vp::AudioClip clip = vp::load_wav(args.input);
    clip.id = args.input.stem().string();
    const vp::FeatureMatrix feats = vp::extract_features(clip, args.models.features());
    const vp::ScoreMode mode =
        args.mode == "loglik" ? vp::ScoreMode::loglik : vp::ScoreMode::llr;
    const vp::IdentificationResult result = registry.identify(feats, {}, mode);

    nlohmann::json scores = nlohmann::json::array();
    for (const vp::SidScore& s : result.scores) {
      scores.push_back({{"speaker", s.speaker_id}, {"score", s.llr}});
    }
    std::cout << nlohmann::json{{"speaker", result.speaker},
                                {"score", result.score},
                                {"scores", scores}}
                     .dump(2)
              << "\n";
    return 0;
  } catch (const vp::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return map_error(e);
  }
}

// --- eval ---

struct EvalArgs {
  std::filesystem::path manifest;
  CommonModelArgs models;
  std::filesystem::path out_dir;
  double delta = 0.2;
  bool stub = false;
  double deletion_rate = 0.0;
  std::string asr_host;
  int asr_port = 0;
  double asr_timeout_s = 10.0;
  std::uint64_t seed = 1234;
  std::vector<std::string> context;
};

int run_eval(const CLI::App& cmd, const EvalArgs& args) {
  const std::vector<vp::ManifestEntry> rows = load_manifest_or_die(args.manifest);
  const std::vector<vp::ManifestEntry> test_rows = vp::filter_split(rows, "test");

  try {
    const vp::SpeakerRegistry registry = vp::load_registry(args.models.model_dir / "sid");
    const vp::ConversionRegistry conversions =
        vp::load_conversion_registry(args.models.model_dir / "conversion");

    std::vector<vp::EvalItem> test_set;
    std::map<std::string, std::string> transcripts;
    for (const vp::ManifestEntry& row : test_rows) {
      vp::EvalItem item;
      item.clip = vp::load_wav(row.path);
      item.clip.id = row.utterance_id();
      item.transcript = row.transcript;
      item.speaker_id = row.speaker;
      transcripts[item.clip.id] = row.transcript;
      test_set.push_back(std::move(item));
    }

    std::unique_ptr<vp::TranscriptionClient> asr;
    if (args.stub) {
      if (args.deletion_rate > 0.0) {
        asr = std::make_unique<vp::DeletionStubClient>(transcripts, args.deletion_rate,
                                                       args.seed, true);
      } else {
        asr = std::make_unique<vp::IdentityStubClient>(transcripts);
      }
    } else {
      if (args.asr_host.empty()) {
        std::cerr << "error: provide --asr-host or --stub\n";
        return kExitAsrUnreachable;
      }
      asr = std::make_unique<vp::HttpTranscriptionClient>(args.asr_host, args.asr_port,
                                                          args.asr_timeout_s);
    }

    vp::SelectionPolicy policy = make_policy(registry, {}, {}, args.seed);
    const vp::TradeoffReport report =
        vp::run_tradeoff(registry, conversions, policy, test_set, *asr, args.delta,
                         args.models.features(), {}, args.context);

    std::filesystem::create_directories(args.out_dir);
    vp::detail::write_json_file(vp::tradeoff_report_json(report),
                                args.out_dir / "tradeoff_report.json");
    write_effective_config(cmd, args.out_dir);

    std::printf("metric           mean      std   median  p75_trunc\n");
    std::printf("wer_original   %6.4f   %6.4f   %6.4f     %6.4f\n", report.wer_original.mean,
                report.wer_original.std_dev, report.wer_original.median,
                report.wer_original.p75_truncated_mean);
    std::printf("wer_converted  %6.4f   %6.4f   %6.4f     %6.4f\n",
                report.wer_converted.mean, report.wer_converted.std_dev,
                report.wer_converted.median, report.wer_converted.p75_truncated_mean);
    std::printf("sid_original   %6.4f\n", report.sid_original);
    std::printf("sid_converted  %6.4f\n", report.sid_converted);
    std::printf("delta          %6.4f   constraint %s%s\n", report.delta,
                report.constraint_met ? "met" : "violated",
                report.partial ? " (partial: transcription unavailable)" : "");

    if (report.partial) return kExitAsrUnreachable;
    return report.constraint_met ? 0 : kExitDeltaViolated;
  } catch (const vp::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return map_error(e);
  }
}

// --- bench ---

struct BenchArgs {
  std::filesystem::path manifest;
  CommonModelArgs models;
  std::filesystem::path out_dir;
  int repeats = 3;
  std::uint64_t seed = 1234;
};

int run_bench(const CLI::App& cmd, const BenchArgs& args) {
  const std::vector<vp::ManifestEntry> rows = load_manifest_or_die(args.manifest);

  try {
    const vp::SpeakerRegistry registry = vp::load_registry(args.models.model_dir / "sid");
    const vp::ConversionRegistry conversions =
        vp::load_conversion_registry(args.models.model_dir / "conversion");
    const vp::FeatureConfig feat_cfg = args.models.features();

    std::vector<vp::AudioClip> clips;
    for (const vp::ManifestEntry& row : rows) {
      vp::AudioClip clip = vp::load_wav(row.path);
      clip.id = row.utterance_id();
      clips.push_back(std::move(clip));
    }

    // Fix each clip's conversion model up front so repeats time the same work.
    vp::SelectionPolicy policy = make_policy(registry, {}, {}, args.seed);
    std::map<std::string, const vp::ConversionModel*> chosen;
    for (const vp::AudioClip& clip : clips) {
      const vp::FeatureMatrix feats = vp::extract_features(clip, feat_cfg);
      const vp::SelectionDecision d = vp::select(policy, registry, feats, clip.id);
      chosen[clip.id] = &conversions.get(d.source_id, d.target_id);
    }

    const auto run_sid = [&](const vp::AudioClip& clip) {
      (void)registry.identify(vp::extract_features(clip, feat_cfg));
    };
    const auto run_conversion = [&](const vp::AudioClip& clip) {
      (void)vp::convert(clip, *chosen.at(clip.id));
    };
    const std::vector<vp::LatencyRecord> records =
        vp::bench_latency(run_sid, run_conversion, clips, args.repeats);

    std::filesystem::create_directories(args.out_dir);
    {
      std::ofstream csv(args.out_dir / "latency.csv", std::ios::binary);
      csv << vp::latency_csv(records);
    }
    write_effective_config(cmd, args.out_dir);

    // Median RTF per whole-second duration bucket.
    std::map<int, std::vector<double>> buckets;
    for (const vp::LatencyRecord& r : records) {
      buckets[static_cast<int>(std::ceil(r.utterance_duration))].push_back(r.rtf);
    }
    std::string summary = "bucket_s,median_rtf,clips\n";
    for (auto& [bucket, rtfs] : buckets) {
      std::sort(rtfs.begin(), rtfs.end());
      const double median = rtfs.size() % 2 == 1
                                ? rtfs[rtfs.size() / 2]
                                : 0.5 * (rtfs[rtfs.size() / 2 - 1] + rtfs[rtfs.size() / 2]);
      char line[96];
      std::snprintf(line, sizeof(line), "%d,%.6f,%zu\n", bucket, median, rtfs.size());
      summary += line;
    }
    std::ofstream(args.out_dir / "summary.csv", std::ios::binary) << summary;
    std::cout << summary;
    return 0;
  } catch (const vp::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return map_error(e);
  }
}

// --- synth ---

struct SynthArgs {
  std::filesystem::path out_dir;
  int speakers = 5;
  int per_speaker = 16;
  std::uint64_t seed = 42;
  int sample_rate = 16000;
};

int run_synth(const CLI::App& cmd, const SynthArgs& args) {
  try {
    const std::vector<vp::SynthUtterance> corpus = vp::make_corpus(
        vp::default_speaker_bank(static_cast<std::size_t>(args.speakers)),
        args.per_speaker, args.seed, args.sample_rate);
    const std::filesystem::path manifest = vp::write_corpus(corpus, args.out_dir);
    write_effective_config(cmd, args.out_dir);
    std::cout << manifest.string() << "\n";
    return 0;
  } catch (const vp::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return map_error(e);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"voiceprivacy pipeline: train models, convert voices, evaluate the trade-off"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Read options from a key=value file");

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand("train", "Train SID and conversion models");
  train->add_option("--manifest", train_args.manifest, "Dataset manifest CSV")->required();
  train->add_option("--out", train_args.out_dir, "Output model directory")->required();
  train->add_option("--components", train_args.components, "UBM mixture components")
      ->check(CLI::PositiveNumber);
  train->add_option("--seed", train_args.seed, "Training RNG seed");
  train->add_option("--relevance", train_args.relevance, "MAP relevance factor")
      ->check(CLI::PositiveNumber);
  train->add_option("--min-voiced", train_args.min_voiced_s,
                    "Minimum voiced seconds per speaker");
  train->add_option("--sample-rate", train_args.sample_rate, "Pipeline sample rate");

  ConvertArgs convert_args;
  CLI::App* convert = app.add_subcommand("convert", "Convert one utterance");
  convert->add_option("--in", convert_args.input, "Input WAV")->required();
  convert->add_option("--models", convert_args.models.model_dir, "Model directory")
      ->required();
  convert->add_option("--out", convert_args.output, "Output WAV")->required();
  CLI::Option* seed_opt = convert->add_option("--seed", convert_args.seed,
                                              "Selection seed (omit for OS entropy)");
  convert->add_option("--source-pool", convert_args.source_pool,
                      "Restrict source mapping to these speakers")
      ->delimiter(',');
  convert->add_option("--target-pool", convert_args.target_pool,
                      "Draw targets from these speakers")
      ->delimiter(',');
  convert->add_option("--sample-rate", convert_args.models.sample_rate,
                      "Pipeline sample rate");

  IdentifyArgs identify_args;
  CLI::App* identify = app.add_subcommand("identify", "Rank enrolled speakers for a WAV");
  identify->add_option("--in", identify_args.input, "Input WAV")->required();
  identify->add_option("--models", identify_args.models.model_dir, "Model directory")
      ->required();
  identify->add_option("--mode", identify_args.mode, "Scoring mode: llr or loglik")
      ->check(CLI::IsMember({"llr", "loglik"}));
  identify->add_option("--sample-rate", identify_args.models.sample_rate,
                       "Pipeline sample rate");

  EvalArgs eval_args;
  CLI::App* eval = app.add_subcommand("eval", "Run the WER/SID trade-off evaluation");
  eval->add_option("--manifest", eval_args.manifest, "Dataset manifest CSV")->required();
  eval->add_option("--models", eval_args.models.model_dir, "Model directory")->required();
  eval->add_option("--out", eval_args.out_dir, "Report output directory")->required();
  eval->add_option("--delta", eval_args.delta, "Allowed WER-mean gap");
  eval->add_flag("--stub", eval_args.stub, "Use the deterministic transcription stub");
  eval->add_option("--deletion-rate", eval_args.deletion_rate,
                   "Stub: drop converted-channel tokens at this rate")
      ->check(CLI::Range(0.0, 1.0));
  eval->add_option("--asr-host", eval_args.asr_host, "Transcription service host");
  eval->add_option("--asr-port", eval_args.asr_port, "Transcription service port");
  eval->add_option("--asr-timeout", eval_args.asr_timeout_s, "Per-request timeout seconds");
  eval->add_option("--seed", eval_args.seed, "Selection seed");
  eval->add_option("--context", eval_args.context, "Context phrase (repeatable)");
  eval->add_option("--sample-rate", eval_args.models.sample_rate, "Pipeline sample rate");

  BenchArgs bench_args;
  CLI::App* bench = app.add_subcommand("bench", "Measure SID and conversion latency");
  bench->add_option("--manifest", bench_args.manifest, "Dataset manifest CSV")->required();
  bench->add_option("--models", bench_args.models.model_dir, "Model directory")->required();
  bench->add_option("--out", bench_args.out_dir, "CSV output directory")->required();
  bench->add_option("--repeats", bench_args.repeats, "Measured repeats per stage")
      ->check(CLI::Range(3, 1000));
  bench->add_option("--seed", bench_args.seed, "Selection seed");
  bench->add_option("--sample-rate", bench_args.models.sample_rate, "Pipeline sample rate");

  SynthArgs synth_args;
  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic speech corpus");
  synth->add_option("--out", synth_args.out_dir, "Corpus output directory")->required();
  synth->add_option("--speakers", synth_args.speakers, "Number of speakers")
      ->check(CLI::Range(1, 10));
  synth->add_option("--per-speaker", synth_args.per_speaker, "Utterances per speaker")
      ->check(CLI::PositiveNumber);
  synth->add_option("--seed", synth_args.seed, "Corpus RNG seed");
  synth->add_option("--sample-rate", synth_args.sample_rate, "Sample rate");

  CLI11_PARSE(app, argc, argv);

  convert_args.seeded = seed_opt->count() > 0;

  if (*train) return run_train(*train, train_args);
  if (*convert) return run_convert(*convert, convert_args);
  if (*identify) return run_identify(*identify, identify_args);
  if (*eval) return run_eval(*eval, eval_args);
  if (*bench) return run_bench(*bench, bench_args);
  if (*synth) return run_synth(*synth, synth_args);
  return kExitInternal;
}
