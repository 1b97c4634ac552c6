// Copyright 2026 The wbcbench Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "wbc/train/trainer.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <new>
#include <numbers>
#include <set>
#include <sstream>

#include "wbc/core/error.hpp"
#include "wbc/core/rng.hpp"
#include "wbc/core/version.hpp"
#include "wbc/data/loader.hpp"
#include "wbc/nn/loss.hpp"
#include "wbc/nn/optimizer.hpp"
#include "wbc/zoo/build.hpp"
#include "wbc/zoo/checkpoint.hpp"

namespace wbc::train {

using nlohmann::ordered_json;

namespace {

// Stream ids for the independent random sequences one seed fans out into.
constexpr std::uint64_t kStreamDropout = 0xd70u;
constexpr std::uint64_t kStreamShuffle = 0x5471u;

std::string read_text_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file_atomic(const std::filesystem::path& p, const std::string& text) {
  const std::filesystem::path tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << text;
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, p);
}

}  // namespace

void TrainConfig::validate() const {
  if (!(weight_decay >= 0.0)) throw ValidationError("TrainConfig: weight_decay must be >= 0");
  if (!(peak_lr > 0.0)) throw ValidationError("TrainConfig: peak_lr must be > 0");
  if (warmup_epochs < 0 || decay_epochs < 0)
    throw ValidationError("TrainConfig: epoch counts must be nonnegative");
  if (warmup_epochs + decay_epochs != 100)
    throw ValidationError("TrainConfig: warmup_epochs + decay_epochs must equal 100 (got " +
                          std::to_string(warmup_epochs + decay_epochs) + ")");
  if (batch_size <= 0) throw ValidationError("TrainConfig: batch_size must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
    throw ValidationError("TrainConfig: moment coefficients must lie in [0, 1)");
  if (augmentation != "flips" && augmentation != "none")
    throw ValidationError("TrainConfig: augmentation must be \"flips\" or \"none\", got \"" +
                          augmentation + "\"");
  if (!class_weights.empty()) {
    if (class_weights.size() != static_cast<std::size_t>(data::kNumClasses))
      throw ValidationError("TrainConfig: class_weights needs one entry per class");
    for (double w : class_weights)
      if (!(w >= 0.0) || !std::isfinite(w))
        throw ValidationError("TrainConfig: class_weights must be finite and nonnegative");
  }
}

std::string TrainConfig::to_json() const {
  ordered_json j;
  j["weight_decay"] = weight_decay;
  j["peak_lr"] = peak_lr;
  j["warmup_epochs"] = warmup_epochs;
  j["decay_epochs"] = decay_epochs;
  j["batch_size"] = batch_size;
  j["beta1"] = beta1;
  j["beta2"] = beta2;
  j["augmentation"] = augmentation;
  j["class_weights"] = class_weights;
  j["deterministic"] = deterministic;
  return j.dump(2);
}

TrainConfig TrainConfig::from_json(const std::string& s) {
  ordered_json j;
  try {
    j = ordered_json::parse(s);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("TrainConfig: malformed JSON: ") + e.what());
  }
  TrainConfig cfg;
  try {
    cfg.weight_decay = j.at("weight_decay").get<double>();
    cfg.peak_lr = j.at("peak_lr").get<double>();
    cfg.warmup_epochs = j.at("warmup_epochs").get<int>();
    cfg.decay_epochs = j.at("decay_epochs").get<int>();
    cfg.batch_size = j.at("batch_size").get<int>();
    if (j.contains("beta1")) cfg.beta1 = j.at("beta1").get<double>();
    if (j.contains("beta2")) cfg.beta2 = j.at("beta2").get<double>();
    if (j.contains("augmentation")) cfg.augmentation = j.at("augmentation").get<std::string>();
    if (j.contains("class_weights"))
      cfg.class_weights = j.at("class_weights").get<std::vector<double>>();
    if (j.contains("deterministic")) cfg.deterministic = j.at("deterministic").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("TrainConfig: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

double lr_at(std::int64_t step, std::int64_t steps_per_epoch, const TrainConfig& cfg) {
  if (steps_per_epoch <= 0) throw ValidationError("lr_at: steps_per_epoch must be positive");
  const std::int64_t warmup_steps = static_cast<std::int64_t>(cfg.warmup_epochs) * steps_per_epoch;
  const std::int64_t decay_steps = static_cast<std::int64_t>(cfg.decay_epochs) * steps_per_epoch;
  const std::int64_t total_steps = warmup_steps + decay_steps;
  if (step < 0 || step > total_steps)
    throw ValidationError("lr_at: step " + std::to_string(step) + " outside [0, " +
                          std::to_string(total_steps) + "]");
  if (step < warmup_steps)
    return cfg.peak_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  if (decay_steps == 0) return cfg.peak_lr;
  const double progress =
      static_cast<double>(step - warmup_steps) / static_cast<double>(decay_steps);
  return cfg.peak_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

Environment current_environment(bool deterministic) {
  Environment env;
  env.device = "cpu";
  env.deterministic = deterministic;
  env.code_version = kCodeVersion;
  env.build_type = kBuildType;
  return env;
}

eval::RunAccuracies RunResult::accuracies() const {
  eval::RunAccuracies acc;
  for (const auto& [tag, result] : eval_results) acc[tag] = result.accuracy;
  return acc;
}

std::string RunResult::to_json() const {
  ordered_json j;
  j["seed"] = seed;
  j["spec"] = ordered_json::parse(spec.to_json());
  ordered_json trace = ordered_json::array();
  for (const EpochStat& e : epoch_trace) {
    ordered_json row;
    row["epoch"] = e.epoch;
    row["train_loss"] = e.train_loss;
    row["lr"] = e.lr;
    trace.push_back(std::move(row));
  }
  j["epoch_trace"] = std::move(trace);
  ordered_json evals;
  for (const auto& [tag, result] : eval_results)
    evals[tag] = ordered_json::parse(result.to_json());
  j["eval_results"] = std::move(evals);
  j["wall_time_seconds"] = wall_time_seconds;
  ordered_json env;
  env["device"] = environment.device;
  env["deterministic"] = environment.deterministic;
  env["code_version"] = environment.code_version;
  env["build_type"] = environment.build_type;
  j["environment"] = std::move(env);
  j["frozen_checksum_before"] = frozen_checksum_before;
  j["frozen_checksum_after"] = frozen_checksum_after;
  return j.dump(2) + "\n";
}

RunResult RunResult::from_json(const std::string& s) {
  ordered_json j;
  try {
    j = ordered_json::parse(s);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("RunResult: malformed JSON: ") + e.what());
  }
  RunResult r;
  try {
    r.seed = j.at("seed").get<long>();
    r.spec = zoo::ModelSpec::from_json(j.at("spec").dump());
    for (const auto& row : j.at("epoch_trace")) {
      EpochStat e;
      e.epoch = row.at("epoch").get<int>();
      e.train_loss = row.at("train_loss").get<double>();
      e.lr = row.at("lr").get<double>();
      r.epoch_trace.push_back(e);
    }
    for (const auto& [tag, value] : j.at("eval_results").items())
      r.eval_results[tag] = eval::EvalResult::from_json(value.dump());
    r.wall_time_seconds = j.at("wall_time_seconds").get<double>();
    const auto& env = j.at("environment");
    r.environment.device = env.at("device").get<std::string>();
    r.environment.deterministic = env.at("deterministic").get<bool>();
    r.environment.code_version = env.at("code_version").get<std::string>();
    r.environment.build_type = env.at("build_type").get<std::string>();
    r.frozen_checksum_before = j.at("frozen_checksum_before").get<std::string>();
    r.frozen_checksum_after = j.at("frozen_checksum_after").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("RunResult: ") + e.what());
  }
  if (r.epoch_trace.empty()) throw ValidationError("RunResult: epoch_trace is empty");
  for (std::size_t i = 0; i < r.epoch_trace.size(); ++i)
    if (r.epoch_trace[i].epoch != static_cast<int>(i) + 1)
      throw ValidationError("RunResult: epoch_trace must cover epochs 1.." +
                            std::to_string(r.epoch_trace.size()) + " in order");
  if (r.eval_results.empty()) throw ValidationError("RunResult: eval_results is empty");
  return r;
}

RunResult train(const zoo::ModelSpec& spec, const TrainSetup& setup, const TrainConfig& cfg,
                long seed) {
  cfg.validate();
  spec.validate();
  setup.preprocess.validate();
  if (setup.train_manifest.records.empty())
    throw ValidationError("train: training manifest is empty");
  if (setup.test_manifests.empty())
    throw ValidationError("train: at least one test manifest is required");

  const auto t0 = std::chrono::steady_clock::now();
  const std::uint64_t useed = static_cast<std::uint64_t>(seed);

  zoo::Model model = zoo::build_model(spec, setup.weights_cache, useed);
  model.reseed(Rng::stream(useed, {kStreamDropout}).next_u64());

  RunResult result;
  result.seed = seed;
  result.spec = spec;
  result.environment = current_environment(cfg.deterministic);
  result.frozen_checksum_before = zoo::frozen_state_checksum(model);

  data::PreprocessConfig train_pre = setup.preprocess;
  train_pre.train_augment = (cfg.augmentation == "flips");
  data::SampleCache cache(setup.train_manifest.root, train_pre);

  const std::vector<data::ImageRecord>& records = setup.train_manifest.records;
  const std::size_t n = records.size();
  const std::int64_t steps_per_epoch =
      static_cast<std::int64_t>((n + static_cast<std::size_t>(cfg.batch_size) - 1) /
                                static_cast<std::size_t>(cfg.batch_size));

  nn::AdamW optimizer({cfg.beta1, cfg.beta2, 1e-8, cfg.weight_decay});
  const int total_epochs = cfg.total_epochs();
  result.epoch_trace.reserve(static_cast<std::size_t>(total_epochs));

  std::int64_t global_step = 0;
  try {
    for (int epoch = 1; epoch <= total_epochs; ++epoch) {
      const std::vector<std::size_t> order =
          Rng::stream(useed, {kStreamShuffle, static_cast<std::uint64_t>(epoch)}).permutation(n);

      double loss_sum = 0.0;
      double last_lr = 0.0;
      for (std::size_t begin = 0; begin < n; begin += static_cast<std::size_t>(cfg.batch_size)) {
        const std::size_t end = std::min(n, begin + static_cast<std::size_t>(cfg.batch_size));
        const std::vector<std::size_t> batch_indices(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                                     order.begin() + static_cast<std::ptrdiff_t>(end));
        last_lr = lr_at(global_step, steps_per_epoch, cfg);

        data::Batch batch = data::collate_batch(cache, records, batch_indices, true, useed,
                                                static_cast<std::uint64_t>(epoch));
        Tensor logits = model.forward(batch.inputs, nn::Mode::kTrain);
        nn::LossResult loss = nn::softmax_cross_entropy(logits, batch.labels, cfg.class_weights);
        if (!std::isfinite(loss.loss))
          throw TrainAbort("train: non-finite loss (seed " + std::to_string(seed) + ", epoch " +
                               std::to_string(epoch) + ", lr " + std::to_string(last_lr) + ")",
                           seed, epoch, last_lr);

        nn::AdamW::zero_grad(*model.root);
        model.root->backward(loss.dlogits);
        optimizer.step(*model.root, last_lr);

        loss_sum += loss.loss * static_cast<double>(end - begin);
        ++global_step;
      }

      EpochStat stat;
      stat.epoch = epoch;
      stat.train_loss = loss_sum / static_cast<double>(n);
      stat.lr = last_lr;
      result.epoch_trace.push_back(stat);
    }
  } catch (const std::bad_alloc&) {
    throw IoError("train: out of memory at batch_size=" + std::to_string(cfg.batch_size) +
                  "; rerun with a smaller --batch-size");
  }

  result.frozen_checksum_after = zoo::frozen_state_checksum(model);

  for (const data::DatasetManifest& manifest : setup.test_manifests) {
    eval::EvalResult er = eval::evaluate(model, manifest, setup.preprocess, cfg.batch_size);
    const std::string tag = er.dataset;
    if (result.eval_results.count(tag))
      throw ValidationError("train: two test manifests share the tag " + tag);
    result.eval_results.emplace(tag, std::move(er));
  }

  if (!setup.checkpoint_dir.empty()) {
    std::filesystem::create_directories(setup.checkpoint_dir);
    zoo::save_checkpoint(model, setup.checkpoint_dir);
  }

  const auto t1 = std::chrono::steady_clock::now();
  result.wall_time_seconds =
      cfg.deterministic ? 0.0 : std::chrono::duration<double>(t1 - t0).count();
  return result;
}

std::string variant_dir_name(const std::string& variant_id) {
  // Fold the typographic prime (U+2032) to the ASCII apostrophe so directory
  // names stay single-byte regardless of how the variant was spelled.
  std::string out;
  for (std::size_t i = 0; i < variant_id.size(); ++i) {
    if (i + 2 < variant_id.size() && static_cast<unsigned char>(variant_id[i]) == 0xE2 &&
        static_cast<unsigned char>(variant_id[i + 1]) == 0x80 &&
        static_cast<unsigned char>(variant_id[i + 2]) == 0xB2) {
      out.push_back('\'');
      i += 2;
    } else {
      out.push_back(variant_id[i]);
    }
  }
  return out;
}

std::vector<RunResult> run_benchmark(const zoo::ModelSpec& spec, const std::vector<long>& seeds,
                                     const TrainSetup& setup, const TrainConfig& cfg,
                                     const std::filesystem::path& out_dir) {
  if (seeds.empty()) throw ValidationError("run_benchmark: seeds must be nonempty");
  std::set<long> unique(seeds.begin(), seeds.end());
  if (unique.size() != seeds.size())
    throw ValidationError("run_benchmark: duplicate seeds in the sweep");
  if (out_dir.empty()) throw ValidationError("run_benchmark: output directory is required");
  spec.validate();

  const std::filesystem::path variant_dir = out_dir / variant_dir_name(spec.variant_id);
  std::filesystem::create_directories(variant_dir);

  std::vector<RunResult> results;
  results.reserve(seeds.size());
  for (long seed : seeds) {
    const std::filesystem::path result_path =
        variant_dir / ("seed" + std::to_string(seed) + ".json");
    if (std::filesystem::exists(result_path)) {
      RunResult stored = RunResult::from_json(read_text_file(result_path));
      if (stored.seed != seed)
        throw ValidationError("run_benchmark: " + result_path.string() +
                              " holds seed " + std::to_string(stored.seed) +
                              "; delete it to retrain");
      if (!(stored.spec == spec))
        throw ValidationError("run_benchmark: " + result_path.string() +
                              " was produced by a different model spec; delete it to retrain");
      results.push_back(std::move(stored));
      continue;
    }

    TrainSetup seed_setup = setup;
    seed_setup.checkpoint_dir = variant_dir / ("seed" + std::to_string(seed));
    RunResult fresh = train(spec, seed_setup, cfg, seed);
    write_text_file_atomic(result_path, fresh.to_json());
    results.push_back(std::move(fresh));
  }
  return results;
}

}  // namespace wbc::train
