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

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "wbc/data/types.hpp"
#include "wbc/eval/evaluator.hpp"
#include "wbc/zoo/model.hpp"

namespace wbc::train {

// The training protocol: AdamW, linear warmup for the first 10 epochs, cosine
// decay to zero over the remaining 90, random flips as the only augmentation.
// The protocol always runs warmup_epochs + decay_epochs = 100 epochs; desk
// and full tiers differ in dataset size, never in schedule shape.
struct TrainConfig {
  double weight_decay = 0.005;
  double peak_lr = 1e-4;
  int warmup_epochs = 10;
  int decay_epochs = 90;
  int batch_size = 32;
  double beta1 = 0.9;
  double beta2 = 0.999;
  // "flips" (random horizontal + vertical) or "none". No color augmentation.
  std::string augmentation = "flips";
  // Optional per-class loss weights (5 entries). Empty means unweighted
  // cross entropy, the default; class imbalance is deliberately left alone.
  std::vector<double> class_weights;
  // Deterministic mode zeroes wall_time in RunResult so the serialized run is
  // bit-identical across invocations with the same seed.
  bool deterministic = true;

  int total_epochs() const { return warmup_epochs + decay_epochs; }
  void validate() const;

  std::string to_json() const;
  static TrainConfig from_json(const std::string& s);

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Learning rate for a zero-based optimizer step. Linear ramp from 0 to
// peak_lr over the warmup epochs, then cosine decay from peak_lr to 0; the
// two pieces meet at exactly peak_lr. `step` may equal the final step count
// so the whole closed domain can be inspected; training itself only uses
// steps strictly below it.
double lr_at(std::int64_t step, std::int64_t steps_per_epoch, const TrainConfig& cfg);

struct EpochStat {
  int epoch = 0;        // 1-based
  double train_loss = 0.0;  // sample-weighted mean over the epoch
  double lr = 0.0;          // learning rate applied at the epoch's last step

  friend bool operator==(const EpochStat&, const EpochStat&) = default;
};

// Where and how a run executed; persisted so results carry their context.
struct Environment {
  std::string device = "cpu";
  bool deterministic = true;
  std::string code_version;
  std::string build_type;

  friend bool operator==(const Environment&, const Environment&) = default;
};

Environment current_environment(bool deterministic);

// Everything one training run produces. Serialization has a fixed key order
// and, in deterministic mode, no volatile fields, so two runs with the same
// seed serialize to identical bytes.
struct RunResult {
  long seed = 0;
  zoo::ModelSpec spec;
  std::vector<EpochStat> epoch_trace;
  std::map<std::string, eval::EvalResult> eval_results;  // keyed by dataset tag
  double wall_time_seconds = 0.0;  // 0 in deterministic mode
  Environment environment;
  // Checksums of all non-trainable state before the first and after the last
  // epoch; equal for a correct freeze implementation.
  std::string frozen_checksum_before;
  std::string frozen_checksum_after;

  // Accuracy per dataset tag, the slice the comparison tables consume.
  eval::RunAccuracies accuracies() const;

  std::string to_json() const;
  static RunResult from_json(const std::string& s);
};

// Data, weights, and output locations for a run. Manifests carry their own
// roots; the preprocess config applies to train and eval alike (augmentation
// is switched by the trainer, not by this struct).
struct TrainSetup {
  data::DatasetManifest train_manifest;
  std::vector<data::DatasetManifest> test_manifests;
  data::PreprocessConfig preprocess;
  std::filesystem::path weights_cache;   // pretrained archives; may be empty
  std::filesystem::path checkpoint_dir;  // empty = do not checkpoint
};

// Trains `spec` for the full protocol from one seed: builds the model (head
// init, shuffles, flips, dropout all derive from `seed`), runs exactly
// total_epochs epochs with no early stopping or validation-based selection,
// evaluates every test manifest, and checkpoints when a directory is given.
// Non-finite loss raises TrainAbort carrying (seed, epoch, lr); allocation
// failure raises IoError with batch-size guidance.
RunResult train(const zoo::ModelSpec& spec, const TrainSetup& setup, const TrainConfig& cfg,
                long seed);

// Runs `train` once per seed, persisting each result to
// `out_dir/<variant>/seed<k>.json` (checkpoint beside it) as soon as it
// finishes. Seeds already on disk with a matching spec are loaded, not
// retrained, so an interrupted sweep resumes where it stopped. Duplicate
// seeds are rejected.
std::vector<RunResult> run_benchmark(const zoo::ModelSpec& spec, const std::vector<long>& seeds,
                                     const TrainSetup& setup, const TrainConfig& cfg,
                                     const std::filesystem::path& out_dir);

// Directory name for a variant's results under the benchmark output root.
std::string variant_dir_name(const std::string& variant_id);

}  // namespace wbc::train
