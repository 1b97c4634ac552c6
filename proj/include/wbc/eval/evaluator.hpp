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

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "wbc/data/loader.hpp"
#include "wbc/data/types.hpp"
#include "wbc/zoo/model.hpp"

namespace wbc::eval {

using data::kNumClasses;

// Confusion-matrix summary of one model on one dataset. Rows are true
// classes, columns predictions, both in WbcClass code order.
struct EvalResult {
  std::string dataset;
  std::array<std::array<std::int64_t, kNumClasses>, kNumClasses> confusion{};
  double accuracy = 0.0;  // percent, 100 * trace / n
  std::int64_t n = 0;
  // Classes with zero true samples (RaabinWBC Test-B ships only three of the
  // five); recall is undefined for them.
  std::vector<std::string> absent_classes;

  std::int64_t row_sum(int true_class) const;
  std::int64_t col_sum(int predicted_class) const;

  std::string to_json() const;
  static EvalResult from_json(const std::string& s);
};

// Core tally over parallel label/prediction lists (class codes 0..4).
EvalResult evaluate_predictions(const std::string& dataset_tag, const std::vector<int>& labels,
                                const std::vector<int>& predicted);

// Runs the model over every record of the manifest in eval mode and tallies
// the confusion matrix. Deterministic: fixed record order, no augmentation.
EvalResult evaluate(zoo::Model& model, const data::DatasetManifest& manifest,
                    const data::PreprocessConfig& preprocess, int batch_size = 32);

// Argmax per row with first-wins tie breaking; logits is (N, C).
std::vector<int> argmax_rows(const Tensor& logits);

struct ClassValue {
  double precision = 0.0;  // percent
  double recall = 0.0;     // percent
  double f_measure = 0.0;  // percent
  // Zero-denominator cases report 0.00 with the matching flag cleared.
  bool precision_defined = true;
  bool recall_defined = true;
  bool f_defined = true;
};

struct ClassMetrics {
  std::array<ClassValue, kNumClasses> per_class{};
};

ClassMetrics per_class_metrics(
    const std::array<std::array<std::int64_t, kNumClasses>, kNumClasses>& confusion);

// Harmonic mean of two percentages; 0 when both inputs are 0.
double f_measure(double precision, double recall);

// Mean and two-sided Student-t interval half-width over per-seed values.
struct CiSummary {
  double mean = 0.0;
  double half_width = 0.0;
  int n_runs = 0;
  double level = 0.95;
  bool defined = false;  // false for a single run (point estimate)
};

CiSummary aggregate_ci(const std::vector<double>& values, double level = 0.95);

// Upper-tail Student-t quantile: returns t with P(T_df <= t) = p, p in
// (0.5, 1). Exposed for the oracle tests.
double student_t_quantile(double p, int df);

// ---------------------------------------------------------------------------
// Cross-variant comparison

// Per-run accuracies keyed by dataset tag; the trainer adapts RunResult into
// this shape so report code stays decoupled from training types.
using RunAccuracies = std::map<std::string, double>;

struct ComparisonCell {
  bool present = false;
  CiSummary ci;
};

struct ComparisonTable {
  std::vector<std::string> variants;  // fixed report row order
  std::vector<std::string> datasets;  // column order: dataset id order
  std::vector<std::vector<ComparisonCell>> cells;  // [variant][dataset]
  std::vector<std::string> notes;     // missing cells, point estimates

  std::string to_csv() const;   // long form: variant,dataset,n_runs,mean,half_width
  std::string to_text() const;  // aligned grid, "mean +- hw" cells
};

// Rows follow the published ablation-table order; a missing (variant,
// dataset) pair becomes a blank cell plus a note. Empty input or a variant
// with no runs raises ValidationError.
ComparisonTable compare_variants(
    const std::map<std::string, std::vector<RunAccuracies>>& results);

}  // namespace wbc::eval
