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

#include "wbc/eval/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <numeric>
#include <set>

#include "wbc/core/error.hpp"
#include "wbc/zoo/spec.hpp"

namespace wbc::eval {
namespace {

using nlohmann::ordered_json;

std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

// Continued-fraction evaluation for the regularized incomplete beta
// function (Lentz's method).
double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

double reg_inc_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_bt =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double bt = std::exp(ln_bt);
  if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
  return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

// P(T_df <= t) for t >= 0.
double student_t_cdf_upper_half(double t, int df) {
  const double x = df / (df + t * t);
  return 1.0 - 0.5 * reg_inc_beta(df / 2.0, 0.5, x);
}

}  // namespace

double student_t_quantile(double p, int df) {
  if (df < 1) throw ValidationError("student_t_quantile: df must be >= 1");
  if (!(p > 0.5 && p < 1.0))
    throw ValidationError("student_t_quantile: p must lie in (0.5, 1)");
  double hi = 1.0;
  while (student_t_cdf_upper_half(hi, df) < p) {
    hi *= 2.0;
    if (hi > 1e8) throw ValidationError("student_t_quantile: p too close to 1");
  }
  double lo = 0.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (student_t_cdf_upper_half(mid, df) < p)
      lo = mid;
    else
      hi = mid;
    if (hi - lo < 1e-13 * std::max(1.0, hi)) break;
  }
  return 0.5 * (lo + hi);
}

std::int64_t EvalResult::row_sum(int true_class) const {
  const auto& row = confusion[static_cast<std::size_t>(true_class)];
  return std::accumulate(row.begin(), row.end(), std::int64_t{0});
}

std::int64_t EvalResult::col_sum(int predicted_class) const {
  std::int64_t s = 0;
  for (const auto& row : confusion) s += row[static_cast<std::size_t>(predicted_class)];
  return s;
}

std::string EvalResult::to_json() const {
  ordered_json j;
  j["dataset"] = dataset;
  j["n"] = n;
  j["accuracy"] = accuracy;
  ordered_json conf = ordered_json::array();
  for (const auto& row : confusion) {
    ordered_json r = ordered_json::array();
    for (std::int64_t v : row) r.push_back(v);
    conf.push_back(std::move(r));
  }
  j["confusion"] = std::move(conf);
  j["absent_classes"] = absent_classes;
  return j.dump();
}

EvalResult EvalResult::from_json(const std::string& s) {
  ordered_json j;
  try {
    j = ordered_json::parse(s);
  } catch (const std::exception& e) {
    throw ValidationError(std::string("EvalResult: bad JSON: ") + e.what());
  }
  EvalResult r;
  try {
    r.dataset = j.at("dataset").get<std::string>();
    r.n = j.at("n").get<std::int64_t>();
    r.accuracy = j.at("accuracy").get<double>();
    const auto& conf = j.at("confusion");
    if (conf.size() != kNumClasses) throw ValidationError("EvalResult: confusion must be 5x5");
    for (int i = 0; i < kNumClasses; ++i) {
      if (conf[i].size() != kNumClasses)
        throw ValidationError("EvalResult: confusion must be 5x5");
      for (int k = 0; k < kNumClasses; ++k)
        r.confusion[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] =
            conf[i][k].get<std::int64_t>();
    }
    r.absent_classes = j.at("absent_classes").get<std::vector<std::string>>();
  } catch (const ordered_json::exception& e) {
    throw ValidationError(std::string("EvalResult: missing or mistyped field: ") + e.what());
  }

  std::int64_t total = 0, trace = 0;
  for (int i = 0; i < kNumClasses; ++i)
    for (int k = 0; k < kNumClasses; ++k) {
      const std::int64_t v = r.confusion[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
      if (v < 0) throw ValidationError("EvalResult: negative confusion count");
      total += v;
      if (i == k) trace += v;
    }
  if (total != r.n) throw ValidationError("EvalResult: confusion total does not match n");
  if (r.n > 0 && std::fabs(r.accuracy - 100.0 * static_cast<double>(trace) /
                                            static_cast<double>(r.n)) > 1e-9)
    throw ValidationError("EvalResult: accuracy does not match the confusion trace");
  return r;
}

EvalResult evaluate_predictions(const std::string& dataset_tag, const std::vector<int>& labels,
                                const std::vector<int>& predicted) {
  if (labels.empty()) throw ValidationError("evaluate_predictions: empty label list");
  if (labels.size() != predicted.size())
    throw ValidationError("evaluate_predictions: label/prediction size mismatch");

  EvalResult r;
  r.dataset = dataset_tag;
  r.n = static_cast<std::int64_t>(labels.size());
  std::int64_t trace = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int t = labels[i], p = predicted[i];
    if (t < 0 || t >= kNumClasses || p < 0 || p >= kNumClasses)
      throw ValidationError("evaluate_predictions: class code out of range");
    r.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)] += 1;
    if (t == p) ++trace;
  }
  r.accuracy = 100.0 * static_cast<double>(trace) / static_cast<double>(r.n);
  for (int c = 0; c < kNumClasses; ++c)
    if (r.row_sum(c) == 0)
      r.absent_classes.emplace_back(data::class_name(static_cast<data::WbcClass>(c)));
  return r;
}

std::vector<int> argmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) throw ValidationError("argmax_rows: logits must be rank 2");
  const Index n = logits.dim(0), c = logits.dim(1);
  std::vector<int> out(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const float* row = logits.data() + i * c;
    int best = 0;
    for (Index k = 1; k < c; ++k)
      if (row[k] > row[best]) best = static_cast<int>(k);
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

EvalResult evaluate(zoo::Model& model, const data::DatasetManifest& manifest,
                    const data::PreprocessConfig& preprocess, int batch_size) {
  if (manifest.records.empty()) throw ValidationError("evaluate: empty manifest");
  if (batch_size <= 0) throw ValidationError("evaluate: batch_size must be positive");

  data::SampleCache cache(manifest.root, preprocess);
  std::vector<int> labels, predicted;
  labels.reserve(manifest.records.size());
  predicted.reserve(manifest.records.size());

  const std::size_t total = manifest.records.size();
  for (std::size_t start = 0; start < total; start += static_cast<std::size_t>(batch_size)) {
    const std::size_t stop = std::min(total, start + static_cast<std::size_t>(batch_size));
    std::vector<std::size_t> indices(stop - start);
    std::iota(indices.begin(), indices.end(), start);
    data::Batch batch =
        data::collate_batch(cache, manifest.records, indices, /*training=*/false, 0, 0);
    const Tensor logits = model.forward(batch.inputs, nn::Mode::kEval);
    const std::vector<int> preds = argmax_rows(logits);
    labels.insert(labels.end(), batch.labels.begin(), batch.labels.end());
    predicted.insert(predicted.end(), preds.begin(), preds.end());
  }
  std::string tag(data::dataset_name(manifest.records.front().dataset));
  return evaluate_predictions(tag, labels, predicted);
}

double f_measure(double precision, double recall) {
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

ClassMetrics per_class_metrics(
    const std::array<std::array<std::int64_t, kNumClasses>, kNumClasses>& confusion) {
  ClassMetrics m;
  for (int c = 0; c < kNumClasses; ++c) {
    const auto ci = static_cast<std::size_t>(c);
    const std::int64_t tp = confusion[ci][ci];
    std::int64_t row = 0, col = 0;
    for (int k = 0; k < kNumClasses; ++k) {
      row += confusion[ci][static_cast<std::size_t>(k)];
      col += confusion[static_cast<std::size_t>(k)][ci];
    }
    ClassValue& v = m.per_class[ci];
    if (col == 0) {
      v.precision = 0.0;
      v.precision_defined = false;
    } else {
      v.precision = 100.0 * static_cast<double>(tp) / static_cast<double>(col);
    }
    if (row == 0) {
      v.recall = 0.0;
      v.recall_defined = false;
    } else {
      v.recall = 100.0 * static_cast<double>(tp) / static_cast<double>(row);
    }
    if (!v.precision_defined || !v.recall_defined || v.precision + v.recall == 0.0) {
      v.f_measure = 0.0;
      v.f_defined = false;
    } else {
      v.f_measure = f_measure(v.precision, v.recall);
    }
  }
  return m;
}

CiSummary aggregate_ci(const std::vector<double>& values, double level) {
  if (values.empty()) throw ValidationError("aggregate_ci: empty value list");
  if (!(level > 0.0 && level < 1.0))
    throw ValidationError("aggregate_ci: level must lie in (0, 1)");

  CiSummary s;
  s.n_runs = static_cast<int>(values.size());
  s.level = level;
  const double n = static_cast<double>(values.size());
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() == 1) {
    s.half_width = 0.0;
    s.defined = false;
    return s;
  }
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  const double stddev = std::sqrt(ss / (n - 1.0));
  const double t = student_t_quantile(0.5 + level / 2.0, static_cast<int>(values.size()) - 1);
  s.half_width = t * stddev / std::sqrt(n);
  s.defined = true;
  return s;
}

std::string ComparisonTable::to_csv() const {
  std::string out = "variant,dataset,n_runs,mean,half_width\n";
  for (std::size_t r = 0; r < variants.size(); ++r)
    for (std::size_t c = 0; c < datasets.size(); ++c) {
      const ComparisonCell& cell = cells[r][c];
      out += variants[r] + "," + datasets[c] + ",";
      if (!cell.present) {
        out += "0,,\n";
        continue;
      }
      out += std::to_string(cell.ci.n_runs) + "," + fmt2(cell.ci.mean) + ",";
      if (cell.ci.defined) out += fmt2(cell.ci.half_width);
      out += "\n";
    }
  return out;
}

std::string ComparisonTable::to_text() const {
  auto cell_text = [](const ComparisonCell& cell) -> std::string {
    if (!cell.present) return "-";
    if (!cell.ci.defined) return fmt2(cell.ci.mean) + " (n=1)";
    return fmt2(cell.ci.mean) + " +- " + fmt2(cell.ci.half_width);
  };

  std::size_t name_w = std::string("variant").size();
  for (const std::string& v : variants) name_w = std::max(name_w, v.size());
  std::vector<std::size_t> col_w(datasets.size());
  for (std::size_t c = 0; c < datasets.size(); ++c) {
    col_w[c] = datasets[c].size();
    for (std::size_t r = 0; r < variants.size(); ++r)
      col_w[c] = std::max(col_w[c], cell_text(cells[r][c]).size());
  }

  auto pad = [](const std::string& s, std::size_t w) {
    return s + std::string(w - s.size(), ' ');
  };
  std::string out = pad("variant", name_w);
  for (std::size_t c = 0; c < datasets.size(); ++c) out += "  " + pad(datasets[c], col_w[c]);
  out += "\n";
  for (std::size_t r = 0; r < variants.size(); ++r) {
    out += pad(variants[r], name_w);
    for (std::size_t c = 0; c < datasets.size(); ++c)
      out += "  " + pad(cell_text(cells[r][c]), col_w[c]);
    out += "\n";
  }
  for (const std::string& note : notes) out += "# " + note + "\n";
  return out;
}

ComparisonTable compare_variants(
    const std::map<std::string, std::vector<RunAccuracies>>& results) {
  if (results.empty()) throw ValidationError("compare_variants: no results");
  for (const auto& [variant, runs] : results)
    if (runs.empty())
      throw ValidationError("compare_variants: variant '" + variant + "' has no runs");

  ComparisonTable table;
  // Report row order, filtered to the variants present.
  for (const std::string& id : zoo::known_variants())
    if (results.count(id)) table.variants.push_back(id);
  if (table.variants.size() != results.size()) {
    for (const auto& [variant, runs] : results)
      if (std::find(table.variants.begin(), table.variants.end(), variant) ==
          table.variants.end())
        throw ValidationError("compare_variants: unknown variant id '" + variant + "'");
  }

  // Column order: dataset-id order over the union of observed tags.
  std::set<std::pair<int, std::string>> ordered_tags;
  for (const auto& [variant, runs] : results)
    for (const RunAccuracies& run : runs)
      for (const auto& [tag, acc] : run) {
        const auto id = data::parse_dataset_name(tag);
        if (!id) throw ValidationError("compare_variants: unknown dataset tag '" + tag + "'");
        ordered_tags.emplace(static_cast<int>(*id), tag);
      }
  for (const auto& [order, tag] : ordered_tags) table.datasets.push_back(tag);

  for (const std::string& variant : table.variants) {
    const std::vector<RunAccuracies>& runs = results.at(variant);
    std::vector<ComparisonCell> row;
    for (const std::string& tag : table.datasets) {
      std::vector<double> values;
      for (const RunAccuracies& run : runs) {
        auto it = run.find(tag);
        if (it != run.end()) values.push_back(it->second);
      }
      ComparisonCell cell;
      if (values.empty()) {
        table.notes.push_back("variant '" + variant + "' has no results for " + tag);
      } else {
        cell.present = true;
        cell.ci = aggregate_ci(values);
        if (!cell.ci.defined)
          table.notes.push_back("variant '" + variant + "' on " + tag +
                                " is a single-seed point estimate");
      }
      row.push_back(cell);
    }
    table.cells.push_back(std::move(row));
  }
  return table;
}

}  // namespace wbc::eval
