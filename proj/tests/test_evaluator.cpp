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

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "wbc/core/error.hpp"
#include "wbc/core/rng.hpp"
#include "wbc/data/synth.hpp"
#include "wbc/eval/evaluator.hpp"
#include "wbc/zoo/build.hpp"

using namespace wbc;
using namespace wbc::eval;

namespace {

using Confusion = std::array<std::array<std::int64_t, kNumClasses>, kNumClasses>;

Confusion diagonal(std::int64_t v) {
  Confusion c{};
  for (int i = 0; i < kNumClasses; ++i) c[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] = v;
  return c;
}

}  // namespace

TEST_SUITE("student t") {
  TEST_CASE("quantiles match the standard table") {
    // Two-sided 95% critical values from the usual t table (independent of
    // this implementation).
    struct Row {
      int df;
      double p;
      double t;
    };
    const Row rows[] = {
        {1, 0.975, 12.70620474}, {2, 0.975, 4.30265273}, {3, 0.975, 3.18244631},
        {4, 0.975, 2.77644511},  {9, 0.975, 2.26215716}, {29, 0.975, 2.04522964},
        {9, 0.995, 3.24983554},  {19, 0.95, 1.72913281}, {99, 0.975, 1.98421695},
    };
    for (const Row& row : rows)
      CHECK(student_t_quantile(row.p, row.df) ==
            doctest::Approx(row.t).epsilon(1e-7));
  }

  TEST_CASE("bad arguments throw") {
    CHECK_THROWS_AS(student_t_quantile(0.975, 0), ValidationError);
    CHECK_THROWS_AS(student_t_quantile(0.4, 5), ValidationError);
    CHECK_THROWS_AS(student_t_quantile(1.0, 5), ValidationError);
  }
}

TEST_SUITE("confidence intervals") {
  TEST_CASE("the hand-derived 1,2,3 interval") {
    // s = 1, t(0.975, 2) = 4.30265273, half width = 4.30265273 / sqrt(3).
    CiSummary s = aggregate_ci({1.0, 2.0, 3.0});
    CHECK(s.mean == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(s.half_width == doctest::Approx(4.30265273 / std::sqrt(3.0)).epsilon(1e-7));
    CHECK(s.half_width == doctest::Approx(2.484).epsilon(5e-4));
    CHECK(s.n_runs == 3);
    CHECK(s.defined);
  }

  TEST_CASE("degenerate inputs") {
    CiSummary equal = aggregate_ci({7.5, 7.5, 7.5, 7.5});
    CHECK(equal.half_width == 0.0);
    CHECK(equal.defined);

    CiSummary single = aggregate_ci({93.0});
    CHECK_FALSE(single.defined);
    CHECK(single.mean == 93.0);
    CHECK(single.n_runs == 1);

    CHECK_THROWS_AS(aggregate_ci({}), ValidationError);
    CHECK_THROWS_AS(aggregate_ci({1.0, 2.0}, 1.5), ValidationError);
  }

  TEST_CASE("translation and scale equivariance over random lists") {
    Rng rng(2024);
    for (int trial = 0; trial < 1000; ++trial) {
      const int n = 2 + static_cast<int>(rng.uniform_int(9));
      std::vector<double> values(static_cast<std::size_t>(n));
      for (double& v : values) v = rng.uniform(0.0, 100.0);
      const double shift = rng.uniform(-50.0, 50.0);
      const double scale = rng.uniform(0.1, 10.0);

      const CiSummary base = aggregate_ci(values);

      std::vector<double> shifted = values, scaled = values;
      for (double& v : shifted) v += shift;
      for (double& v : scaled) v *= scale;

      const CiSummary s1 = aggregate_ci(shifted);
      CHECK(s1.mean == doctest::Approx(base.mean + shift).epsilon(1e-9));
      CHECK(s1.half_width == doctest::Approx(base.half_width).epsilon(1e-9).scale(1e-9));

      const CiSummary s2 = aggregate_ci(scaled);
      CHECK(s2.mean == doctest::Approx(base.mean * scale).epsilon(1e-9));
      CHECK(s2.half_width ==
            doctest::Approx(base.half_width * scale).epsilon(1e-9).scale(1e-9));
    }
  }
}

TEST_SUITE("confusion metrics") {
  TEST_CASE("published per-class P/R reproduce the published F") {
    // Values from the cross-dataset precision/recall table; F is the
    // harmonic mean of each column.
    const double precision[5] = {94.44, 69.23, 68.35, 54.90, 98.25};
    const double recall[5] = {30.91, 92.31, 91.53, 58.33, 100.00};
    const double expected_f[5] = {46.58, 79.12, 78.26, 56.57, 99.12};
    for (int i = 0; i < 5; ++i)
      CHECK(std::fabs(f_measure(precision[i], recall[i]) - expected_f[i]) <= 0.01);
  }

  TEST_CASE("identity confusion gives perfect metrics") {
    const ClassMetrics m = per_class_metrics(diagonal(10));
    for (const ClassValue& v : m.per_class) {
      CHECK(v.precision == 100.0);
      CHECK(v.recall == 100.0);
      CHECK(v.f_measure == 100.0);
      CHECK(v.f_defined);
    }
  }

  TEST_CASE("zero denominators flag instead of crashing") {
    Confusion c{};  // class 0 never occurs and is never predicted
    c[1][1] = 5;
    c[1][2] = 5;
    c[2][2] = 10;
    c[3][3] = 1;
    c[4][4] = 1;
    const ClassMetrics m = per_class_metrics(c);
    CHECK_FALSE(m.per_class[0].precision_defined);
    CHECK_FALSE(m.per_class[0].recall_defined);
    CHECK_FALSE(m.per_class[0].f_defined);
    CHECK(m.per_class[0].precision == 0.0);
    CHECK(m.per_class[0].f_measure == 0.0);

    CHECK(m.per_class[1].recall == 50.0);
    CHECK(m.per_class[1].precision == 100.0);
    CHECK(m.per_class[2].recall == 100.0);
    CHECK(m.per_class[2].precision == doctest::Approx(100.0 * 10 / 15));
  }

  TEST_CASE("label permutation permutes the metrics") {
    Rng rng(5);
    Confusion c{};
    for (auto& row : c)
      for (auto& v : row) v = static_cast<std::int64_t>(rng.uniform_int(40));
    const ClassMetrics base = per_class_metrics(c);

    const int perm[5] = {3, 0, 4, 1, 2};
    Confusion permuted{};
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j)
        permuted[static_cast<std::size_t>(perm[i])][static_cast<std::size_t>(perm[j])] =
            c[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    const ClassMetrics moved = per_class_metrics(permuted);

    for (int i = 0; i < 5; ++i) {
      const ClassValue& a = base.per_class[static_cast<std::size_t>(i)];
      const ClassValue& b = moved.per_class[static_cast<std::size_t>(perm[i])];
      CHECK(a.precision == doctest::Approx(b.precision).epsilon(1e-12));
      CHECK(a.recall == doctest::Approx(b.recall).epsilon(1e-12));
      CHECK(a.f_measure == doctest::Approx(b.f_measure).epsilon(1e-12));
    }
  }

  TEST_CASE("f lies between min and max of P and R") {
    Rng rng(17);
    for (int trial = 0; trial < 200; ++trial) {
      Confusion c{};
      for (auto& row : c)
        for (auto& v : row) v = static_cast<std::int64_t>(rng.uniform_int(30));
      const ClassMetrics m = per_class_metrics(c);
      for (const ClassValue& v : m.per_class) {
        if (!v.f_defined) continue;
        CHECK(v.f_measure <= std::max(v.precision, v.recall) + 1e-9);
        CHECK(v.f_measure >= std::min(v.precision, v.recall) - 1e-9);
      }
    }
  }
}

TEST_SUITE("evaluation") {
  TEST_CASE("constant-neutrophil predictor on the Test-B class counts") {
    // Test-B ships 148 lymphocytes, 1971 neutrophils, and none of the other
    // three classes; always answering neutrophil scores 1971/2119.
    std::vector<int> labels, predicted;
    const int lymphocyte = static_cast<int>(data::WbcClass::kLymphocyte);
    const int neutrophil = static_cast<int>(data::WbcClass::kNeutrophil);
    labels.insert(labels.end(), 148, lymphocyte);
    labels.insert(labels.end(), 1971, neutrophil);
    predicted.assign(labels.size(), neutrophil);

    const EvalResult r = evaluate_predictions("RAABIN_TEST_B", labels, predicted);
    CHECK(r.n == 2119);
    CHECK(r.accuracy == doctest::Approx(100.0 * 1971.0 / 2119.0).epsilon(1e-12));
    CHECK(std::fabs(r.accuracy - 93.0) <= 0.05);  // rounds to the quoted 93.0
    CHECK(r.confusion[static_cast<std::size_t>(lymphocyte)][static_cast<std::size_t>(neutrophil)] ==
          148);
    CHECK(r.confusion[static_cast<std::size_t>(neutrophil)][static_cast<std::size_t>(neutrophil)] ==
          1971);
    // Monocyte, eosinophil, basophil are absent and flagged.
    CHECK(r.absent_classes.size() == 3);
    CHECK(std::find(r.absent_classes.begin(), r.absent_classes.end(), "MONOCYTE") !=
          r.absent_classes.end());
  }

  TEST_CASE("perfect predictor and row-sum invariant") {
    Rng rng(3);
    std::vector<int> labels;
    for (int i = 0; i < 100; ++i) labels.push_back(static_cast<int>(rng.uniform_int(5)));
    const EvalResult perfect = evaluate_predictions("LISC", labels, labels);
    CHECK(perfect.accuracy == 100.0);
    for (int c = 0; c < kNumClasses; ++c)
      CHECK(perfect.row_sum(c) == std::count(labels.begin(), labels.end(), c));

    std::vector<int> wrong(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) wrong[i] = (labels[i] + 1) % 5;
    CHECK(evaluate_predictions("LISC", labels, wrong).accuracy == 0.0);
  }

  TEST_CASE("eval result json round trip and validation") {
    std::vector<int> labels = {0, 1, 2, 3, 4, 2, 2, 1};
    std::vector<int> predicted = {0, 1, 2, 3, 3, 2, 1, 1};
    const EvalResult r = evaluate_predictions("SYNTH_SHIFTED", labels, predicted);
    const EvalResult back = EvalResult::from_json(r.to_json());
    CHECK(back.dataset == r.dataset);
    CHECK(back.n == r.n);
    CHECK(back.accuracy == r.accuracy);
    CHECK(back.confusion == r.confusion);
    CHECK(back.absent_classes == r.absent_classes);

    // Tampered JSON: trace no longer matches the stored accuracy.
    std::string json = r.to_json();
    const auto pos = json.find("\"accuracy\":");
    REQUIRE(pos != std::string::npos);
    std::string tampered = json.substr(0, pos) + "\"accuracy\":12.5," +
                           json.substr(json.find("\"confusion\""));
    CHECK_THROWS_AS(EvalResult::from_json(tampered), ValidationError);
  }

  TEST_CASE("argmax breaks ties toward the first class") {
    Tensor logits({2, 5}, 0.0f);
    logits[0 * 5 + 2] = 1.0f;
    logits[0 * 5 + 4] = 1.0f;  // tie with class 2
    const std::vector<int> preds = argmax_rows(logits);
    CHECK(preds[0] == 2);
    CHECK(preds[1] == 0);  // all-equal row
  }

  TEST_CASE("model evaluation over a rendered manifest is deterministic") {
    data::SynthConfig cfg;
    cfg.n_per_class_train = 4;
    cfg.n_per_class_test = 3;
    cfg.image_size = 32;
    cfg.seed = 11;
    cfg.cache_dir = std::filesystem::temp_directory_path() / "wbcbench_eval_synth";
    std::filesystem::remove_all(cfg.cache_dir);
    const data::SynthManifests synth = data::make_synthetic_domain_pair(cfg);

    zoo::Model model = zoo::build_model(zoo::spec_for_variant("desk-bn", false), {}, 3);
    data::PreprocessConfig pre;
    pre.target_size = 32;
    pre.train_augment = false;

    const EvalResult a = evaluate(model, synth.test_source, pre, 4);
    const EvalResult b = evaluate(model, synth.test_source, pre, 7);  // different batching
    CHECK(a.n == 15);
    CHECK(a.dataset == "SYNTH_SOURCE");
    CHECK(a.confusion == b.confusion);
    std::int64_t total = 0;
    for (int c = 0; c < kNumClasses; ++c) {
      CHECK(a.row_sum(c) == synth.test_source.class_count(static_cast<data::WbcClass>(c)));
      total += a.row_sum(c);
    }
    CHECK(total == a.n);
  }
}

TEST_SUITE("variant comparison") {
  TEST_CASE("rows follow the report order, columns the dataset order") {
    std::map<std::string, std::vector<RunAccuracies>> results;
    results["b"] = {{{"RAABIN_TEST_A", 98.7}, {"LISC", 74.1}},
                    {{"RAABIN_TEST_A", 98.8}, {"LISC", 74.8}}};
    results["a"] = {{{"RAABIN_TEST_A", 98.5}, {"LISC", 23.0}},
                    {{"RAABIN_TEST_A", 98.6}, {"LISC", 23.4}}};
    results["i"] = {{{"LISC", 73.0}}};

    const ComparisonTable table = compare_variants(results);
    CHECK(table.variants == std::vector<std::string>{"a", "i", "b"});
    CHECK(table.datasets == std::vector<std::string>{"RAABIN_TEST_A", "LISC"});

    CHECK(table.cells[0][0].present);
    CHECK(table.cells[0][0].ci.mean == doctest::Approx(98.55));
    CHECK_FALSE(table.cells[1][0].present);  // variant i has no Test-A runs
    CHECK(table.cells[1][1].present);
    CHECK_FALSE(table.cells[1][1].ci.defined);  // single seed

    bool noted_missing = false, noted_point = false;
    for (const std::string& note : table.notes) {
      if (note.find("'i'") != std::string::npos &&
          note.find("RAABIN_TEST_A") != std::string::npos)
        noted_missing = true;
      if (note.find("point estimate") != std::string::npos) noted_point = true;
    }
    CHECK(noted_missing);
    CHECK(noted_point);
  }

  TEST_CASE("csv and text render stably") {
    std::map<std::string, std::vector<RunAccuracies>> results;
    results["a"] = {{{"RAABIN_TEST_A", 98.5}, {"LISC", 23.0}},
                    {{"RAABIN_TEST_A", 98.6}, {"LISC", 23.4}}};
    const ComparisonTable table = compare_variants(results);

    const std::string csv = table.to_csv();
    CHECK(csv.find("variant,dataset,n_runs,mean,half_width\n") == 0);
    CHECK(csv.find("a,RAABIN_TEST_A,2,98.55,") != std::string::npos);
    CHECK(csv == table.to_csv());  // deterministic

    const std::string text = table.to_text();
    CHECK(text.find("variant") == 0);
    CHECK(text.find("+-") != std::string::npos);
    CHECK(text == table.to_text());
  }

  TEST_CASE("validation failures") {
    CHECK_THROWS_AS(compare_variants({}), ValidationError);

    std::map<std::string, std::vector<RunAccuracies>> empty_variant;
    empty_variant["a"] = {};
    CHECK_THROWS_AS(compare_variants(empty_variant), ValidationError);

    std::map<std::string, std::vector<RunAccuracies>> unknown;
    unknown["zz"] = {{{"LISC", 1.0}}};
    CHECK_THROWS_AS(compare_variants(unknown), ValidationError);

    std::map<std::string, std::vector<RunAccuracies>> bad_tag;
    bad_tag["a"] = {{{"NOPE", 1.0}}};
    CHECK_THROWS_AS(compare_variants(bad_tag), ValidationError);
  }
}
