// tests/test_evaluation.cpp
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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "oracles.hpp"
#include "pronscore/evaluation.hpp"
#include "pronscore/train.hpp"

using namespace pronscore;
namespace fs = std::filesystem;

TEST_CASE("pcc basics and frozen golden value") {
  CHECK(pcc({1, 2, 3}, {1, 2, 3}) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(pcc({1, 2, 3}, {3, 2, 1}) == doctest::Approx(-1.0).epsilon(1e-12));
  // Independently evaluated: cov = 4, var_x = var_y = 5, so exactly 0.8.
  const std::vector<double> x{1, 2, 3, 4}, y{1, 3, 2, 4};
  CHECK(pcc(x, y) == doctest::Approx(0.800000000000).epsilon(1e-12));
  CHECK(pcc(x, y) == doctest::Approx(oracles::pcc_loop(x, y)).epsilon(1e-14));
  CHECK_THROWS_AS(pcc({1, 1, 1}, {1, 2, 3}), DomainError);
  CHECK_THROWS_AS(pcc({1, 2, 3}, {2, 2, 2}), DomainError);
  CHECK_THROWS_AS(pcc({1}, {2}), DomainError);
  CHECK_THROWS_AS(pcc({1, 2}, {1, 2, 3}), ShapeError);
}

TEST_CASE("pcc is invariant under positive affine transforms") {
  Rng rng(3);
  for (int it = 0; it < 50; ++it) {
    const int n = static_cast<int>(rng.uniform_int(3, 20));
    std::vector<double> x, y;
    for (int i = 0; i < n; ++i) {
      x.push_back(rng.normal());
      y.push_back(rng.normal());
    }
    const double base = pcc(x, y);
    const double a = rng.uniform(0.1, 5.0), b = rng.uniform(-3.0, 3.0);
    std::vector<double> xs;
    for (double v : x) xs.push_back(a * v + b);
    CHECK(std::abs(pcc(xs, y) - base) < 1e-12);
  }
}

TEST_CASE("mse basics") {
  CHECK(mse({1, 2, 3}, {1, 2, 3}) == 0.0);
  CHECK(mse({0, 0}, {1, 1}) == 1.0);
  Rng rng(4);
  std::vector<double> x, y;
  for (int i = 0; i < 10; ++i) {
    x.push_back(rng.normal());
    y.push_back(rng.normal());
  }
  CHECK(std::abs(mse(x, y) - oracles::mse_loop(x, y)) < 1e-12);
  CHECK_THROWS_AS(mse({1, 2}, {1}), ShapeError);
}

namespace {

std::vector<ScoredItem> speaker_items(
    const std::vector<std::pair<std::string, int>>& speaker_counts) {
  std::vector<ScoredItem> items;
  Rng rng(5);
  for (const auto& [spk, count] : speaker_counts)
    for (int i = 0; i < count; ++i)
      items.push_back({spk, rng.normal(), rng.uniform(0, 2)});
  return items;
}

Metric count_metric() {
  return [](const std::vector<const ScoredItem*>& items) {
    return static_cast<double>(items.size());
  };
}

}  // namespace

TEST_CASE("bootstrap resample totals enumerate the two-speaker multisets") {
  const auto items = speaker_items({{"a", 3}, {"b", 5}});
  BootstrapResult r = bootstrap_by_speaker(items, count_metric(), 500, 9);
  CHECK(r.excluded == 0);
  for (double v : r.values) CHECK((v == 6.0 || v == 8.0 || v == 10.0));

  BootstrapResult again = bootstrap_by_speaker(items, count_metric(), 500, 9);
  CHECK(r.values == again.values);
  BootstrapResult other = bootstrap_by_speaker(items, count_metric(), 500, 10);
  CHECK(r.values != other.values);
}

TEST_CASE("bootstrap needs two speakers and reports exclusions") {
  const auto lonely = speaker_items({{"a", 4}});
  CHECK_THROWS_AS(bootstrap_by_speaker(lonely, count_metric(), 10, 1),
                  InsufficientDataError);

  // Metric undefined on every resample: constant predictions.
  std::vector<ScoredItem> constant;
  for (int i = 0; i < 6; ++i)
    constant.push_back({i % 2 ? "a" : "b", 1.0, 0.1 * i});
  BootstrapResult r = bootstrap_by_speaker(constant, metric_pcc(), 50, 2);
  CHECK(r.excluded == 50);
  CHECK(r.values.empty());
}

TEST_CASE("identical speaker contents give identical bootstrap values") {
  // Both speakers hold the same items, so every resample multiset yields
  // the same metric value.
  std::vector<ScoredItem> items;
  for (int i = 0; i < 4; ++i) {
    items.push_back({"a", 0.25 * i, 0.5 * i});
    items.push_back({"b", 0.25 * i, 0.5 * i});
  }
  BootstrapResult r = bootstrap_by_speaker(items, metric_pcc(), 100, 3);
  for (double v : r.values) CHECK(v == r.values.front());
}

TEST_CASE("three-speaker bootstrap matches multinomial enumeration") {
  // Speakers of sizes 1/10/100 make the resample total identify the speaker
  // multiset; multiset probabilities are 1/27 (aaa), 3/27 (aab), 6/27 (abc).
  const auto items = speaker_items({{"a", 1}, {"b", 10}, {"c", 100}});
  const int n_boot = 10000;
  BootstrapResult r = bootstrap_by_speaker(items, count_metric(), n_boot, 31);
  std::map<double, int> counts;
  for (double v : r.values) counts[v] += 1;
  const std::map<double, double> probs{
      {3, 1.0 / 27},   {12, 3.0 / 27},  {21, 3.0 / 27},  {30, 1.0 / 27},
      {102, 3.0 / 27}, {111, 6.0 / 27}, {120, 3.0 / 27}, {201, 3.0 / 27},
      {210, 3.0 / 27}, {300, 1.0 / 27}};
  double total_prob = 0;
  for (const auto& [total, p] : probs) total_prob += p;
  CHECK(total_prob == doctest::Approx(1.0).epsilon(1e-12));
  for (const auto& [total, p] : probs) {
    const double expected = p * n_boot;
    const double sigma = std::sqrt(n_boot * p * (1 - p));
    CHECK(std::abs(counts[total] - expected) <= 3 * sigma);
  }
}

TEST_CASE("pool_and_interval percentile convention") {
  SUBCASE("constant pool") {
    PoolSummary s = pool_and_interval({2.5, 2.5, 2.5});
    CHECK(s.mean == 2.5);
    CHECK(s.ci == 0.0);
  }
  SUBCASE("1..1000 against the hand-derived interpolation") {
    std::vector<double> v;
    for (int i = 1; i <= 1000; ++i) v.push_back(i);
    PoolSummary s = pool_and_interval(v);
    CHECK(s.mean == doctest::Approx(500.5).epsilon(1e-12));
    CHECK(s.p2_5 == doctest::Approx(25.975).epsilon(1e-9));
    CHECK(s.p97_5 == doctest::Approx(975.025).epsilon(1e-9));
    CHECK(s.ci == doctest::Approx(474.525).epsilon(1e-9));
  }
  SUBCASE("symmetric pools give symmetric distances") {
    Rng rng(6);
    std::vector<double> v;
    for (int i = 0; i < 500; ++i) {
      const double x = rng.normal();
      v.push_back(x);
      v.push_back(-x);
    }
    PoolSummary s = pool_and_interval(v);
    CHECK(std::abs(std::abs(s.mean - s.p2_5) - std::abs(s.mean - s.p97_5)) < 1e-9);
  }
  SUBCASE("order invariance") {
    std::vector<double> v{5, 1, 4, 2, 3, 9, 0, 7, 8, 6};
    PoolSummary a = pool_and_interval(v);
    Rng rng(7);
    rng.shuffle(v);
    PoolSummary b = pool_and_interval(v);
    CHECK(a.mean == b.mean);
    CHECK(a.ci == b.ci);
  }
  SUBCASE("empty pool") {
    CHECK_THROWS_AS(pool_and_interval({}), DomainError);
  }
}

TEST_CASE("trained levels follow the architecture") {
  TrainedLevels t = trained_levels(SupervisionRegime::kU, PoolingStrategy::kBase);
  CHECK((t.utt && !t.word && !t.phone));
  t = trained_levels(SupervisionRegime::kU, PoolingStrategy::kMean);
  CHECK((t.utt && !t.word && t.phone));
  t = trained_levels(SupervisionRegime::kW, PoolingStrategy::kAttn);
  CHECK((!t.utt && t.word && t.phone));
  t = trained_levels(SupervisionRegime::kP, PoolingStrategy::kBase);
  CHECK((!t.utt && !t.word && t.phone));
  t = trained_levels(SupervisionRegime::kUWP, PoolingStrategy::kBase);
  CHECK((t.utt && t.word && t.phone));
}

namespace {

struct EvalFixture {
  std::vector<UtteranceRecord> records;
  Checkpoint ckpt;

  static EvalFixture make(uint64_t seed, SupervisionRegime regime,
                          PoolingStrategy pooling) {
    SynthSpec spec;
    spec.n_speakers = 8;
    spec.utts_per_speaker = 3;
    spec.words_per_utt = {2, 3};
    spec.phones_per_word = {2, 3};
    spec.K = 4;
    spec.seed = seed;
    std::vector<UtteranceRecord> records = generate_synthetic(spec);
    ModelConfig cfg;
    cfg.K = spec.K;
    cfg.d_model = 12;
    cfg.depth = 1;
    cfg.ffn_mult = 2;
    cfg.max_seq_len = 9;
    cfg.pooling = pooling;
    TrainPlan plan;
    plan.regime = regime;
    plan.epochs = 3;
    plan.seed = seed;
    TrainResult r = train(records, cfg, plan);
    return {std::move(records), Checkpoint{r.params.clone(), r.meta}};
  }
};

}  // namespace

TEST_CASE("a perfect predictor scores PCC 1, MSE 0, ci 0 at every level") {
  EvalFixture fx = EvalFixture::make(11, SupervisionRegime::kUWP,
                                     PoolingStrategy::kMean);
  // Turn the model into a perfect predictor by rewriting the labels.
  for (auto& rec : fx.records) {
    std::vector<const UtteranceRecord*> single{&rec};
    const auto outs = extract_outputs(forward(single, fx.ckpt.params));
    for (size_t q = 0; q < rec.phones.size(); ++q)
      rec.phones[q].phone_label = outs[0].phone_scores[q];
    rec.word_labels = outs[0].word_scores;
    rec.utt_label = outs[0].utt_score;
  }
  EvalReport rep = evaluate({fx.ckpt}, fx.records, 200, 5);
  for (const LevelReport* lr : {&rep.phone, &rep.word, &rep.utt}) {
    REQUIRE(lr->present);
    CHECK(lr->pcc_mean == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(lr->pcc_ci < 1e-9);
    CHECK(*lr->mse_mean == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(*lr->mse_ci < 1e-12);
  }
  CHECK(rep.phone.n_speakers == 8);
}

TEST_CASE("evaluate honours trained levels from checkpoint metadata") {
  EvalFixture fx =
      EvalFixture::make(13, SupervisionRegime::kU, PoolingStrategy::kMean);
  EvalReport rep = evaluate({fx.ckpt}, fx.records, 50, 3);
  CHECK(rep.phone.present);
  CHECK_FALSE(rep.word.present);
  CHECK(rep.utt.present);
  CHECK(rep.n_models == 1);
  CHECK(rep.n_seeds == 1);
}

TEST_CASE("evaluate is deterministic") {
  EvalFixture fx =
      EvalFixture::make(17, SupervisionRegime::kUWP, PoolingStrategy::kAttn);
  const fs::path dir = fs::temp_directory_path() / "pronscore_eval_test";
  fs::create_directories(dir);
  const fs::path a = dir / "a.json", b = dir / "b.json";
  write_report(a.string(), evaluate({fx.ckpt}, fx.records, 100, 7));
  write_report(b.string(), evaluate({fx.ckpt}, fx.records, 100, 7));
  std::stringstream sa, sb;
  sa << std::ifstream(a).rdbuf();
  sb << std::ifstream(b).rdbuf();
  CHECK(sa.str() == sb.str());

  EvalReport back = load_report(a.string());
  CHECK(back.n_boot == 100);
  CHECK(back.phone.present);
  CHECK(back.phone.pcc_mean ==
        doctest::Approx(evaluate({fx.ckpt}, fx.records, 100, 7).phone.pcc_mean)
            .epsilon(1e-12));
}

TEST_CASE("gop baseline on the default corpus: positive PCC, no MSE") {
  SynthSpec spec;  // library defaults
  std::vector<UtteranceRecord> records = generate_synthetic(spec);
  EvalReport rep = evaluate_gop_baseline(records, spec.K, 200, 9);
  REQUIRE(rep.phone.present);
  // Regression value frozen from the first run of this configuration.
  CHECK(rep.phone.pcc_mean == doctest::Approx(0.870325).epsilon(1e-4));
  CHECK(rep.phone.pcc_mean > 0.0);
  CHECK_FALSE(rep.phone.mse_mean.has_value());
  CHECK_FALSE(rep.word.present);
}

TEST_CASE("ci shrinks as the speaker pool grows") {
  auto ci_for = [](int n_speakers, uint64_t seed) {
    SynthSpec spec;
    spec.n_speakers = n_speakers;
    spec.utts_per_speaker = 3;
    spec.K = 6;
    spec.seed = seed;
    std::vector<UtteranceRecord> records = generate_synthetic(spec);
    EvalReport rep = evaluate_gop_baseline(records, spec.K, 300, 11);
    return rep.phone.pcc_ci;
  };
  // Trend over three sizes, averaged over a few corpora.
  double small = 0, medium = 0, large = 0;
  for (uint64_t s = 0; s < 3; ++s) {
    small += ci_for(6, 100 + s);
    medium += ci_for(24, 200 + s);
    large += ci_for(96, 300 + s);
  }
  CHECK(medium < small);
  CHECK(large < medium);
}
