// tests/test_experiment.cpp
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

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "pronscore/experiment.hpp"

using namespace pronscore;
namespace fs = std::filesystem;

namespace {

struct Fixture {
  DatasetSplit split;
  MatrixSpec spec;

  static Fixture make(const std::string& dir_name) {
    SynthSpec sspec;
    sspec.n_speakers = 10;
    sspec.utts_per_speaker = 3;
    sspec.words_per_utt = {2, 3};
    sspec.phones_per_word = {2, 3};
    sspec.K = 4;
    sspec.seed = 13;
    Fixture f;
    f.split = split_by_speaker(generate_synthetic(sspec), {0.7, 0.3, 0.0}, 3);

    fs::path dir = fs::temp_directory_path() / dir_name;
    fs::remove_all(dir);
    f.spec.out_dir = dir.string();
    f.spec.config.K = sspec.K;
    f.spec.config.d_model = 8;
    f.spec.config.depth = 1;
    f.spec.config.n_heads = 1;
    f.spec.config.ffn_mult = 2;
    f.spec.config.max_seq_len = 9;
    f.spec.config.pooling = PoolingStrategy::kAttn;
    f.spec.stage1_epochs = 1;
    f.spec.ft_epochs = 1;
    f.spec.tr_epochs = 1;
    f.spec.batch_size = 10;
    f.spec.n_boot = 20;
    f.spec.jobs = 2;
    f.spec.gop_baseline = false;
    return f;
  }
};

}  // namespace

TEST_CASE("matrix schedules the full cross product of cells") {
  Fixture f = Fixture::make("pronscore_exp_grid");
  f.spec.seeds = {1, 2, 3, 4, 5};
  f.spec.draws = 5;
  f.spec.n_values = {4, 8, 12};
  f.spec.strategies = {"randbal"};
  f.spec.run_tr = false;  // finetune-only grid: 5 x 5 x 3 = 75 runs
  const auto reports = experiment_matrix(f.spec, f.split.train, f.split.dev);

  int ft_ckpts = 0;
  for (const auto& entry : fs::directory_iterator(f.spec.out_dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("2sft_", 0) == 0 && name.size() > 5 &&
        name.substr(name.size() - 5) == ".ckpt")
      ++ft_ckpts;
  }
  CHECK(ft_ckpts == 75);
  // One pooled report per (strategy, n) plus the stage-1 reference.
  CHECK(reports.size() == 4);
  CHECK(reports.count("1s_U_attn_none_nall") == 1);
  for (int64_t n : {4, 8, 12})
    CHECK(reports.count("2sft_P_attn_randbal_n" + std::to_string(n)) == 1);
  CHECK(reports.at("2sft_P_attn_randbal_n4").n_seeds == 5);
  CHECK(reports.at("2sft_P_attn_randbal_n4").n_draws == 5);
  CHECK(reports.at("2sft_P_attn_randbal_n4").n_models == 25);
}

TEST_CASE("curves emit one series per strategy and stage") {
  Fixture f = Fixture::make("pronscore_exp_curves");
  f.spec.seeds = {1, 2};
  f.spec.draws = 2;
  f.spec.n_values = {4, 8};
  f.spec.strategies = {"randbal", "randunbal", "bestbal", "bestunbal"};
  f.spec.gop_baseline = true;
  experiment_matrix(f.spec, f.split.train, f.split.dev);

  std::vector<std::string> paths;
  for (const auto& entry : fs::directory_iterator(f.spec.out_dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() > 12 && name.substr(name.size() - 12) == ".report.json")
      paths.push_back(entry.path().string());
  }
  const auto points = collect_curve_points(paths, "phone");
  std::set<std::string> series;
  for (const auto& p : points) series.insert(p.series);
  // 4 strategies x {2sft, 2str} + the 1s and gop reference lines.
  CHECK(series.size() == 10);
  for (const auto& strat : f.spec.strategies) {
    CHECK(series.count("2sft-" + strat) == 1);
    CHECK(series.count("2str-" + strat) == 1);
  }
  CHECK(series.count("1s-none") == 1);
  CHECK(series.count("gop-none") == 1);

  const fs::path tsv = fs::path(f.spec.out_dir) / "curves.tsv";
  const fs::path svg = fs::path(f.spec.out_dir) / "curves.svg";
  write_curves_tsv(tsv.string(), points);
  write_curves_svg(svg.string(), points);
  std::ifstream in(tsv);
  std::string line;
  std::getline(in, line);
  CHECK(line.rfind("#", 0) == 0);
  std::getline(in, line);
  CHECK(line == "series\tn\tpcc_mean\tpcc_ci");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == static_cast<int>(points.size()));
  std::stringstream svg_text;
  svg_text << std::ifstream(svg).rdbuf();
  CHECK(svg_text.str().find("<svg") != std::string::npos);
  CHECK(svg_text.str().find("polyline") != std::string::npos);
}

TEST_CASE("strategy tokens round trip") {
  for (const std::string tok : {"randbal", "randunbal", "bestbal", "bestunbal"}) {
    StrategyToken t = parse_strategy_token(tok);
    CHECK(strategy_token(t.strategy, t.balanced) == tok);
  }
  CHECK_THROWS_AS(parse_strategy_token("fancy"), ConfigError);
}
