// src/experiment.cpp
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

#include "pronscore/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

namespace pronscore {

namespace fs = std::filesystem;

StrategyToken parse_strategy_token(const std::string& token) {
  if (token == "randbal") return {SelectionStrategy::kRandom, true};
  if (token == "randunbal") return {SelectionStrategy::kRandom, false};
  if (token == "bestbal") return {SelectionStrategy::kBest, true};
  if (token == "bestunbal") return {SelectionStrategy::kBest, false};
  throw ConfigError("unknown strategy token '" + token + "'");
}

std::string strategy_token(SelectionStrategy s, bool balanced) {
  return std::string(s == SelectionStrategy::kRandom ? "rand" : "best") +
         (balanced ? "bal" : "unbal");
}

namespace {

// Runs fn(0..count-1) on up to `jobs` worker threads. Each index is an
// independent cell; exceptions are rethrown on the caller thread.
void parallel_for(int64_t count, int jobs, const std::function<void(int64_t)>& fn) {
  if (count <= 0) return;
  jobs = static_cast<int>(std::max<int64_t>(1, std::min<int64_t>(jobs, count)));
  if (jobs == 1) {
    for (int64_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int64_t> next{0};
  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(static_cast<size_t>(jobs));
  for (int w = 0; w < jobs; ++w) {
    workers.emplace_back([&, w]() {
      try {
        for (int64_t i = next.fetch_add(1); i < count; i = next.fetch_add(1))
          fn(i);
      } catch (...) {
        errors[static_cast<size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : workers) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::string ckpt_name(const std::string& stage, const std::string& regime,
                      const std::string& pooling, const std::string& strategy,
                      const std::string& n, int draw, uint64_t seed) {
  std::ostringstream os;
  os << stage << "_" << regime << "_" << pooling << "_" << strategy << "_n" << n
     << "_d" << draw << "_s" << seed << ".ckpt";
  return os.str();
}

// Resume contract: an existing checkpoint is reused only if its config and
// training meta match the cell being scheduled.
Checkpoint load_or_train(
    const fs::path& path, const ModelConfig& config,
    const std::map<std::string, std::string>& expect_meta,
    const std::function<TrainResult()>& run) {
  if (fs::exists(path)) {
    Checkpoint ckpt = load_checkpoint(path.string());
    ensure_compatible(ckpt.config(), config);
    for (const auto& [k, v] : expect_meta) {
      auto it = ckpt.meta.find(k);
      if (it == ckpt.meta.end() || it->second != v)
        throw ConfigError("refusing to resume: artifact '" + path.string() +
                          "' has meta " + k + "='" +
                          (it == ckpt.meta.end() ? "<missing>" : it->second) +
                          "', run expects '" + v + "'");
    }
    return ckpt;
  }
  TrainResult result = run();
  std::map<std::string, std::string> meta = result.meta;
  for (const auto& [k, v] : expect_meta) meta[k] = v;
  save_checkpoint(path.string(), result.params, meta);
  std::ofstream trace(path.string() + ".trace.tsv");
  trace << "epoch\tloss\n";
  trace.precision(17);
  for (size_t e = 0; e < result.loss_trace.size(); ++e)
    trace << e + 1 << "\t" << result.loss_trace[e] << "\n";
  return Checkpoint{std::move(result.params), std::move(meta)};
}

std::vector<UtteranceRecord> subset_records(
    const std::vector<UtteranceRecord>& records,
    const std::vector<std::string>& ids) {
  std::set<std::string> wanted(ids.begin(), ids.end());
  std::vector<UtteranceRecord> out;
  for (const auto& r : records)
    if (wanted.count(r.utt_id)) out.push_back(r);
  if (out.size() != wanted.size())
    throw DataError("subset: " + std::to_string(wanted.size() - out.size()) +
                    " selected ids missing from the manifest");
  return out;
}

}  // namespace

std::map<std::string, EvalReport> experiment_matrix(
    const MatrixSpec& spec, const std::vector<UtteranceRecord>& train_records,
    const std::vector<UtteranceRecord>& dev_records) {
  if (spec.seeds.empty()) throw ConfigError("matrix: no seeds");
  if (spec.draws <= 0) throw ConfigError("matrix: draws must be positive");
  fs::create_directories(spec.out_dir);
  const fs::path out_dir(spec.out_dir);
  const std::string pooling = to_string(spec.config.pooling);
  const std::string s2_regime = to_string(spec.stage2_regime);

  // Stage 1: utterance-only models, one per seed.
  std::vector<Checkpoint> stage1(spec.seeds.size(),
                                 Checkpoint{ModelParams::init(spec.config), {}});
  parallel_for(static_cast<int64_t>(spec.seeds.size()), spec.jobs, [&](int64_t i) {
    const uint64_t seed = spec.seeds[static_cast<size_t>(i)];
    TrainPlan plan;
    plan.regime = SupervisionRegime::kU;
    plan.epochs = spec.stage1_epochs;
    plan.batch_size = spec.batch_size;
    plan.lr = spec.lr;
    plan.seed = seed;
    stage1[static_cast<size_t>(i)] = load_or_train(
        out_dir / ckpt_name("1s", "U", pooling, "none", "all", 0, seed),
        spec.config,
        {{"stage", "1s"}, {"regime", "U"}, {"train_seed", std::to_string(seed)},
         {"draw", "0"}, {"epochs", std::to_string(spec.stage1_epochs)},
         {"batch_size", std::to_string(spec.batch_size)},
         {"lr", std::to_string(spec.lr)}},
        [&]() { return train(train_records, spec.config, plan); });
  });

  // Absolute errors of each stage-1 model over the training pool.
  std::vector<std::vector<PoolItem>> pools(spec.seeds.size());
  parallel_for(static_cast<int64_t>(spec.seeds.size()), spec.jobs, [&](int64_t i) {
    pools[static_cast<size_t>(i)] = build_pool(
        train_records,
        absolute_errors(stage1[static_cast<size_t>(i)], train_records,
                        spec.batch_size));
  });

  // Stage 2 cells: strategy x n x draw x seed, finetune and/or from-scratch.
  struct Cell {
    std::string strategy;
    int64_t n;
    int draw;
    size_t seed_idx;
  };
  std::vector<Cell> cells;
  for (const auto& strat : spec.strategies)
    for (int64_t n : spec.n_values)
      for (int d = 0; d < spec.draws; ++d)
        for (size_t si = 0; si < spec.seeds.size(); ++si)
          cells.push_back({strat, n, d, si});

  std::map<std::string, std::vector<Checkpoint>> group_ft, group_tr;
  for (const auto& c : cells) {
    const std::string stem = c.strategy + "_n" + std::to_string(c.n);
    if (spec.run_ft) group_ft["2sft_" + s2_regime + "_" + pooling + "_" + stem];
    if (spec.run_tr) group_tr["2str_" + s2_regime + "_" + pooling + "_" + stem];
  }
  std::vector<std::vector<Checkpoint>> cell_ft(cells.size()), cell_tr(cells.size());

  parallel_for(static_cast<int64_t>(cells.size()), spec.jobs, [&](int64_t i) {
    const Cell& c = cells[static_cast<size_t>(i)];
    const uint64_t seed = spec.seeds[c.seed_idx];
    const StrategyToken tok = parse_strategy_token(c.strategy);

    SelectionSpec sel;
    sel.n = c.n;
    sel.strategy = tok.strategy;
    sel.balanced = tok.balanced;
    sel.bins = spec.bins;
    // Subset draws are data-selection randomness, shared across training
    // seeds; "best" cells differ per seed through the AE pool instead.
    sel.seed = mix_seed(0x5e1ec7ULL, static_cast<uint64_t>(c.draw));
    std::vector<std::string> ids = select(pools[c.seed_idx], sel);

    const fs::path ids_path =
        out_dir / ("sel_" + c.strategy + "_n" + std::to_string(c.n) + "_d" +
                   std::to_string(c.draw) + "_s" + std::to_string(seed) + ".ids");
    if (!fs::exists(ids_path)) {
      std::ofstream f(ids_path);
      f << "# strategy=" << c.strategy << " n=" << c.n << " draw=" << c.draw
        << " seed=" << seed << " bins=" << spec.bins << "\n";
      for (const auto& id : ids) f << id << "\n";
    }
    std::vector<UtteranceRecord> subset = subset_records(train_records, ids);

    std::map<std::string, std::string> cell_meta{
        {"stage", ""},  // filled below
        {"regime", s2_regime},
        {"train_seed", std::to_string(seed)},
        {"draw", std::to_string(c.draw)},
        {"strategy", c.strategy},
        {"n", std::to_string(c.n)},
        {"batch_size", std::to_string(spec.batch_size)},
        {"lr", std::to_string(spec.lr)}};

    if (spec.run_ft) {
      TrainPlan plan;
      plan.regime = spec.stage2_regime;
      plan.epochs = spec.ft_epochs;
      plan.batch_size = spec.batch_size;
      plan.lr = spec.lr;
      plan.seed = seed;
      auto meta = cell_meta;
      meta["stage"] = "2sft";
      meta["epochs"] = std::to_string(spec.ft_epochs);
      cell_ft[static_cast<size_t>(i)].push_back(load_or_train(
          out_dir / ckpt_name("2sft", s2_regime, pooling, c.strategy,
                              std::to_string(c.n), c.draw, seed),
          spec.config, meta,
          [&]() { return finetune(stage1[c.seed_idx], subset, plan); }));
    }
    if (spec.run_tr) {
      TrainPlan plan;
      plan.regime = spec.stage2_regime;
      plan.epochs = spec.tr_epochs;
      plan.batch_size = spec.batch_size;
      plan.lr = spec.lr;
      plan.seed = seed;
      auto meta = cell_meta;
      meta["stage"] = "2str";
      meta["epochs"] = std::to_string(spec.tr_epochs);
      cell_tr[static_cast<size_t>(i)].push_back(load_or_train(
          out_dir / ckpt_name("2str", s2_regime, pooling, c.strategy,
                              std::to_string(c.n), c.draw, seed),
          spec.config, meta,
          [&]() { return train(subset, spec.config, plan); }));
    }
  });

  for (size_t i = 0; i < cells.size(); ++i) {
    const Cell& c = cells[i];
    const std::string stem = c.strategy + "_n" + std::to_string(c.n);
    if (spec.run_ft)
      for (auto& ck : cell_ft[i])
        group_ft["2sft_" + s2_regime + "_" + pooling + "_" + stem].push_back(
            std::move(ck));
    if (spec.run_tr)
      for (auto& ck : cell_tr[i])
        group_tr["2str_" + s2_regime + "_" + pooling + "_" + stem].push_back(
            std::move(ck));
  }

  // Pooled reports per cell group plus the stage-1 and GOP references.
  std::map<std::string, EvalReport> reports;
  auto emit = [&](const std::string& stem, const std::vector<Checkpoint>& cks,
                  std::map<std::string, std::string> meta) {
    EvalReport rep = evaluate(cks, dev_records, spec.n_boot, spec.eval_seed,
                              spec.batch_size);
    rep.meta = std::move(meta);
    write_report((out_dir / (stem + ".report.json")).string(), rep);
    reports[stem] = std::move(rep);
  };

  emit("1s_U_" + pooling + "_none_nall", stage1,
       {{"stage", "1s"}, {"regime", "U"}, {"strategy", "none"}, {"n", "all"}});
  for (auto& [stem, cks] : group_ft)
    emit(stem, cks,
         {{"stage", "2sft"}, {"regime", s2_regime}});
  for (auto& [stem, cks] : group_tr)
    emit(stem, cks,
         {{"stage", "2str"}, {"regime", s2_regime}});
  if (spec.gop_baseline) {
    EvalReport rep = evaluate_gop_baseline(dev_records, spec.config.K,
                                           spec.n_boot, spec.eval_seed);
    write_report((out_dir / "gop_base_none_none_nall.report.json").string(), rep);
    reports["gop_base_none_none_nall"] = std::move(rep);
  }
  return reports;
}

std::vector<CurvePoint> collect_curve_points(
    const std::vector<std::string>& report_paths, const std::string& level) {
  std::vector<CurvePoint> out;
  for (const auto& path : report_paths) {
    std::string stem = fs::path(path).filename().string();
    const std::string suffix = ".report.json";
    if (stem.size() <= suffix.size() ||
        stem.substr(stem.size() - suffix.size()) != suffix)
      throw ConfigError("curves: '" + path + "' is not a .report.json file");
    stem = stem.substr(0, stem.size() - suffix.size());
    std::vector<std::string> tokens;
    std::stringstream ss(stem);
    std::string tok;
    while (std::getline(ss, tok, '_')) tokens.push_back(tok);
    if (tokens.size() != 5 || tokens[4].empty() || tokens[4][0] != 'n')
      throw ConfigError("curves: cannot parse cell from name '" + stem +
                        "'; expected <stage>_<regime>_<pooling>_<strategy>_n<k>");
    CurvePoint pt;
    pt.series = tokens[0] + "-" + tokens[3];
    const std::string nstr = tokens[4].substr(1);
    pt.n = nstr == "all" || nstr == "none" ? -1 : std::stoll(nstr);

    EvalReport rep = load_report(path);
    const LevelReport* lr = nullptr;
    if (level == "phone") lr = &rep.phone;
    else if (level == "word") lr = &rep.word;
    else if (level == "utterance") lr = &rep.utt;
    else throw ConfigError("curves: unknown level '" + level + "'");
    if (!lr->present)
      throw ConfigError("curves: report '" + path + "' has no " + level +
                        " level");
    pt.pcc_mean = lr->pcc_mean;
    pt.pcc_ci = lr->pcc_ci;
    out.push_back(std::move(pt));
  }
  std::sort(out.begin(), out.end(), [](const CurvePoint& a, const CurvePoint& b) {
    return a.series != b.series ? a.series < b.series : a.n < b.n;
  });
  return out;
}

void write_curves_tsv(const std::string& path,
                      const std::vector<CurvePoint>& points) {
  std::ofstream out(path);
  if (!out) throw FileError("cannot write curves table '" + path + "'");
  out << "# pronscore curves; n=-1 marks full-data reference systems\n";
  out << "series\tn\tpcc_mean\tpcc_ci\n";
  out.precision(17);
  for (const auto& p : points)
    out << p.series << "\t" << p.n << "\t" << p.pcc_mean << "\t" << p.pcc_ci
        << "\n";
}

void write_curves_svg(const std::string& path,
                      const std::vector<CurvePoint>& points) {
  if (points.empty()) throw ConfigError("curves: nothing to plot");
  const double width = 640, height = 420, ml = 60, mr = 160, mt = 20, mb = 45;
  double n_lo = 1e300, n_hi = 0, y_lo = 1e300, y_hi = -1e300;
  for (const auto& p : points) {
    if (p.n > 0) {
      n_lo = std::min(n_lo, static_cast<double>(p.n));
      n_hi = std::max(n_hi, static_cast<double>(p.n));
    }
    y_lo = std::min(y_lo, p.pcc_mean - p.pcc_ci);
    y_hi = std::max(y_hi, p.pcc_mean + p.pcc_ci);
  }
  if (n_hi <= 0) { n_lo = 1; n_hi = 10; }
  if (n_lo == n_hi) n_hi = n_lo * 2;
  const double pad = 0.05 * std::max(1e-6, y_hi - y_lo);
  y_lo -= pad;
  y_hi += pad;
  auto xmap = [&](double n) {
    return ml + (std::log10(n) - std::log10(n_lo)) /
                    (std::log10(n_hi) - std::log10(n_lo)) * (width - ml - mr);
  };
  auto ymap = [&](double v) {
    return height - mb - (v - y_lo) / (y_hi - y_lo) * (height - mt - mb);
  };

  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                 "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
  std::map<std::string, std::vector<const CurvePoint*>> series;
  for (const auto& p : points) series[p.series].push_back(&p);

  std::ofstream out(path);
  if (!out) throw FileError("cannot write svg '" + path + "'");
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<line x1=\"" << ml << "\" y1=\"" << height - mb << "\" x2=\""
      << width - mr << "\" y2=\"" << height - mb << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml
      << "\" y2=\"" << height - mb << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << (ml + width - mr) / 2 << "\" y=\"" << height - 10
      << "\" text-anchor=\"middle\" font-size=\"13\">selected utterances "
         "(log scale)</text>\n";
  out << "<text x=\"15\" y=\"" << (mt + height - mb) / 2
      << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 15 "
      << (mt + height - mb) / 2 << ")\">phoneme PCC</text>\n";
  for (double v = std::ceil(y_lo * 10) / 10; v <= y_hi; v += 0.1) {
    out << "<line x1=\"" << ml << "\" y1=\"" << ymap(v) << "\" x2=\""
        << width - mr << "\" y2=\"" << ymap(v)
        << "\" stroke=\"#dddddd\"/>\n"
        << "<text x=\"" << ml - 8 << "\" y=\"" << ymap(v) + 4
        << "\" text-anchor=\"end\" font-size=\"11\">" << v << "</text>\n";
  }

  int ci = 0, legend_y = static_cast<int>(mt) + 10;
  for (const auto& [name, pts] : series) {
    const char* color = colors[ci++ % 8];
    bool reference = pts.size() == 1 && pts[0]->n < 0;
    if (reference) {
      const double y = ymap(pts[0]->pcc_mean);
      out << "<line x1=\"" << ml << "\" y1=\"" << y << "\" x2=\"" << width - mr
          << "\" y2=\"" << y << "\" stroke=\"" << color
          << "\" stroke-dasharray=\"6,4\"/>\n";
    } else {
      out << "<polyline fill=\"none\" stroke=\"" << color
          << "\" stroke-width=\"1.5\" points=\"";
      for (const auto* p : pts)
        if (p->n > 0) out << xmap(static_cast<double>(p->n)) << "," << ymap(p->pcc_mean) << " ";
      out << "\"/>\n";
      for (const auto* p : pts) {
        if (p->n <= 0) continue;
        const double x = xmap(static_cast<double>(p->n));
        out << "<circle cx=\"" << x << "\" cy=\"" << ymap(p->pcc_mean)
            << "\" r=\"3\" fill=\"" << color << "\"/>\n";
        out << "<line x1=\"" << x << "\" y1=\"" << ymap(p->pcc_mean - p->pcc_ci)
            << "\" x2=\"" << x << "\" y2=\"" << ymap(p->pcc_mean + p->pcc_ci)
            << "\" stroke=\"" << color << "\"/>\n";
        out << "<text x=\"" << x << "\" y=\"" << height - mb + 15
            << "\" text-anchor=\"middle\" font-size=\"11\">" << p->n
            << "</text>\n";
      }
    }
    out << "<rect x=\"" << width - mr + 10 << "\" y=\"" << legend_y - 8
        << "\" width=\"12\" height=\"4\" fill=\"" << color << "\"/>\n";
    out << "<text x=\"" << width - mr + 28 << "\" y=\"" << legend_y
        << "\" font-size=\"11\">" << name << "</text>\n";
    legend_y += 18;
  }
  out << "</svg>\n";
}

}  // namespace pronscore
