// tools/pronscore.cpp
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
// pronscore: weakly-supervised phoneme-level pronunciation scoring.
// Subcommands cover the full pipeline: synth -> split -> train -> select ->
// finetune -> evaluate -> curves, plus gop-features ingestion and a matrix
// runner for two-stage experiment grids.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "pronscore/data_model.hpp"
#include "pronscore/evaluation.hpp"
#include "pronscore/experiment.hpp"
#include "pronscore/gop.hpp"
#include "pronscore/selection.hpp"
#include "pronscore/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pronscore;

namespace {

constexpr const char* kToolVersion = "0.1.0";

int exit_code_for(const Error& e) {
  const std::string& c = e.category();
  if (c == "file") return 3;
  if (c == "parse" || c == "validation" || c == "range") return 4;
  if (c == "config") return 5;
  if (c == "data" || c == "missing-label" || c == "insufficient-data" ||
      c == "domain")
    return 6;
  return 1;
}

void emit_error(const std::string& category, const std::string& message) {
  json err{{"error", {{"category", category}, {"message", message}}}};
  std::cerr << err.dump() << "\n";
}

json synth_spec_json(const SynthSpec& s) {
  return json{{"tool_version", kToolVersion},
              {"n_speakers", s.n_speakers},
              {"utts_per_speaker", s.utts_per_speaker},
              {"words_per_utt", {s.words_per_utt.lo, s.words_per_utt.hi}},
              {"phones_per_word", {s.phones_per_word.lo, s.phones_per_word.hi}},
              {"K", s.K},
              {"noise_phone", s.noise_phone},
              {"noise_word", s.noise_word},
              {"noise_utt", s.noise_utt},
              {"feature_snr", s.feature_snr},
              {"seed", s.seed}};
}

struct ModelFlags {
  int d_model = 24;
  int depth = 3;
  int n_heads = 1;
  int ffn_mult = 4;
  int max_seq_len = 50;
  double dropout = 0.0;
  std::string pooling = "attn";

  void attach(CLI::App* cmd) {
    cmd->add_option("--pooling", pooling, "Pooling strategy: base|mean|attn")
        ->default_val(pooling);
    cmd->add_option("--d-model", d_model, "Embedding width")->default_val(d_model);
    cmd->add_option("--depth", depth, "Encoder layers")->default_val(depth);
    cmd->add_option("--heads", n_heads, "Attention heads")->default_val(n_heads);
    cmd->add_option("--ffn-mult", ffn_mult, "Feed-forward width multiplier")
        ->default_val(ffn_mult);
    cmd->add_option("--max-seq-len", max_seq_len, "Maximum phones per utterance")
        ->default_val(max_seq_len);
    cmd->add_option("--dropout", dropout, "Dropout rate during training")
        ->default_val(dropout);
  }

  ModelConfig to_config(int K) const {
    ModelConfig cfg;
    cfg.K = K;
    cfg.d_model = d_model;
    cfg.depth = depth;
    cfg.n_heads = n_heads;
    cfg.ffn_mult = ffn_mult;
    cfg.max_seq_len = max_seq_len;
    cfg.dropout = dropout;
    cfg.pooling = pooling_from_string(pooling);
    return cfg;
  }
};

void write_trace(const std::string& path, const std::vector<double>& trace) {
  std::ofstream out(path);
  if (!out) throw FileError("cannot write loss trace '" + path + "'");
  out << "epoch\tloss\n";
  out.precision(17);
  for (size_t e = 0; e < trace.size(); ++e)
    out << e + 1 << "\t" << trace[e] << "\n";
}

std::vector<UtteranceRecord> filter_subset(std::vector<UtteranceRecord> records,
                                           const std::string& ids_path) {
  std::ifstream in(ids_path);
  if (!in) throw FileError("cannot open subset file '" + ids_path + "'");
  std::set<std::string> wanted;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    wanted.insert(line);
  }
  std::vector<UtteranceRecord> out;
  for (auto& r : records)
    if (wanted.count(r.utt_id)) out.push_back(std::move(r));
  if (out.size() != wanted.size())
    throw DataError("subset file '" + ids_path + "' names " +
                    std::to_string(wanted.size() - out.size()) +
                    " utterances missing from the manifest");
  return out;
}

std::map<std::string, std::string> parse_meta(const std::vector<std::string>& kvs) {
  std::map<std::string, std::string> meta;
  for (const auto& kv : kvs) {
    const auto pos = kv.find('=');
    if (pos == std::string::npos)
      throw ConfigError("--meta expects key=value, got '" + kv + "'");
    meta[kv.substr(0, pos)] = kv.substr(pos + 1);
  }
  return meta;
}

int run(int argc, char** argv) {
  CLI::App app{"pronscore: phoneme-level pronunciation scoring with weak "
               "supervision and annotation-budget selection"};
  app.set_version_flag("--version", kToolVersion);
  app.set_config("--config", "", "Flat key=value config file; flags override");
  app.require_subcommand(1);

  // ---- synth ----------------------------------------------------------
  auto* synth = app.add_subcommand("synth", "Generate a synthetic labeled corpus");
  SynthSpec sspec;
  std::string synth_out, synth_preset = "default";
  synth->add_option("--spec", synth_preset, "Preset name (default)")
      ->default_val(synth_preset);
  synth->add_option("--out", synth_out, "Output manifest path")->required();
  synth->add_option("--speakers", sspec.n_speakers)->default_val(sspec.n_speakers);
  synth->add_option("--utts", sspec.utts_per_speaker)
      ->default_val(sspec.utts_per_speaker);
  synth->add_option("--words-min", sspec.words_per_utt.lo)
      ->default_val(sspec.words_per_utt.lo);
  synth->add_option("--words-max", sspec.words_per_utt.hi)
      ->default_val(sspec.words_per_utt.hi);
  synth->add_option("--phones-min", sspec.phones_per_word.lo)
      ->default_val(sspec.phones_per_word.lo);
  synth->add_option("--phones-max", sspec.phones_per_word.hi)
      ->default_val(sspec.phones_per_word.hi);
  synth->add_option("--k", sspec.K, "Phone inventory size")->default_val(sspec.K);
  synth->add_option("--noise-phone", sspec.noise_phone)->default_val(sspec.noise_phone);
  synth->add_option("--noise-word", sspec.noise_word)->default_val(sspec.noise_word);
  synth->add_option("--noise-utt", sspec.noise_utt)->default_val(sspec.noise_utt);
  synth->add_option("--snr", sspec.feature_snr, "Feature signal-to-noise ratio")
      ->default_val(sspec.feature_snr);
  synth->add_option("--seed", sspec.seed)->envname("PRONSCORE_SEED")
      ->default_val(sspec.seed);

  // ---- gop-features ---------------------------------------------------
  auto* gopf = app.add_subcommand(
      "gop-features", "Compute GOP feature manifests from posteriors + alignments");
  std::string gop_posteriors, gop_alignments, gop_out, gop_speakers;
  gopf->add_option("--posteriors", gop_posteriors,
                   "Directory of per-utterance posterior files (<utt_id>.post)")
      ->required();
  gopf->add_option("--alignments", gop_alignments, "Alignment file")->required();
  gopf->add_option("--out", gop_out, "Output manifest path")->required();
  gopf->add_option("--speakers", gop_speakers,
                   "Optional utt_id -> speaker_id map file");

  // ---- split ----------------------------------------------------------
  auto* split_cmd = app.add_subcommand("split", "Speaker-disjoint corpus split");
  std::string split_manifest, out_train, out_dev, out_test;
  std::vector<double> split_fracs{0.8, 0.1, 0.1};
  uint64_t split_seed = 0;
  split_cmd->add_option("--manifest", split_manifest)->required();
  split_cmd->add_option("--fractions", split_fracs,
                        "Train/dev/test fractions (three values summing to 1)")
      ->expected(3);
  split_cmd->add_option("--seed", split_seed)->envname("PRONSCORE_SEED")
      ->default_val(split_seed);
  split_cmd->add_option("--out-train", out_train)->required();
  split_cmd->add_option("--out-dev", out_dev)->required();
  split_cmd->add_option("--out-test", out_test);

  // ---- train ----------------------------------------------------------
  auto* train_cmd = app.add_subcommand("train", "Train a scorer from scratch");
  std::string train_manifest, train_regime = "UWP", train_out, train_trace;
  ModelFlags train_model;
  TrainPlan train_plan;
  train_cmd->add_option("--manifest", train_manifest)->required();
  train_cmd->add_option("--regime", train_regime, "UWP|P|W|UW|U")
      ->default_val(train_regime);
  train_model.attach(train_cmd);
  train_cmd->add_option("--epochs", train_plan.epochs)->default_val(100);
  train_cmd->add_option("--batch", train_plan.batch_size)->default_val(25);
  train_cmd->add_option("--lr", train_plan.lr)->default_val(1e-3);
  train_cmd->add_option("--seed", train_plan.seed)->envname("PRONSCORE_SEED")
      ->default_val(train_plan.seed);
  train_cmd->add_option("--out", train_out, "Checkpoint path")->required();
  train_cmd->add_option("--trace", train_trace,
                        "Loss trace path (default <out>.trace.tsv)");
  std::string train_dev;
  bool train_best_dev = false;
  train_cmd->add_option("--dev-manifest", train_dev,
                        "Dev manifest for --select-best-dev");
  train_cmd->add_flag("--select-best-dev", train_best_dev,
                      "Keep the epoch with the lowest dev loss instead of the "
                      "final epoch");

  // ---- select ---------------------------------------------------------
  auto* select_cmd =
      app.add_subcommand("select", "Pick utterances for stage-2 labeling");
  std::string sel_ckpt, sel_manifest, sel_strategy = "random", sel_out;
  SelectionSpec sel_spec;
  bool sel_balanced = false;
  select_cmd->add_option("--ckpt", sel_ckpt, "Stage-1 checkpoint")->required();
  select_cmd->add_option("--manifest", sel_manifest)->required();
  select_cmd->add_option("--n", sel_spec.n)->required();
  select_cmd->add_option("--strategy", sel_strategy, "random|best")
      ->default_val(sel_strategy);
  select_cmd->add_flag("--balanced", sel_balanced,
                       "Balance over ground-truth score bins");
  select_cmd->add_option("--bins", sel_spec.bins)->default_val(sel_spec.bins);
  select_cmd->add_option("--seed", sel_spec.seed)->envname("PRONSCORE_SEED")
      ->default_val(sel_spec.seed);
  select_cmd->add_option("--out", sel_out)->required();

  // ---- finetune -------------------------------------------------------
  auto* ft_cmd = app.add_subcommand("finetune", "Stage-2 finetune a checkpoint");
  std::string ft_from, ft_manifest, ft_subset, ft_regime = "P", ft_out,
              ft_pooling, ft_trace;
  TrainPlan ft_plan;
  ft_cmd->add_option("--from", ft_from, "Stage-1 checkpoint")->required();
  ft_cmd->add_option("--manifest", ft_manifest)->required();
  ft_cmd->add_option("--subset", ft_subset, "File of utt_ids to keep");
  ft_cmd->add_option("--regime", ft_regime)->default_val(ft_regime);
  ft_cmd->add_option("--pooling", ft_pooling,
                     "Expected pooling; rejected on mismatch");
  ft_cmd->add_option("--epochs", ft_plan.epochs)->default_val(30);
  ft_cmd->add_option("--batch", ft_plan.batch_size)->default_val(25);
  ft_cmd->add_option("--lr", ft_plan.lr)->default_val(1e-3);
  ft_cmd->add_option("--seed", ft_plan.seed)->envname("PRONSCORE_SEED")
      ->default_val(ft_plan.seed);
  ft_cmd->add_option("--out", ft_out)->required();
  ft_cmd->add_option("--trace", ft_trace);
  std::string ft_dev;
  bool ft_best_dev = false;
  ft_cmd->add_option("--dev-manifest", ft_dev,
                     "Dev manifest for --select-best-dev");
  ft_cmd->add_flag("--select-best-dev", ft_best_dev,
                   "Keep the epoch with the lowest dev loss instead of the "
                   "final epoch");

  // ---- evaluate -------------------------------------------------------
  auto* eval_cmd = app.add_subcommand(
      "evaluate", "Bootstrap evaluation of checkpoints (or the GOP baseline)");
  std::vector<std::string> eval_ckpts, eval_meta;
  std::string eval_manifest, eval_out;
  int eval_nboot = 1000;
  uint64_t eval_seed = 0;
  bool eval_gop = false;
  eval_cmd->add_option("--ckpt", eval_ckpts, "Checkpoint(s); repeat to pool");
  eval_cmd->add_option("--manifest", eval_manifest)->required();
  eval_cmd->add_option("--nboot", eval_nboot)->default_val(eval_nboot);
  eval_cmd->add_option("--seed", eval_seed)->envname("PRONSCORE_SEED")
      ->default_val(eval_seed);
  eval_cmd->add_flag("--gop-baseline", eval_gop,
                     "Score the raw GOP value instead of a model");
  eval_cmd->add_option("--meta", eval_meta, "key=value pairs echoed into the report");
  eval_cmd->add_option("--out", eval_out)->required();

  // ---- curves ---------------------------------------------------------
  auto* curves_cmd = app.add_subcommand(
      "curves", "Aggregate reports into an annotation-budget table/plot");
  std::vector<std::string> curve_reports;
  std::string curves_dir, curves_out, curves_plot, curves_level = "phone";
  curves_cmd->add_option("--reports", curve_reports, "Report files");
  curves_cmd->add_option("--reports-dir", curves_dir,
                         "Directory scanned for *.report.json");
  curves_cmd->add_option("--level", curves_level)->default_val(curves_level);
  curves_cmd->add_option("--out", curves_out, "TSV table path")->required();
  curves_cmd->add_option("--plot", curves_plot, "Optional SVG path");

  // ---- matrix ---------------------------------------------------------
  auto* matrix_cmd = app.add_subcommand(
      "matrix", "Run a two-stage experiment grid (resumable)");
  MatrixSpec mspec;
  ModelFlags matrix_model;
  std::string m_train, m_dev, m_regime = "P", m_modes = "ft,tr";
  matrix_cmd->add_option("--train-manifest", m_train)->required();
  matrix_cmd->add_option("--dev-manifest", m_dev)->required();
  matrix_cmd->add_option("--out-dir", mspec.out_dir)->required();
  matrix_cmd->add_option("--seeds", mspec.seeds, "Training seeds")
      ->delimiter(',');
  matrix_cmd->add_option("--draws", mspec.draws)->default_val(mspec.draws);
  matrix_cmd->add_option("--n", mspec.n_values, "Subset sizes")->delimiter(',');
  matrix_cmd->add_option("--strategies", mspec.strategies,
                         "randbal,randunbal,bestbal,bestunbal")
      ->delimiter(',');
  matrix_cmd->add_option("--stage2-regime", m_regime, "P or W")
      ->default_val(m_regime);
  matrix_cmd->add_option("--stage1-epochs", mspec.stage1_epochs)
      ->default_val(mspec.stage1_epochs);
  matrix_cmd->add_option("--ft-epochs", mspec.ft_epochs)->default_val(mspec.ft_epochs);
  matrix_cmd->add_option("--tr-epochs", mspec.tr_epochs)->default_val(mspec.tr_epochs);
  matrix_cmd->add_option("--batch", mspec.batch_size)->default_val(mspec.batch_size);
  matrix_cmd->add_option("--lr", mspec.lr)->default_val(mspec.lr);
  matrix_cmd->add_option("--bins", mspec.bins)->default_val(mspec.bins);
  matrix_cmd->add_option("--nboot", mspec.n_boot)->default_val(mspec.n_boot);
  matrix_cmd->add_option("--eval-seed", mspec.eval_seed)
      ->envname("PRONSCORE_SEED")->default_val(mspec.eval_seed);
  matrix_cmd->add_option("--jobs", mspec.jobs, "Parallel cells")
      ->default_val(mspec.jobs);
  matrix_cmd->add_option("--modes", m_modes, "Comma list of ft,tr")
      ->default_val(m_modes);
  matrix_model.attach(matrix_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << app.help() << "\n";
    emit_error("usage", e.what());
    return 2;
  }

  if (synth->parsed()) {
    if (synth_preset != "default")
      throw ConfigError("unknown synth preset '" + synth_preset + "'");
    Corpus corpus{sspec.K, generate_synthetic(sspec)};
    write_manifest(synth_out, corpus, synth_spec_json(sspec).dump());
    std::cout << "wrote " << corpus.records.size() << " utterances to "
              << synth_out << "\n";
    return 0;
  }

  if (gopf->parsed()) {
    std::map<std::string, std::string> speaker_map;
    if (!gop_speakers.empty()) {
      std::ifstream in(gop_speakers);
      if (!in) throw FileError("cannot open speaker map '" + gop_speakers + "'");
      std::string utt, spk;
      while (in >> utt >> spk) speaker_map[utt] = spk;
    }
    auto speaker_of = [&](const std::string& utt) {
      auto it = speaker_map.find(utt);
      if (it != speaker_map.end()) return it->second;
      const auto pos = utt.find('_');
      return pos == std::string::npos ? utt : utt.substr(0, pos);
    };

    const auto alignments = load_alignments(gop_alignments);
    std::vector<std::string> utt_order;
    std::map<std::string, std::vector<AlignmentEntry>> by_utt;
    for (const auto& e : alignments) {
      if (!by_utt.count(e.utt_id)) utt_order.push_back(e.utt_id);
      by_utt[e.utt_id].push_back(e);
    }

    Corpus corpus;
    corpus.K = 0;
    for (const auto& utt : utt_order) {
      PosteriorMatrix post =
          load_posteriors((fs::path(gop_posteriors) / (utt + ".post")).string());
      if (corpus.K == 0)
        corpus.K = static_cast<int>(post.K);
      else if (corpus.K != post.K)
        throw ValidationError("posterior file for '" + utt + "' has K=" +
                              std::to_string(post.K) + ", expected " +
                              std::to_string(corpus.K));
      UtteranceRecord rec;
      rec.utt_id = utt;
      rec.speaker_id = speaker_of(utt);
      for (const auto& e : by_utt[utt]) {
        PhoneEntry p;
        p.phone_id = e.phone_id;
        p.word_index = e.word_index;
        p.gop_features = gop_feature_vector(post, {e.phone_id, e.t_start, e.t_end});
        rec.phones.push_back(std::move(p));
      }
      corpus.records.push_back(std::move(rec));
    }
    if (corpus.records.empty())
      throw DataError("no utterances found in '" + gop_alignments + "'");
    write_manifest(gop_out, corpus,
                   json{{"tool_version", kToolVersion},
                        {"source", "gop-features"},
                        {"posteriors", gop_posteriors},
                        {"alignments", gop_alignments}}.dump());
    std::cout << "wrote " << corpus.records.size() << " utterances to "
              << gop_out << "\n";
    return 0;
  }

  if (split_cmd->parsed()) {
    Corpus corpus = load_manifest(split_manifest);
    DatasetSplit split = split_by_speaker(
        corpus.records, {split_fracs[0], split_fracs[1], split_fracs[2]},
        split_seed);
    const json cfg{{"tool_version", kToolVersion},
                   {"source", split_manifest},
                   {"fractions", split_fracs},
                   {"seed", split_seed}};
    write_manifest(out_train, {corpus.K, split.train}, cfg.dump());
    write_manifest(out_dev, {corpus.K, split.dev}, cfg.dump());
    if (!out_test.empty())
      write_manifest(out_test, {corpus.K, split.test}, cfg.dump());
    std::cout << "split " << corpus.records.size() << " utterances into "
              << split.train.size() << "/" << split.dev.size() << "/"
              << split.test.size() << "\n";
    return 0;
  }

  if (train_cmd->parsed()) {
    Corpus corpus = load_manifest(train_manifest);
    ModelConfig cfg = train_model.to_config(corpus.K);
    train_plan.regime = regime_from_string(train_regime);
    train_plan.select_best_dev = train_best_dev;
    Corpus dev_corpus;
    if (!train_dev.empty()) dev_corpus = load_manifest(train_dev);
    TrainResult result =
        train(corpus.records, cfg, train_plan,
              train_dev.empty() ? nullptr : &dev_corpus.records);
    auto meta = result.meta;
    meta["tool_version"] = kToolVersion;
    meta["manifest"] = train_manifest;
    save_checkpoint(train_out, result.params, meta);
    write_trace(train_trace.empty() ? train_out + ".trace.tsv" : train_trace,
                result.loss_trace);
    std::cout << "trained " << train_regime << "/" << train_model.pooling
              << " for " << train_plan.epochs << " epochs; final loss "
              << result.loss_trace.back() << "; wrote " << train_out << "\n";
    return 0;
  }

  if (select_cmd->parsed()) {
    Checkpoint ckpt = load_checkpoint(sel_ckpt);
    Corpus corpus = load_manifest(sel_manifest);
    sel_spec.strategy = selection_strategy_from_string(sel_strategy);
    sel_spec.balanced = sel_balanced;
    const auto pool =
        build_pool(corpus.records, absolute_errors(ckpt, corpus.records));
    const auto ids = select(pool, sel_spec);
    std::ofstream out(sel_out);
    if (!out) throw FileError("cannot write selection '" + sel_out + "'");
    out << "# tool_version=" << kToolVersion << " ckpt=" << sel_ckpt
        << " manifest=" << sel_manifest << " n=" << sel_spec.n
        << " strategy=" << sel_strategy << " balanced=" << (sel_balanced ? 1 : 0)
        << " bins=" << sel_spec.bins << " seed=" << sel_spec.seed << "\n";
    for (const auto& id : ids) out << id << "\n";
    std::cout << "selected " << ids.size() << " utterances into " << sel_out
              << "\n";
    return 0;
  }

  if (ft_cmd->parsed()) {
    Checkpoint ckpt = load_checkpoint(ft_from);
    Corpus corpus = load_manifest(ft_manifest);
    std::vector<UtteranceRecord> records =
        ft_subset.empty() ? corpus.records
                          : filter_subset(std::move(corpus.records), ft_subset);
    ft_plan.regime = regime_from_string(ft_regime);
    if (!ft_pooling.empty()) ft_plan.pooling = pooling_from_string(ft_pooling);
    ft_plan.select_best_dev = ft_best_dev;
    Corpus ft_dev_corpus;
    if (!ft_dev.empty()) ft_dev_corpus = load_manifest(ft_dev);
    TrainResult result =
        finetune(ckpt, records, ft_plan,
                 ft_dev.empty() ? nullptr : &ft_dev_corpus.records);
    auto meta = result.meta;
    meta["tool_version"] = kToolVersion;
    meta["from"] = ft_from;
    if (!ft_subset.empty()) meta["subset"] = ft_subset;
    save_checkpoint(ft_out, result.params, meta);
    write_trace(ft_trace.empty() ? ft_out + ".trace.tsv" : ft_trace,
                result.loss_trace);
    std::cout << "finetuned on " << records.size() << " utterances; wrote "
              << ft_out << "\n";
    return 0;
  }

  if (eval_cmd->parsed()) {
    Corpus corpus = load_manifest(eval_manifest);
    EvalReport report;
    if (eval_gop) {
      if (!eval_ckpts.empty())
        throw ConfigError("--gop-baseline does not take checkpoints");
      report =
          evaluate_gop_baseline(corpus.records, corpus.K, eval_nboot, eval_seed);
    } else {
      if (eval_ckpts.empty())
        throw ConfigError("evaluate needs --ckpt or --gop-baseline");
      std::vector<Checkpoint> ckpts;
      for (const auto& path : eval_ckpts) ckpts.push_back(load_checkpoint(path));
      report = evaluate(ckpts, corpus.records, eval_nboot, eval_seed);
    }
    for (const auto& [k, v] : parse_meta(eval_meta)) report.meta[k] = v;
    report.meta["tool_version"] = kToolVersion;
    report.meta["manifest"] = eval_manifest;
    write_report(eval_out, report);
    auto show = [](const char* name, const LevelReport& lr) {
      if (!lr.present) return;
      std::cout << "  " << name << ": PCC " << lr.pcc_mean << " +- " << lr.pcc_ci;
      if (lr.mse_mean)
        std::cout << ", MSE " << *lr.mse_mean << " +- " << *lr.mse_ci;
      std::cout << " (n=" << lr.n_items << ")\n";
    };
    std::cout << "evaluated " << report.n_models << " model(s), nboot "
              << report.n_boot << ":\n";
    show("phone", report.phone);
    show("word", report.word);
    show("utterance", report.utt);
    return 0;
  }

  if (curves_cmd->parsed()) {
    std::vector<std::string> paths = curve_reports;
    if (!curves_dir.empty()) {
      for (const auto& entry : fs::directory_iterator(curves_dir)) {
        const std::string name = entry.path().filename().string();
        if (name.size() > 12 && name.substr(name.size() - 12) == ".report.json")
          paths.push_back(entry.path().string());
      }
      std::sort(paths.begin(), paths.end());
    }
    if (paths.empty()) throw ConfigError("curves: no reports given");
    const auto points = collect_curve_points(paths, curves_level);
    write_curves_tsv(curves_out, points);
    if (!curves_plot.empty()) write_curves_svg(curves_plot, points);
    std::cout << "aggregated " << paths.size() << " reports into " << curves_out
              << "\n";
    return 0;
  }

  if (matrix_cmd->parsed()) {
    Corpus train_corpus = load_manifest(m_train);
    Corpus dev_corpus = load_manifest(m_dev);
    if (train_corpus.K != dev_corpus.K)
      throw ConfigError("train and dev manifests disagree on K");
    mspec.config = matrix_model.to_config(train_corpus.K);
    mspec.stage2_regime = regime_from_string(m_regime);
    mspec.run_ft = m_modes.find("ft") != std::string::npos;
    mspec.run_tr = m_modes.find("tr") != std::string::npos;
    if (mspec.seeds.empty()) mspec.seeds = {1, 2, 3, 4, 5};
    if (mspec.n_values.empty()) mspec.n_values = {100};
    if (mspec.strategies.empty()) mspec.strategies = {"randbal"};
    const auto reports =
        experiment_matrix(mspec, train_corpus.records, dev_corpus.records);
    std::cout << "matrix finished; " << reports.size() << " pooled reports in "
              << mspec.out_dir << "\n";
    for (const auto& [stem, rep] : reports)
      if (rep.phone.present)
        std::cout << "  " << stem << ": phone PCC " << rep.phone.pcc_mean
                  << " +- " << rep.phone.pcc_ci << "\n";
    return 0;
  }

  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    emit_error(e.category(), e.what());
    return exit_code_for(e);
  } catch (const std::exception& e) {
    emit_error("internal", e.what());
    return 1;
  }
}
