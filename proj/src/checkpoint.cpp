// src/checkpoint.cpp
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

#include "pronscore/checkpoint.hpp"

#include <fstream>

#include <json.hpp>

namespace pronscore {

using nlohmann::json;

namespace {

json config_to_json(const ModelConfig& c) {
  return json{{"K", c.K},
              {"d_model", c.d_model},
              {"depth", c.depth},
              {"n_heads", c.n_heads},
              {"ffn_mult", c.ffn_mult},
              {"max_seq_len", c.max_seq_len},
              {"pooling", to_string(c.pooling)},
              {"dropout", c.dropout},
              {"seed", c.seed}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.K = j.at("K").get<int>();
  c.d_model = j.at("d_model").get<int>();
  c.depth = j.at("depth").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.ffn_mult = j.at("ffn_mult").get<int>();
  c.max_seq_len = j.at("max_seq_len").get<int>();
  c.pooling = pooling_from_string(j.at("pooling").get<std::string>());
  c.dropout = j.at("dropout").get<double>();
  c.seed = j.at("seed").get<uint64_t>();
  return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const std::map<std::string, std::string>& meta) {
  json j;
  j["format"] = "pronscore-checkpoint";
  j["version"] = 1;
  j["config"] = config_to_json(params.config());
  j["meta"] = meta;
  json tensors = json::array();
  for (const auto& [name, t] : params.named()) {
    json e;
    e["name"] = name;
    e["shape"] = t.shape();
    e["values"] = t.values();
    tensors.push_back(std::move(e));
  }
  j["params"] = std::move(tensors);
  std::ofstream out(path);
  if (!out) throw FileError("cannot write checkpoint '" + path + "'");
  out << j.dump() << "\n";
  if (!out) throw FileError("short write to checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FileError("cannot open checkpoint '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError("checkpoint '" + path + "': " + e.what());
  }
  try {
    if (j.at("format") != "pronscore-checkpoint" || j.at("version") != 1)
      throw ParseError("checkpoint '" + path + "': unsupported format/version");
    ModelConfig cfg = config_from_json(j.at("config"));
    std::vector<std::pair<std::string, nn::Tensor>> named;
    for (const auto& e : j.at("params")) {
      nn::Shape shape = e.at("shape").get<nn::Shape>();
      std::vector<double> values = e.at("values").get<std::vector<double>>();
      named.emplace_back(e.at("name").get<std::string>(),
                         nn::Tensor::from(std::move(shape), std::move(values),
                                          /*requires_grad=*/true));
    }
    Checkpoint ckpt{ModelParams::from_named(cfg, std::move(named)), {}};
    if (j.contains("meta"))
      ckpt.meta = j["meta"].get<std::map<std::string, std::string>>();
    return ckpt;
  } catch (const json::exception& e) {
    throw ParseError("checkpoint '" + path + "': " + e.what());
  }
}

void ensure_compatible(const ModelConfig& ckpt, const ModelConfig& requested) {
  auto fail = [](const std::string& field, const std::string& a,
                 const std::string& b) {
    throw ConfigError("checkpoint incompatible: " + field + " is " + a +
                      ", requested " + b);
  };
  if (ckpt.K != requested.K)
    fail("K", std::to_string(ckpt.K), std::to_string(requested.K));
  if (ckpt.d_model != requested.d_model)
    fail("d_model", std::to_string(ckpt.d_model), std::to_string(requested.d_model));
  if (ckpt.pooling != requested.pooling)
    fail("pooling", to_string(ckpt.pooling), to_string(requested.pooling));
  if (ckpt.depth != requested.depth)
    fail("depth", std::to_string(ckpt.depth), std::to_string(requested.depth));
  if (ckpt.n_heads != requested.n_heads)
    fail("n_heads", std::to_string(ckpt.n_heads), std::to_string(requested.n_heads));
  if (ckpt.ffn_mult != requested.ffn_mult)
    fail("ffn_mult", std::to_string(ckpt.ffn_mult), std::to_string(requested.ffn_mult));
  if (ckpt.max_seq_len != requested.max_seq_len)
    fail("max_seq_len", std::to_string(ckpt.max_seq_len),
         std::to_string(requested.max_seq_len));
}

}  // namespace pronscore
