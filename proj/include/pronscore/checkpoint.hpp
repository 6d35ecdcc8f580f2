// include/pronscore/checkpoint.hpp
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

#ifndef PRONSCORE_CHECKPOINT_HPP_
#define PRONSCORE_CHECKPOINT_HPP_

#include <map>
#include <string>

#include "pronscore/model.hpp"

namespace pronscore {

// Versioned named-tensor container: one {name, shape, values} entry per
// parameter, a config block (which carries the init seed), and free-form
// string metadata (training regime, stage, selection cell, ...). Values are
// serialized with round-trip precision, so save/load restores exact bits.
struct Checkpoint {
  ModelParams params;
  std::map<std::string, std::string> meta;

  const ModelConfig& config() const { return params.config(); }
};

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const std::map<std::string, std::string>& meta);
Checkpoint load_checkpoint(const std::string& path);

// Refuses checkpoints whose architecture cannot serve the requesting config
// (K, d_model, pooling and the remaining structural fields).
void ensure_compatible(const ModelConfig& ckpt, const ModelConfig& requested);

}  // namespace pronscore

#endif  // PRONSCORE_CHECKPOINT_HPP_
