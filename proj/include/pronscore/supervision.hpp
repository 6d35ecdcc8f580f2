// include/pronscore/supervision.hpp
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

#ifndef PRONSCORE_SUPERVISION_HPP_
#define PRONSCORE_SUPERVISION_HPP_

#include <string>

#include "pronscore/errors.hpp"

namespace pronscore {

// Which label levels contribute loss terms during training.
enum class SupervisionRegime { kUWP, kP, kW, kUW, kU };

struct RegimeFlags {
  bool use_utt = false;
  bool use_word = false;
  bool use_phone = false;
};

inline RegimeFlags regime_flags(SupervisionRegime r) {
  switch (r) {
    case SupervisionRegime::kUWP: return {true, true, true};
    case SupervisionRegime::kP:   return {false, false, true};
    case SupervisionRegime::kW:   return {false, true, false};
    case SupervisionRegime::kUW:  return {true, true, false};
    case SupervisionRegime::kU:   return {true, false, false};
  }
  throw ConfigError("unknown supervision regime");
}

inline std::string to_string(SupervisionRegime r) {
  switch (r) {
    case SupervisionRegime::kUWP: return "UWP";
    case SupervisionRegime::kP:   return "P";
    case SupervisionRegime::kW:   return "W";
    case SupervisionRegime::kUW:  return "UW";
    case SupervisionRegime::kU:   return "U";
  }
  throw ConfigError("unknown supervision regime");
}

inline SupervisionRegime regime_from_string(const std::string& s) {
  if (s == "UWP") return SupervisionRegime::kUWP;
  if (s == "P") return SupervisionRegime::kP;
  if (s == "W") return SupervisionRegime::kW;
  if (s == "UW") return SupervisionRegime::kUW;
  if (s == "U") return SupervisionRegime::kU;
  throw ConfigError("unknown supervision regime '" + s + "'");
}

}  // namespace pronscore

#endif  // PRONSCORE_SUPERVISION_HPP_
