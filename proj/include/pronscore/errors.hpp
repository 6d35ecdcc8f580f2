// include/pronscore/errors.hpp
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

#ifndef PRONSCORE_ERRORS_HPP_
#define PRONSCORE_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace pronscore {

// Every error the library throws derives from Error and carries a stable
// category slug, used by the CLI to pick exit codes and to emit a
// machine-readable error object on stderr.
class Error : public std::runtime_error {
 public:
  Error(std::string category, const std::string& msg)
      : std::runtime_error(msg), category_(std::move(category)) {}
  const std::string& category() const { return category_; }

 private:
  std::string category_;
};

// Out-of-range numeric input (labels, fractions, probabilities).
struct RangeError : Error {
  explicit RangeError(const std::string& msg) : Error("range", msg) {}
};

// Malformed input file content; carries a line number where known.
struct ParseError : Error {
  explicit ParseError(const std::string& msg) : Error("parse", msg) {}
};

// A structurally valid record that violates a documented invariant.
struct ValidationError : Error {
  explicit ValidationError(const std::string& msg) : Error("validation", msg) {}
};

// Missing or unreadable file / directory.
struct FileError : Error {
  explicit FileError(const std::string& msg) : Error("file", msg) {}
};

// Tensor shape mismatch; message lists both shapes.
struct ShapeError : Error {
  explicit ShapeError(const std::string& msg) : Error("shape", msg) {}
};

// log(0), empty reductions, undefined correlations and the like.
struct DomainError : Error {
  explicit DomainError(const std::string& msg) : Error("domain", msg) {}
};

// Batch data that the model cannot process (empty word, over-long utterance).
struct DataError : Error {
  explicit DataError(const std::string& msg) : Error("data", msg) {}
};

// A record lacks a label required by the active supervision regime.
struct MissingLabelError : Error {
  explicit MissingLabelError(const std::string& msg) : Error("missing-label", msg) {}
};

// Too few speakers / too small a pool for the requested operation.
struct InsufficientDataError : Error {
  explicit InsufficientDataError(const std::string& msg)
      : Error("insufficient-data", msg) {}
};

// Incompatible configs (checkpoint vs. plan, resume vs. prior artifacts).
struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error("config", msg) {}
};

// Training diverged or the autograd graph was misused.
struct TrainingError : Error {
  explicit TrainingError(const std::string& msg) : Error("training", msg) {}
};

}  // namespace pronscore

#endif  // PRONSCORE_ERRORS_HPP_
