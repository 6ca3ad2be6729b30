// avsep/core/common.hpp

// Copyright 2026  avsep contributors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace avsep {

/// Thrown on malformed configuration or bad user input (CLI exit code 1).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {
inline void format_into(std::ostringstream&) {}
template <typename T, typename... Rest>
void format_into(std::ostringstream& oss, const T& head, const Rest&... rest) {
  oss << head;
  format_into(oss, rest...);
}
}  // namespace detail

template <typename... Args>
std::string str_cat(const Args&... args) {
  std::ostringstream oss;
  detail::format_into(oss, args...);
  return oss.str();
}

/// Precondition guard: violations are caller errors.
template <typename... Args>
void require(bool cond, const Args&... msg) {
  if (!cond) throw std::invalid_argument(str_cat(msg...));
}

/// Runtime guard for I/O and state errors.
template <typename... Args>
void require_state(bool cond, const Args&... msg) {
  if (!cond) throw std::runtime_error(str_cat(msg...));
}

/// Writes via a sibling temp file and renames over the target, so readers
/// never observe a half-written file.
inline void write_file_atomic(const std::filesystem::path& path,
                              const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require_state(out.good(), "write_file_atomic: cannot open ", tmp.string());
    out.write(content.data(),
              static_cast<std::streamsize>(content.size()));
    out.flush();
    require_state(out.good(), "write_file_atomic: write failed for ",
                  tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    require_state(false, "write_file_atomic: rename failed for ",
                  path.string(), ": ", ec.message());
  }
}

}  // namespace avsep
