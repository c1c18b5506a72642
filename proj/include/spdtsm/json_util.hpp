// Copyright 2026 The spdtsm Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SPDTSM_JSON_UTIL_HPP
#define SPDTSM_JSON_UTIL_HPP

#include <cstdint>
#include <fstream>
#include <set>
#include <string>

#include "json.hpp"
#include "spdtsm/common.hpp"

namespace spdtsm {

using Json = nlohmann::json;

/// Strict reader over one JSON object: every key must be consumed, unknown
/// keys are configuration errors (catches typos and stale fields).
class StrictObject {
 public:
  StrictObject(const Json& j, std::string section)
      : j_(j), section_(std::move(section)) {
    if (!j.is_object())
      throw ConfigError("config section '" + section_ + "' must be an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <typename T>
  T require(const std::string& key) {
    if (!j_.contains(key))
      throw ConfigError("config section '" + section_ + "' is missing key '" +
                        key + "'");
    return take<T>(key);
  }

  template <typename T>
  T get(const std::string& key, T fallback) {
    if (!j_.contains(key)) return fallback;
    return take<T>(key);
  }

  Json raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  /// Call after all fields were read.
  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.count(key))
        throw ConfigError("unknown key '" + key + "' in config section '" +
                          section_ + "'");
    }
  }

 private:
  template <typename T>
  T take(const std::string& key) {
    seen_.insert(key);
    try {
      return j_.at(key).get<T>();
    } catch (const Json::exception& e) {
      throw ConfigError("config key '" + section_ + "." + key +
                        "' has the wrong type: " + e.what());
    }
  }

  const Json& j_;
  std::string section_;
  std::set<std::string> seen_;
};

/// FNV-1a over the canonical (sorted-key) JSON dump; good enough to tie
/// artifacts to the exact configuration that produced them.
inline std::uint64_t config_hash(const Json& j) {
  const std::string s = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

inline Json load_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open: " + path);
  try {
    return Json::parse(is);
  } catch (const Json::exception& e) {
    throw FormatError("malformed JSON in " + path + ": " + e.what());
  }
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open for writing: " + path);
  os << text;
  if (!os) throw FormatError("write failed: " + path);
}

}  // namespace spdtsm

#endif  // SPDTSM_JSON_UTIL_HPP
