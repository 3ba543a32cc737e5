/* Copyright (c) 2026 The sfgsr Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */

#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace sfgsr {

// Ordered `key = value` document. Lines starting with '#' and blank lines are
// ignored; keys are unique; list values are comma separated.
class KeyValues {
 public:
  // Throws FormatError naming the offending line.
  static KeyValues parse(const std::string& text);

  void set(const std::string& key, std::string value);
  bool has(const std::string& key) const;
  // Getters throw ConfigError naming the key when it is missing or malformed.
  const std::string& get(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<std::int64_t> get_int_list(const std::string& key) const;
  std::vector<double> get_double_list(const std::string& key) const;

  // Throws ConfigError listing every key not in `known`.
  void reject_unknown(const std::set<std::string>& known, const std::string& what) const;

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
  std::string to_text() const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

// Round-trip exact decimal form of a double.
std::string format_double(double v);
std::string join_ints(const std::vector<std::int64_t>& v);
std::string join_doubles(const std::vector<double>& v);

}  // namespace sfgsr
