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

#include "sfgsr/key_value.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <sstream>

#include "sfgsr/errors.hpp"

namespace sfgsr {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

std::int64_t to_int(const std::string& key, const std::string& s) {
  std::int64_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw ConfigError("config key '" + key + "': expected an integer, got '" + s + "'");
  }
  return v;
}

double to_double(const std::string& key, const std::string& s) {
  double v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + s + "'");
  }
  return v;
}

}  // namespace

KeyValues KeyValues::parse(const std::string& text) {
  KeyValues kv;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw FormatError("line " + std::to_string(lineno) + ": expected 'key = value', got '" + t + "'");
    }
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) throw FormatError("line " + std::to_string(lineno) + ": empty key");
    if (kv.has(key)) throw FormatError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    kv.entries_.emplace_back(key, trim(t.substr(eq + 1)));
  }
  return kv;
}

void KeyValues::set(const std::string& key, std::string value) {
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  entries_.emplace_back(key, std::move(value));
}

bool KeyValues::has(const std::string& key) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == key; });
}

const std::string& KeyValues::get(const std::string& key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return v;
  }
  throw ConfigError("config key '" + key + "' is missing");
}

std::int64_t KeyValues::get_int(const std::string& key) const { return to_int(key, get(key)); }

double KeyValues::get_double(const std::string& key) const { return to_double(key, get(key)); }

bool KeyValues::get_bool(const std::string& key) const {
  const auto& v = get(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
}

std::vector<std::int64_t> KeyValues::get_int_list(const std::string& key) const {
  std::vector<std::int64_t> out;
  for (const auto& s : split_list(get(key))) out.push_back(to_int(key, s));
  return out;
}

std::vector<double> KeyValues::get_double_list(const std::string& key) const {
  std::vector<double> out;
  for (const auto& s : split_list(get(key))) out.push_back(to_double(key, s));
  return out;
}

void KeyValues::reject_unknown(const std::set<std::string>& known, const std::string& what) const {
  std::string unknown;
  for (const auto& [k, v] : entries_) {
    if (!known.count(k)) unknown += (unknown.empty() ? "" : ", ") + k;
  }
  if (!unknown.empty()) throw ConfigError(what + ": unknown keys: " + unknown);
}

std::string KeyValues::to_text() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
  return out;
}

std::string format_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

std::string join_ints(const std::vector<std::int64_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::string join_doubles(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + format_double(v[i]);
  return out;
}

}  // namespace sfgsr
