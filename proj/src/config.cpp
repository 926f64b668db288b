// Copyright (c) 2026 the reduet authors
// SPDX-License-Identifier: Apache-2.0

#include "reduet/config.hpp"

#include <fstream>
#include <sstream>

namespace rd {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

Config Config::parse_string(const std::string& text) {
  Config c;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::size_t eq = t.find('=');
    require(eq != std::string::npos && eq > 0,
            "config line " + std::to_string(lineno) + " is not key=value: " + t);
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    require(!key.empty(), "config line " + std::to_string(lineno) + " has an empty key");
    c.set(key, value);
  }
  return c;
}

Config Config::parse_file(const std::string& path) {
  std::ifstream is(path);
  require(is.is_open(), "cannot open config: " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_string(buf.str());
}

bool Config::has(const std::string& key) const {
  touched_.insert(key);
  return index_.find(key) != index_.end();
}

void Config::set(const std::string& key, const std::string& value) {
  auto it = index_.find(key);
  if (it != index_.end()) {
    items_[it->second].second = value;
  } else {
    index_[key] = items_.size();
    items_.emplace_back(key, value);
  }
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  touched_.insert(key);
  auto it = index_.find(key);
  return it == index_.end() ? fallback : items_[it->second].second;
}

std::string Config::require_string(const std::string& key) const {
  touched_.insert(key);
  auto it = index_.find(key);
  require(it != index_.end(), "missing required config key: " + key);
  return items_[it->second].second;
}

std::int64_t Config::get_int(const std::string& key, std::int64_t fallback) const {
  touched_.insert(key);
  auto it = index_.find(key);
  if (it == index_.end()) return fallback;
  const std::string& v = items_[it->second].second;
  std::size_t pos = 0;
  std::int64_t out = 0;
  try {
    out = std::stoll(v, &pos);
  } catch (const std::exception&) {
    throw InvalidArgument("config key " + key + " is not an integer: " + v);
  }
  require(pos == v.size(), "config key " + key + " is not an integer: " + v);
  return out;
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
  touched_.insert(key);
  auto it = index_.find(key);
  if (it == index_.end()) return fallback;
  const std::string& v = items_[it->second].second;
  std::size_t pos = 0;
  std::uint64_t out = 0;
  try {
    out = std::stoull(v, &pos);
  } catch (const std::exception&) {
    throw InvalidArgument("config key " + key + " is not an unsigned integer: " + v);
  }
  require(pos == v.size(), "config key " + key + " is not an unsigned integer: " + v);
  return out;
}

double Config::get_double(const std::string& key, double fallback) const {
  touched_.insert(key);
  auto it = index_.find(key);
  if (it == index_.end()) return fallback;
  const std::string& v = items_[it->second].second;
  std::size_t pos = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw InvalidArgument("config key " + key + " is not a number: " + v);
  }
  require(pos == v.size(), "config key " + key + " is not a number: " + v);
  return out;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  touched_.insert(key);
  auto it = index_.find(key);
  if (it == index_.end()) return fallback;
  const std::string& v = items_[it->second].second;
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw InvalidArgument("config key " + key + " is not a boolean: " + v);
}

std::vector<double> Config::get_double_list(const std::string& key,
                                            const std::vector<double>& fallback) const {
  touched_.insert(key);
  auto it = index_.find(key);
  if (it == index_.end()) return fallback;
  return parse_double_list(items_[it->second].second);
}

std::vector<std::string> Config::untouched_keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : items_)
    if (touched_.find(k) == touched_.end()) out.push_back(k);
  return out;
}

std::string Config::serialize() const {
  std::ostringstream os;
  for (const auto& [k, v] : items_) os << k << "=" << v << "\n";
  return os.str();
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  std::string item;
  std::istringstream is(text);
  while (std::getline(is, item, ',')) {
    const std::string t = item;
    std::size_t pos = 0;
    double v = 0.0;
    try {
      v = std::stod(t, &pos);
    } catch (const std::exception&) {
      throw InvalidArgument("not a number list: " + text);
    }
    require(pos == t.size() || t.find_first_not_of(" \t", pos) == std::string::npos,
            "not a number list: " + text);
    out.push_back(v);
  }
  require(!out.empty(), "empty number list: " + text);
  return out;
}

}  // namespace rd
