// Copyright (c) 2026 the reduet authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "reduet/core.hpp"

namespace rd {

// Flat key=value text. Lines starting with '#' and blank lines are
// skipped; inline trailing comments are not supported. Lookups record
// which keys were touched so callers can reject unknown keys.
class Config {
 public:
  static Config parse_string(const std::string& text);
  static Config parse_file(const std::string& path);

  bool has(const std::string& key) const;
  void set(const std::string& key, const std::string& value);

  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::string require_string(const std::string& key) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_double_list(const std::string& key,
                                      const std::vector<double>& fallback) const;

  // keys never looked up (insertion order)
  std::vector<std::string> untouched_keys() const;
  // serialize in insertion order
  std::string serialize() const;

 private:
  std::vector<std::pair<std::string, std::string>> items_;
  std::map<std::string, std::size_t> index_;
  mutable std::set<std::string> touched_;
};

std::vector<double> parse_double_list(const std::string& text);

}  // namespace rd
