// Copyright (c) 2026 the reduet authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "reduet/core.hpp"
#include "reduet/graph.hpp"

namespace rd {

// RDSEQ1: one dense double matrix per file.
// bytes 0-7   "RDSEQ1\0\0"
// u32         format version (1)
// u64, u64    rows, cols
// f64 * r*c   payload, column-major, little-endian
void write_seq(const std::string& path, const Mat<double>& m);
Mat<double> read_seq(const std::string& path);

// RDCKPT1: named float tensor groups plus the full text of the config
// that produced them and a few named scalars.
// bytes 0-7   "RDCKPT1\0"
// u32         format version (1)
// u64 + bytes config text
// u32         group count; per group: name, entry count,
//             then per entry: name, rows, cols, f32 payload column-major
// u32         scalar count; per scalar: name, f64 value
struct Checkpoint {
  std::string config_text;
  std::map<std::string, ParamStore<float>> groups;
  std::map<std::string, double> scalars;
};

void write_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint read_checkpoint(const std::string& path);

// Copy values by name from src; every dst entry must be present in src
// with matching shape.
template <typename S>
void load_param_values(ParamStore<S>& dst, const ParamStore<S>& src) {
  for (int i = 0; i < dst.count(); ++i) {
    auto& e = dst.entry(i);
    const auto& s = src.entry(src.index_of(e.name));
    require(s.value.rows() == e.value.rows() && s.value.cols() == e.value.cols(),
            "param shape mismatch: " + e.name);
    e.value = s.value;
  }
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

// quick-look line chart, one polyline per named trace
void write_svg_traces(const std::string& path,
                      const std::vector<std::pair<std::string, std::vector<double>>>& traces,
                      int width = 900, int height = 300, const std::string& title = "");

}  // namespace rd
