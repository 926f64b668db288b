// Copyright (c) 2026 the reduet authors
// SPDX-License-Identifier: Apache-2.0

#include "reduet/io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace rd {

namespace {

constexpr char kSeqMagic[8] = {'R', 'D', 'S', 'E', 'Q', '1', '\0', '\0'};
constexpr char kCkptMagic[8] = {'R', 'D', 'C', 'K', 'P', 'T', '1', '\0'};

void put_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
void put_u64(std::ostream& os, std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
void put_str(std::ostream& os, const std::string& s) {
  put_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t get_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  require(is.good(), "file truncated");
  return v;
}
std::uint64_t get_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 8);
  require(is.good(), "file truncated");
  return v;
}
std::string get_str(std::istream& is) {
  const std::uint32_t n = get_u32(is);
  require(n < (1u << 24), "string length out of range");
  std::string s(n, '\0');
  is.read(s.data(), n);
  require(is.good(), "file truncated");
  return s;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  require(os.is_open(), "cannot open for writing: " + path);
  return os;
}
std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.is_open(), "cannot open for reading: " + path);
  return is;
}

}  // namespace

void write_seq(const std::string& path, const Mat<double>& m) {
  auto os = open_out(path);
  os.write(kSeqMagic, 8);
  put_u32(os, 1);
  put_u64(os, static_cast<std::uint64_t>(m.rows()));
  put_u64(os, static_cast<std::uint64_t>(m.cols()));
  os.write(reinterpret_cast<const char*>(m.data()),
           static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(m.size())));
  require(os.good(), "write failed: " + path);
}

Mat<double> read_seq(const std::string& path) {
  auto is = open_in(path);
  char magic[8];
  is.read(magic, 8);
  require(is.good() && std::memcmp(magic, kSeqMagic, 8) == 0, "not a sequence file: " + path);
  require(get_u32(is) == 1, "unsupported sequence version: " + path);
  const auto rows = static_cast<Index>(get_u64(is));
  const auto cols = static_cast<Index>(get_u64(is));
  require(rows >= 0 && cols >= 0 && rows < (1 << 28) && cols < (1 << 20),
          "sequence dimensions out of range: " + path);
  Mat<double> m(rows, cols);
  is.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(m.size())));
  require(is.good(), "file truncated: " + path);
  return m;
}

void write_checkpoint(const std::string& path, const Checkpoint& ck) {
  auto os = open_out(path);
  os.write(kCkptMagic, 8);
  put_u32(os, 1);
  put_u64(os, ck.config_text.size());
  os.write(ck.config_text.data(), static_cast<std::streamsize>(ck.config_text.size()));
  put_u32(os, static_cast<std::uint32_t>(ck.groups.size()));
  for (const auto& [gname, store] : ck.groups) {
    put_str(os, gname);
    put_u32(os, static_cast<std::uint32_t>(store.count()));
    for (int i = 0; i < store.count(); ++i) {
      const auto& e = store.entry(i);
      put_str(os, e.name);
      put_u64(os, static_cast<std::uint64_t>(e.value.rows()));
      put_u64(os, static_cast<std::uint64_t>(e.value.cols()));
      os.write(reinterpret_cast<const char*>(e.value.data()),
               static_cast<std::streamsize>(sizeof(float) * static_cast<std::size_t>(e.value.size())));
    }
  }
  put_u32(os, static_cast<std::uint32_t>(ck.scalars.size()));
  for (const auto& [name, value] : ck.scalars) {
    put_str(os, name);
    os.write(reinterpret_cast<const char*>(&value), 8);
  }
  require(os.good(), "write failed: " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
  auto is = open_in(path);
  char magic[8];
  is.read(magic, 8);
  require(is.good() && std::memcmp(magic, kCkptMagic, 8) == 0, "not a checkpoint file: " + path);
  require(get_u32(is) == 1, "unsupported checkpoint version: " + path);
  Checkpoint ck;
  const std::uint64_t clen = get_u64(is);
  require(clen < (1u << 24), "config text too large: " + path);
  ck.config_text.resize(clen);
  is.read(ck.config_text.data(), static_cast<std::streamsize>(clen));
  require(is.good(), "file truncated: " + path);
  const std::uint32_t ngroups = get_u32(is);
  for (std::uint32_t gi = 0; gi < ngroups; ++gi) {
    const std::string gname = get_str(is);
    ParamStore<float> store;
    const std::uint32_t nentries = get_u32(is);
    for (std::uint32_t ei = 0; ei < nentries; ++ei) {
      const std::string name = get_str(is);
      const auto rows = static_cast<Index>(get_u64(is));
      const auto cols = static_cast<Index>(get_u64(is));
      require(rows >= 0 && cols >= 0 && rows < (1 << 24) && cols < (1 << 24),
              "param dimensions out of range: " + path);
      Mat<float> v(rows, cols);
      is.read(reinterpret_cast<char*>(v.data()),
              static_cast<std::streamsize>(sizeof(float) * static_cast<std::size_t>(v.size())));
      require(is.good(), "file truncated: " + path);
      store.add(name, std::move(v));
    }
    ck.groups.emplace(gname, std::move(store));
  }
  const std::uint32_t nscalars = get_u32(is);
  for (std::uint32_t si = 0; si < nscalars; ++si) {
    const std::string name = get_str(is);
    double value = 0.0;
    is.read(reinterpret_cast<char*>(&value), 8);
    require(is.good(), "file truncated: " + path);
    ck.scalars[name] = value;
  }
  return ck;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
  std::ofstream os(path, std::ios::trunc);
  require(os.is_open(), "cannot open for writing: " + path);
  for (std::size_t i = 0; i < header.size(); ++i)
    os << (i ? "," : "") << header[i];
  os << "\n";
  os << std::setprecision(10);
  for (const auto& row : rows) {
    require(row.size() == header.size(), "csv row width mismatch");
    for (std::size_t i = 0; i < row.size(); ++i)
      os << (i ? "," : "") << row[i];
    os << "\n";
  }
  require(os.good(), "write failed: " + path);
}

void write_svg_traces(const std::string& path,
                      const std::vector<std::pair<std::string, std::vector<double>>>& traces,
                      int width, int height, const std::string& title) {
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b", "#17becf"};
  double lo = 0.0, hi = 1.0;
  std::size_t longest = 2;
  bool first = true;
  for (const auto& [name, ys] : traces)
    for (double y : ys) {
      if (first) {
        lo = hi = y;
        first = false;
      }
      lo = std::min(lo, y);
      hi = std::max(hi, y);
    }
  if (hi - lo < 1e-12) hi = lo + 1.0;
  for (const auto& [name, ys] : traces) longest = std::max(longest, ys.size());

  const double pad = 10.0;
  auto sx = [&](std::size_t i, std::size_t n) {
    return pad + (width - 2 * pad) * (n > 1 ? static_cast<double>(i) / (n - 1) : 0.0);
  };
  auto sy = [&](double y) { return height - pad - (height - 2 * pad) * (y - lo) / (hi - lo); };

  std::ofstream os(path, std::ios::trunc);
  require(os.is_open(), "cannot open for writing: " + path);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height
     << "\" fill=\"white\" stroke=\"#999\"/>\n";
  if (!title.empty())
    os << "<text x=\"" << pad + 2 << "\" y=\"" << pad + 8 << "\" font-size=\"11\">" << title
       << "</text>\n";
  int ci = 0;
  for (const auto& [name, ys] : traces) {
    const char* color = kColors[ci % 7];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1\" points=\"";
    for (std::size_t i = 0; i < ys.size(); ++i)
      os << sx(i, ys.size()) << "," << sy(ys[i]) << " ";
    os << "\"/>\n";
    os << "<text x=\"" << width - 150 << "\" y=\"" << pad + 12 + 12 * ci << "\" font-size=\"10\" fill=\""
       << color << "\">" << name << "</text>\n";
    ++ci;
  }
  os << "</svg>\n";
  require(os.good(), "write failed: " + path);
}

}  // namespace rd
