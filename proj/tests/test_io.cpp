// Copyright (c) 2026 the reduet authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "reduet/config.hpp"
#include "reduet/io.hpp"

using namespace rd;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "reduet_io_test";
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_SUITE_BEGIN("io");

TEST_CASE("sequence files round-trip bit exactly") {
  Rng rng(55);
  Mat<double> m(37, 11);
  for (Index i = 0; i < m.size(); ++i) m(i) = rng.normal() * 1e3;
  const auto p = temp_file("seq.rdseq");
  write_seq(p.string(), m);
  Mat<double> back = read_seq(p.string());
  REQUIRE(back.rows() == m.rows());
  REQUIRE(back.cols() == m.cols());
  CHECK((back - m).cwiseAbs().maxCoeff() == 0.0);

  // identical content writes identical bytes
  const auto p2 = temp_file("seq2.rdseq");
  write_seq(p2.string(), m);
  CHECK(slurp(p) == slurp(p2));
}

TEST_CASE("sequence reader rejects junk") {
  const auto p = temp_file("junk.rdseq");
  std::ofstream(p) << "not a sequence";
  CHECK_THROWS_AS(read_seq(p.string()), InvalidArgument);
  CHECK_THROWS_AS(read_seq((temp_file("missing_dir") / "nope.rdseq").string()), InvalidArgument);
}

TEST_CASE("checkpoints round-trip groups, scalars and config text") {
  Checkpoint ck;
  ck.config_text = "alpha=1\nbeta=two\n";
  Rng rng(66);
  ParamStore<float> a;
  a.add_uniform("w", 4, 3, 0.5, rng);
  a.add_constant("b", 1, 3, 0.25);
  ParamStore<float> b;
  b.add_uniform("head.w", 2, 2, 0.5, rng);
  ck.groups.emplace("enc", std::move(a));
  ck.groups.emplace("dec", std::move(b));
  ck.scalars["epochs"] = 12.0;
  ck.scalars["final_loss"] = 0.125;

  const auto p = temp_file("model.rdckpt");
  write_checkpoint(p.string(), ck);
  Checkpoint back = read_checkpoint(p.string());
  CHECK(back.config_text == ck.config_text);
  REQUIRE(back.groups.count("enc") == 1);
  REQUIRE(back.groups.count("dec") == 1);
  const auto& enc = back.groups.at("enc");
  REQUIRE(enc.count() == 2);
  CHECK(enc.entry(0).name == "w");
  CHECK(enc.entry(1).name == "b");
  CHECK((enc.entry(0).value - ck.groups.at("enc").entry(0).value).cwiseAbs().maxCoeff() == 0.0f);
  CHECK(back.scalars.at("epochs") == 12.0);
  CHECK(back.scalars.at("final_loss") == 0.125);

  // byte determinism
  const auto p2 = temp_file("model2.rdckpt");
  write_checkpoint(p2.string(), back);
  CHECK(slurp(p) == slurp(p2));
}

TEST_CASE("param values load by name with shape checks") {
  Rng rng(5);
  ParamStore<float> src;
  src.add_uniform("x", 2, 2, 1.0, rng);
  src.add_uniform("y", 3, 1, 1.0, rng);
  ParamStore<float> dst;
  dst.add_constant("y", 3, 1, 0.0);
  dst.add_constant("x", 2, 2, 0.0);
  load_param_values(dst, src);
  CHECK((dst.value("x") - src.value("x")).cwiseAbs().maxCoeff() == 0.0f);
  CHECK((dst.value("y") - src.value("y")).cwiseAbs().maxCoeff() == 0.0f);

  ParamStore<float> bad;
  bad.add_constant("x", 5, 5, 0.0);
  CHECK_THROWS_AS(load_param_values(bad, src), InvalidArgument);
}

TEST_CASE("config parses, types check and unknown keys are reported") {
  Config c = Config::parse_string(
      "# comment\n"
      "\n"
      "alpha = 3\n"
      "beta=0.5\n"
      "gamma = hello\n"
      "flag = true\n"
      "scales = 1.2, 1.2\n"
      "never_read = 9\n");
  CHECK(c.get_int("alpha", 0) == 3);
  CHECK(c.get_double("beta", 0.0) == 0.5);
  CHECK(c.get_string("gamma", "") == "hello");
  CHECK(c.get_bool("flag", false));
  CHECK(c.get_double_list("scales", {}) == std::vector<double>{1.2, 1.2});
  CHECK(c.get_int("absent", 7) == 7);
  auto untouched = c.untouched_keys();
  REQUIRE(untouched.size() == 1);
  CHECK(untouched[0] == "never_read");

  CHECK_THROWS_AS(Config::parse_string("no equals sign"), InvalidArgument);
  CHECK_THROWS_AS(c.get_int("gamma", 0), InvalidArgument);
  CHECK_THROWS_AS(c.get_bool("beta", false), InvalidArgument);
  CHECK_THROWS_AS(c.require_string("absent2"), InvalidArgument);
}

TEST_CASE("config serializes in insertion order and reparses") {
  Config c;
  c.set("b", "2");
  c.set("a", "1");
  c.set("b", "3");  // overwrite keeps position
  CHECK(c.serialize() == "b=3\na=1\n");
  Config d = Config::parse_string(c.serialize());
  CHECK(d.get_int("a", 0) == 1);
  CHECK(d.get_int("b", 0) == 3);
}

TEST_CASE("csv and svg writers emit well-formed files") {
  const auto pc = temp_file("m.csv");
  write_csv(pc.string(), {"name", "value"}, {{1.0, 2.5}, {3.0, 4.25}});
  const std::string csv = slurp(pc);
  CHECK(csv == "name,value\n1,2.5\n3,4.25\n");

  const auto ps = temp_file("t.svg");
  write_svg_traces(ps.string(), {{"a", {0.0, 1.0, 0.5}}, {"b", {1.0, 0.0}}}, 300, 120, "demo");
  const std::string svg = slurp(ps);
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("polyline") != std::string::npos);
  CHECK(svg.find("</svg>") != std::string::npos);
}

TEST_SUITE_END();
