#include <gtest/gtest.h>

#include <clocale>
#include <filesystem>

#include "tbrw/config.hpp"
#include "tbrw/io.hpp"

using namespace tbrw;

TEST(Config, EchoRoundTrip) {
  ExperimentConfig c = ExperimentConfig::defaults_for("transience");
  c.seed = 12345;
  c.threads = 8;
  c.delta = 0.1 + 0.2;  // not exactly representable as a short decimal
  c.windows = "10,20";
  ExperimentConfig back;
  apply_config(back, parse_config_text(echo_config(c)));
  EXPECT_EQ(back, c);
  EXPECT_EQ(echo_config(back), echo_config(c));
}

TEST(Config, SectionsApplyAfterGlobals) {
  const std::string text =
      "# comment\n"
      "experiment = height\n"
      "replicas = 3\n"
      "seed = 7\n"
      "[height]\n"
      "replicas = 5\n"
      "[degree]\n"
      "replicas = 99\n";
  const auto entries = parse_config_text(text);
  EXPECT_EQ(config_experiment(entries), "height");
  ExperimentConfig c = ExperimentConfig::defaults_for("height");
  apply_config(c, entries);
  EXPECT_EQ(c.replicas, 5u);
  EXPECT_EQ(c.seed, 7u);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(parse_config_text("replica = 3\n"), ConfigError);
  EXPECT_THROW(parse_config_text("[nosuch]\n"), ConfigError);
  EXPECT_THROW(parse_config_text("[height\n"), ConfigError);
  EXPECT_THROW(parse_config_text("just words\n"), ConfigError);
  ExperimentConfig c;
  EXPECT_THROW(set_config_value(c, "replicas", "-1"), ConfigError);
  EXPECT_THROW(set_config_value(c, "replicas", "2.5"), ConfigError);
  EXPECT_THROW(set_config_value(c, "delta", "abc"), ConfigError);
  EXPECT_THROW(set_config_value(c, "bogus", "1"), ConfigError);
  set_config_value(c, "steps", "2e8");
  EXPECT_EQ(c.steps, 200'000'000u);
  EXPECT_THROW(ExperimentConfig::defaults_for("nosuch"), ConfigError);
}

TEST(Config, HashIgnoresThreadsAndOutput) {
  ExperimentConfig a = ExperimentConfig::defaults_for("degree");
  ExperimentConfig b = a;
  b.threads = 8;
  b.out = "/somewhere/else";
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.seed = 1;
  EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(Config, CountLists) {
  EXPECT_EQ(parse_count_list("w", "1, 2,1e3"), (std::vector<std::uint64_t>{1, 2, 1000}));
  EXPECT_TRUE(parse_count_list("w", "").empty());
  EXPECT_THROW(parse_count_list("w", "1,x"), ConfigError);
}

TEST(Io, Fnv1aReferenceValues) {
  EXPECT_EQ(fnv1a(""), 0xCBF29CE484222325ULL);
  EXPECT_EQ(fnv1a("a"), 0xAF63DC4C8601EC8CULL);
  EXPECT_EQ(hex64(0xAF63DC4C8601EC8CULL), "af63dc4c8601ec8c");
}

TEST(Io, DoubleFormattingIsLocaleFreeAndExact) {
  const char* old = std::setlocale(LC_NUMERIC, nullptr);
  const std::string saved = old ? old : "C";
  std::setlocale(LC_NUMERIC, "de_DE.UTF-8");  // may be unavailable; the check holds either way
  EXPECT_EQ(format_double(0.5), "0.5");
  std::setlocale(LC_NUMERIC, saved.c_str());
  for (double x : {1.0 / 3.0, 2.0 / 3.0, 1e-300, 123456789.123456789, -0.0})
    EXPECT_EQ(parse_double_exact(format_double(x)), x);
  EXPECT_THROW(parse_double_exact("1,5"), ConfigError);
}

TEST(Io, CsvTable) {
  CsvTable t({"a", "b"});
  t.row() << std::uint64_t{1} << 0.25;
  t.row() << "x" << true;
  EXPECT_EQ(t.str(), "a,b\n1,0.25\nx,1\n");
  t.row() << 1;
  EXPECT_THROW(t.str(), Error);
}

TEST(Io, OutputSetWritesManifest) {
  const auto dir = std::filesystem::temp_directory_path() / "tbrw_io_test";
  std::filesystem::remove_all(dir);
  OutputSet out(dir);
  out.write("a.txt", "hello\n");
  out.write_json("s.json", Json{{"k", 1}});
  out.finish("test", 0xABCULL);
  EXPECT_EQ(read_text_file(dir / "a.txt"), "hello\n");
  const auto manifest = Json::parse(read_text_file(dir / "manifest.json"));
  EXPECT_EQ(manifest["kind"], "test");
  EXPECT_EQ(manifest["config_hash"], "0000000000000abc");
  EXPECT_EQ(manifest["artifacts"].size(), 2u);
  EXPECT_THROW(read_text_file(dir / "missing"), ConfigError);
}
