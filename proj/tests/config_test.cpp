#include <gtest/gtest.h>

#include <algorithm>

#include "creole/config.hpp"
#include "creole/error.hpp"
#include "creole/experiment.hpp"
#include "test_util.hpp"

using namespace creole;
using testutil::fixture_dir;

namespace {

bool mentions(const std::vector<std::string>& errors, const std::string& needle) {
  return std::any_of(errors.begin(), errors.end(), [&](const std::string& e) { return e.find(needle) != std::string::npos; });
}

std::string base_config() {
  const std::string f = fixture_dir().string();
  return "seed = 3\n[data]\ncreole = " + f + "/creole.txt\ncreole_language = creole:tok\naux.en = " + f +
         "/en.txt\n";
}

}  // namespace

TEST(ConfigText, ParsesSectionsAndComments) {
  const auto e = parse_config_text("# top\nseed = 4\n\n[data]\n; note\ncreole =  x.txt  \n", "t.cfg");
  ASSERT_EQ(e.size(), 2u);
  EXPECT_EQ(e[0].section, "");
  EXPECT_EQ(e[0].key, "seed");
  EXPECT_EQ(e[1].section, "data");
  EXPECT_EQ(e[1].value, "x.txt");
  EXPECT_EQ(e[1].line, 6u);
}

TEST(ConfigText, RejectsMalformedLines) {
  EXPECT_THROW(parse_config_text("seed 4\n", "t.cfg"), FormatError);
  EXPECT_THROW(parse_config_text("[data\n", "t.cfg"), FormatError);
  try {
    parse_config_text("seed = 1\nseed = 2\n", "t.cfg");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(Config, FixtureConfigsAreValid) {
  for (const char* name : {"experiment.cfg", "creole_only.cfg", "sweep.cfg"}) {
    const auto load = load_experiment_config(fixture_dir() / name);
    EXPECT_TRUE(load.ok()) << name << ": " << (load.errors.empty() ? "" : load.errors.front());
  }
  const auto cfg = load_experiment_config(fixture_dir() / "experiment.cfg").config;
  EXPECT_EQ(cfg.seed, 13u);
  EXPECT_EQ(cfg.aux.size(), 3u);
  EXPECT_EQ(cfg.train.objective, Objective::dro);
  EXPECT_EQ(cfg.train.strategy, GroupStrategy::language);
  EXPECT_EQ(cfg.train.preset, SizePreset::tiny());
  EXPECT_EQ(cfg.pad_pairs.size(), 2u);
  EXPECT_EQ(cfg.pad_pairs[0].domain1, "bible");
  EXPECT_TRUE(cfg.has_tagging());
  EXPECT_EQ(cfg.tag_scheme, TagScheme::bio);
  EXPECT_EQ(cfg.creole, fixture_dir() / "creole.txt");
}

TEST(Config, MaskRateOutOfRange) {
  const auto load = parse_experiment_config(base_config() + "[train]\nmask_rate = 1.5\n", "/tmp/x.cfg");
  EXPECT_FALSE(load.ok());
  EXPECT_TRUE(mentions(load.errors, "mask_rate out of range"));
}

TEST(Config, DroLanguageOnCreoleOnlyNeedsIdentifier) {
  const std::string f = fixture_dir().string();
  const std::string text = "[data]\ncreole = " + f + "/creole.txt\ncreole_language = creole:tok\nmode = creole-only\n"
                           "[grouping]\nstrategy = language\n[train]\nobjective = dro\n";
  const auto load = parse_experiment_config(text, "/tmp/x.cfg");
  EXPECT_FALSE(load.ok());
  EXPECT_TRUE(mentions(load.errors, "needs an identifier"));
  const auto with_langid = parse_experiment_config(
      "[data]\ncreole = " + f + "/creole.txt\ncreole_language = creole:tok\nmode = creole-only\n[grouping]\n"
      "strategy = language\nlangid.en = " + f + "/en.txt\nlangid.pt = " + f + "/pt.txt\n[train]\nobjective = dro\n",
      "/tmp/x.cfg");
  EXPECT_TRUE(with_langid.ok()) << (with_langid.errors.empty() ? "" : with_langid.errors.front());
}

TEST(Config, NamesTheFieldOfAMissingFile) {
  const auto load = parse_experiment_config(base_config() + "[eval]\ndictionary = /no/such/dict.txt\n", "/tmp/x.cfg");
  EXPECT_FALSE(load.ok());
  EXPECT_TRUE(mentions(load.errors, "[eval] dictionary: file not found: /no/such/dict.txt"));
}

TEST(Config, CollectsEveryProblem) {
  const auto load = parse_experiment_config(
      base_config() + "bogus = 1\n[train]\nsteps = -4\npreset = huge\n[nowhere]\nx = 1\n", "/tmp/x.cfg");
  EXPECT_GE(load.errors.size(), 4u);
  EXPECT_TRUE(mentions(load.errors, "unknown key"));
  EXPECT_TRUE(mentions(load.errors, "unknown section"));
  EXPECT_TRUE(mentions(load.errors, "expected a non-negative integer"));
  EXPECT_TRUE(mentions(load.errors, "huge"));
}

TEST(Config, RelativePathsResolveAgainstConfigDir) {
  testutil::TempDir dir;
  testutil::write_file(dir / "c.txt", "a b\n");
  testutil::write_file(dir / "e.txt", "c d\n");
  testutil::write_file(dir / "x.cfg", "[data]\ncreole = c.txt\ncreole_language = creole:x\naux.en = e.txt\n");
  const auto load = load_experiment_config(dir / "x.cfg");
  EXPECT_TRUE(load.ok());
  EXPECT_EQ(load.config.creole, dir / "c.txt");
  EXPECT_FALSE(load_experiment_config(dir / "missing.cfg").ok());
}

TEST(Config, PadPairNeedsFiveFields) {
  const auto load = parse_experiment_config(base_config() + "[divergence]\npair.x = en, a, b\n", "/tmp/x.cfg");
  EXPECT_TRUE(mentions(load.errors, "expected 'language, domain-1, path-1, domain-2, path-2'"));
}

TEST(Config, UnwritableOutput) {
  // The nearest existing ancestor is a regular file.
  const auto out = (fixture_dir() / "creole.txt" / "out").string();
  const auto load = parse_experiment_config("output = " + out + "\n" + base_config(), "/tmp/x.cfg");
  EXPECT_TRUE(mentions(load.errors, "output: directory not writable"));
}

TEST(Seeds, DerivedStreamsDifferAndRepeat) {
  const auto a = RunSeeds::derive(13), b = RunSeeds::derive(13), c = RunSeeds::derive(14);
  EXPECT_EQ(a.train, b.train);
  EXPECT_NE(a.train, c.train);
  const std::vector<std::uint64_t> all = {a.mix, a.split, a.grouping, a.train, a.eval, a.tagging, a.pad};
  for (std::size_t i = 0; i < all.size(); ++i)
    for (std::size_t j = i + 1; j < all.size(); ++j) EXPECT_NE(all[i], all[j]);
}

TEST(Sweep, AxisParsingAndDefaults) {
  EXPECT_EQ(parse_sweep_axis("preset"), SweepAxis::preset);
  EXPECT_EQ(parse_sweep_axis("weight_decay"), SweepAxis::weight_decay);
  EXPECT_THROW(parse_sweep_axis("dropout"), std::invalid_argument);
  EXPECT_EQ(default_sweep_values(SweepAxis::preset), (std::vector<std::string>{"tiny", "small", "base"}));
  EXPECT_EQ(default_sweep_values(SweepAxis::weight_decay).size(), 4u);
}

TEST(Sweep, EmptyValueListIsRejected) {
  const auto cfg = load_experiment_config(fixture_dir() / "sweep.cfg").config;
  testutil::TempDir dir;
  EXPECT_THROW(run_sweep(cfg, SweepAxis::weight_decay, {}, dir.path()), std::invalid_argument);
}
