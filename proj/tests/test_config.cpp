#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "dmd/config.hpp"

using namespace dmd;

TEST_CASE("defaults validate and echo round-trips") {
  ExperimentConfig cfg;
  validate(cfg);
  std::istringstream in(config_text(cfg));
  ExperimentConfig back = parse_config_text(in);
  CHECK(config_text(back) == config_text(cfg));
}

TEST_CASE("parsing: comments, blanks, and whitespace") {
  std::istringstream in(
      "# a comment\n"
      "\n"
      "  steps = 100   # trailing comment\n"
      "cadence=10\n");
  ExperimentConfig cfg = parse_config_text(in);
  CHECK(cfg.steps == 100);
  CHECK(cfg.cadence == 10);
}

TEST_CASE("lambda accepts inf") {
  ExperimentConfig cfg;
  apply_kv(cfg, "lambda", "inf");
  CHECK(std::isinf(cfg.lambda));
  CHECK(cfg.lambda > 0);
  apply_kv(cfg, "lambda", "-inf");
  CHECK(cfg.lambda < 0);
}

TEST_CASE("unknown key is a config error naming the key") {
  ExperimentConfig cfg;
  try {
    apply_kv(cfg, "learning_rate", "0.1");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field == "learning_rate");
  }
}

TEST_CASE("bad values name their field") {
  ExperimentConfig cfg;
  try {
    apply_kv(cfg, "steps", "twelve");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field == "steps");
  }
  try {
    apply_kv(cfg, "seeds", "1,,3");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field == "seeds");
  }
}

TEST_CASE("missing '=' reports the line") {
  std::istringstream in("steps 100\n");
  CHECK_THROWS_AS(parse_config_text(in), ConfigError);
}

TEST_CASE("validation is total: each invalid field is named") {
  auto expect_field = [](ExperimentConfig cfg, const std::string& field) {
    try {
      validate(cfg);
      FAIL("expected ConfigError for ", field);
    } catch (const ConfigError& e) {
      CHECK(e.field == field);
    }
  };
  {
    ExperimentConfig c;
    c.seeds.clear();
    expect_field(c, "seeds");
  }
  {
    ExperimentConfig c;
    c.steps = 10;
    c.cadence = 100;
    expect_field(c, "steps");
  }
  {
    ExperimentConfig c;
    c.ratio = 1.5;
    expect_field(c, "ratio");
  }
  {
    ExperimentConfig c;
    c.layer = 99;
    expect_field(c, "layer");
  }
  {
    ExperimentConfig c;
    c.strategy = StrategyKind::fixed_interval(0);
    expect_field(c, "period");
  }
  {
    ExperimentConfig c;
    c.mask_probability = -0.1;
    expect_field(c, "mask_probability");
  }
  {
    ExperimentConfig c;
    c.sweep_layers = {7};
    expect_field(c, "sweep_layers");
  }
  {
    ExperimentConfig c;
    c.lr = 0.0;
    expect_field(c, "lr");
  }
  {
    ExperimentConfig c;
    c.out.clear();
    expect_field(c, "out");
  }
}

TEST_CASE("effective layer: 5 when deep enough, else penultimate") {
  ExperimentConfig cfg;  // 5 hidden + output = 6 layers
  CHECK(cfg.effective_layer() == 5);
  cfg.disc_hidden = {16, 16};  // 3 layers
  CHECK(cfg.effective_layer() == 2);
  cfg.layer = 3;
  CHECK(cfg.effective_layer() == 3);
}

TEST_CASE("strategy names parse to distinct kinds") {
  const char* names[] = {"baseline",        "feature_mask",   "input_mask", "dynamic_head",
                         "vanilla_dropout", "fixed_interval", "ccd"};
  for (const char* n : names) {
    ExperimentConfig cfg;
    apply_kv(cfg, "strategy", n);
    CHECK(strategy_name(cfg.strategy.id) == n);
  }
  CHECK_THROWS_AS(parse_strategy("attention_mask", 0, true), ConfigError);
}

TEST_CASE("period survives strategy assignment order") {
  std::istringstream in("strategy=fixed_interval\nperiod=8\n");
  ExperimentConfig a = parse_config_text(in);
  CHECK(a.strategy.period == 8);
  std::istringstream in2("period=8\nstrategy=fixed_interval\n");
  ExperimentConfig b = parse_config_text(in2);
  CHECK(b.strategy.period == 8);
}
