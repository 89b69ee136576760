#include "doctest.h"

#include "datagrad/config.hpp"
#include "datagrad/errors.hpp"

using namespace datagrad;

namespace {

ConfigEntries with_data(ConfigEntries e) {
  e.emplace("train_images", "ti");
  e.emplace("train_labels", "tl");
  return e;
}

const ConfigNeeds kTrain{true, false};

}  // namespace

TEST_CASE("mode names") {
  for (Mode m : {Mode::Rect, Mode::L1, Mode::L2, Mode::DGL1, Mode::DGL2, Mode::MT, Mode::MT_DGL1,
                 Mode::MT_DGL2})
    CHECK(parse_mode(to_string(m)) == m);
  CHECK_THROWS_AS(parse_mode("dg"), ConfigError);
  CHECK(uses_datagrad(Mode::MT_DGL2));
  CHECK_FALSE(uses_datagrad(Mode::L1));
  CHECK(is_multitask(Mode::MT));
  CHECK_FALSE(is_multitask(Mode::DGL1));
}

TEST_CASE("config text parsing") {
  const auto e = parse_config_text("# comment\nmode = dgl1   # trailing\n\n  eta=0.05\n", "f.cfg");
  CHECK(e.size() == 2);
  CHECK(e.at("mode") == "dgl1");
  CHECK(e.at("eta") == "0.05");

  CHECK_THROWS_WITH_AS(parse_config_text("mode = rect\nbogus = 1\n", "f.cfg"),
                       doctest::Contains("f.cfg:2"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config_text("eta = 1\neta = 2\n", "f.cfg"),
                       doctest::Contains("duplicate"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("eta 0.1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("eta =\n"), ConfigError);
  CHECK_THROWS_AS(load_config_file("/nonexistent/x.cfg"), ConfigError);
}

TEST_CASE("training requires the fields of its mode") {
  CHECK_THROWS_WITH_AS(resolve_config(with_data({}), kTrain), doctest::Contains("mode"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(resolve_config(with_data({{"mode", "l1"}}), kTrain),
                       doctest::Contains("penalty"), ConfigError);
  CHECK_THROWS_WITH_AS(resolve_config(with_data({{"mode", "dgl1"}, {"lambda1", "0.01"}}), kTrain),
                       doctest::Contains("fd_step"), ConfigError);
  CHECK_THROWS_WITH_AS(resolve_config(with_data({{"mode", "dgl2"}, {"fd_step", "0.1"}}), kTrain),
                       doctest::Contains("lambda1"), ConfigError);
  CHECK_THROWS_WITH_AS(resolve_config(with_data({{"mode", "mt"}}), kTrain),
                       doctest::Contains("gamma"), ConfigError);
  CHECK_THROWS_WITH_AS(resolve_config({{"mode", "rect"}}, kTrain),
                       doctest::Contains("train_images"), ConfigError);
}

TEST_CASE("fields a mode does not use are rejected") {
  CHECK_THROWS_WITH_AS(resolve_config(with_data({{"mode", "rect"}, {"lambda1", "0.1"}}), kTrain),
                       doctest::Contains("lambda1"), ConfigError);
  CHECK_THROWS_AS(resolve_config(with_data({{"mode", "dgl1"}, {"lambda1", "0.1"},
                                            {"fd_step", "0.1"}, {"gamma", "0.5"}}),
                                 kTrain),
                  ConfigError);
  CHECK_THROWS_AS(resolve_config(with_data({{"mode", "mt"}, {"gamma", "0.5"}, {"penalty", "0.1"}}),
                                 kTrain),
                  ConfigError);
}

TEST_CASE("resolved values") {
  const RunConfig rect = resolve_config(with_data({{"mode", "rect"}}), kTrain);
  CHECK(rect.mode == Mode::Rect);
  CHECK(rect.train.eta == 0.1005);
  CHECK(rect.train.epochs == 30);
  CHECK(rect.train.batch_size == 100);
  CHECK(rect.train.lambda1 == 0.0);
  CHECK_FALSE(rect.train.weight_penalty.has_value());
  CHECK(rect.layer_sizes() == std::vector<std::size_t>{784, 784, 784, 784, 10});

  const RunConfig l2 = resolve_config(with_data({{"mode", "l2"}, {"penalty", "0.003"}}), kTrain);
  REQUIRE(l2.train.weight_penalty.has_value());
  CHECK(l2.train.weight_penalty->kind == RegularizerKind::L2);
  CHECK(l2.train.weight_penalty->coefficient == 0.003);

  const RunConfig dg = resolve_config(
      with_data({{"mode", "mt_dgl2"}, {"lambda1", "0.02"}, {"fd_step", "0.07"}, {"gamma", "0.4"},
                 {"hidden", "32, 16"}, {"seed", "9"}, {"phi_grid", "0,0.1"}}),
      kTrain);
  CHECK(dg.train.reg_kind == RegularizerKind::L2);
  CHECK(dg.train.lambda1 == 0.02);
  CHECK(dg.train.fd_step == 0.07);
  CHECK(dg.train.gamma == 0.4);
  CHECK(dg.train.seed == 9);
  CHECK(dg.layer_sizes() == std::vector<std::size_t>{784, 32, 16, 10});
  CHECK(dg.attack.phi_grid == std::vector<double>{0.0, 0.1});
  CHECK(dg.describe().at("reg_kind") == "l2");

  const RunConfig dg1 =
      resolve_config(with_data({{"mode", "dgl1"}, {"lambda1", "0.01"}, {"fd_step", "0.1"}}), kTrain);
  CHECK(dg1.train.reg_kind == RegularizerKind::L1);
}

TEST_CASE("value errors become config errors") {
  CHECK_THROWS_WITH_AS(resolve_config(with_data({{"mode", "rect"}, {"eta", "fast"}}), kTrain),
                       doctest::Contains("eta"), ConfigError);
  CHECK_THROWS_AS(resolve_config(with_data({{"mode", "rect"}, {"eta", "-1"}}), kTrain), ConfigError);
  CHECK_THROWS_AS(resolve_config(with_data({{"mode", "rect"}, {"batch_size", "0"}}), kTrain),
                  ConfigError);
  CHECK_THROWS_AS(resolve_config(with_data({{"mode", "rect"}, {"phi_grid", "0.1,0.2"}}), kTrain),
                  ConfigError);
  CHECK_THROWS_AS(resolve_config(with_data({{"mode", "rect"}, {"hidden", "10,0"}}), kTrain),
                  ConfigError);
  CHECK_THROWS_AS(resolve_config(with_data({{"mode", "l1"}, {"penalty", "-0.1"}}), kTrain),
                  ConfigError);
  CHECK_THROWS_AS(resolve_config(with_data({{"mode", "rect"}, {"seed", "-3"}}), kTrain),
                  ConfigError);
}

TEST_CASE("non-training commands") {
  const RunConfig c = resolve_config({{"test_images", "a"}, {"test_labels", "b"}}, {false, true});
  CHECK(c.test_images == "a");
  CHECK_THROWS_AS(resolve_config({}, {false, true}), ConfigError);
  CHECK_NOTHROW(resolve_config({}, {}));
}
