#include <doctest.h>

#include <sstream>

#include "fixpoint/config.hpp"

using namespace fixpoint;

TEST_SUITE("config") {
  TEST_CASE("parse, comments and overrides") {
    KeyValueConfig kv(train_config_keys());
    std::istringstream in("# run\ngrad_mode = fpi\nrho=5\n\nhidden=32\nlearning_rate=0.005\n");
    kv.parse(in);
    kv.set("hidden", "64");
    const TrainConfig c = train_config_from(kv);
    CHECK(c.grad_mode.kind == GradMode::Kind::fpi_full);
    CHECK(c.grad_mode.rho == 5);
    CHECK(c.hidden == 64);
    CHECK(c.learning_rate == 0.005);
    CHECK(c.batch_size == TrainConfig{}.batch_size);
  }

  TEST_CASE("unknown keys and bad values are rejected") {
    KeyValueConfig kv(train_config_keys());
    std::istringstream bad("hiden=3\n");
    CHECK_THROWS_AS(kv.parse(bad), ConfigError);
    std::istringstream nokey("just text\n");
    CHECK_THROWS_AS(kv.parse(nokey), ConfigError);
    kv.set("hidden", "3x");
    CHECK_THROWS_AS(train_config_from(kv), ConfigError);
    KeyValueConfig kv2(train_config_keys());
    kv2.set("grad_mode", "fpi");
    kv2.set("rho", "0");
    CHECK_THROWS_AS(train_config_from(kv2), ConfigError);
    KeyValueConfig kv3(train_config_keys());
    kv3.set("bias", "maybe");
    CHECK_THROWS_AS(train_config_from(kv3), ConfigError);
  }

  TEST_CASE("resolved config round trips") {
    TrainConfig c;
    c.grad_mode = GradMode::fpi(7, true);
    c.learning_rate = 0.0031;
    c.clip_norm = 2.5;
    c.bias = true;
    c.activation = Activation::sigmoid;
    c.loss_norm = LossNorm::per_sequence;
    c.embedding_dim = 12;
    c.seed = 99;
    std::ostringstream out;
    to_key_values(c).write(out);
    KeyValueConfig kv(train_config_keys());
    std::istringstream in(out.str());
    kv.parse(in);
    const TrainConfig r = train_config_from(kv);
    std::ostringstream again;
    to_key_values(r).write(again);
    CHECK(again.str() == out.str());
    CHECK(r.grad_mode.kind == GradMode::Kind::fpi_detached);
    CHECK(r.clip_norm == 2.5);
    CHECK(out.str().find("clip_norm=2.5\n") != std::string::npos);
  }
}
