#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "../oracles.hpp"
#include "fixpoint/elman.hpp"
#include "fixpoint/perplexity.hpp"

using namespace fixpoint;

namespace {

// H = 2, |V| = 3 model with hand-picked values.
ModelParams toy2() {
  ModelParams p = ModelParams::zeros(2, 3);
  p.W.data = {0.5, -0.3, 0.2, 0.4};
  p.V.data = {0.1, -0.7, 0.9, 0.6, 0.25, -0.4};
  p.U.data = {0.3, -0.2, 0.0, 0.5, -0.6, 0.1};
  return p;
}

}  // namespace

TEST_SUITE("elman") {
  TEST_CASE("zero weights give zero states") {
    const auto p = ModelParams::zeros(3, 5);
    const auto b = sequential_forward(std::vector<TokenId>{1, 4, 2}, Vector(3, 0.0), p);
    for (double v : b.states.data) CHECK(v == 0.0);
  }

  TEST_CASE("one-hot step from zero history is phi of a V column") {
    const auto p = toy2();
    for (TokenId j = 0; j < 3; ++j) {
      const Vector h = forward_step(Vector(2, 0.0), j, p);
      CHECK(h[0] == std::tanh(p.V(0, j)));
      CHECK(h[1] == std::tanh(p.V(1, j)));
    }
  }

  TEST_CASE("dense one-hot input matches the fast path to 0 ulps") {
    std::mt19937_64 rng(5);
    for (bool bias : {false, true}) {
      for (int trial = 0; trial < 20; ++trial) {
        const auto p = oracle::random_params(rng, 7, 11, 0.8, bias);
        Vector h(7);
        std::uniform_real_distribution<double> u(-1, 1);
        for (double& x : h) x = u(rng);
        for (TokenId j = 0; j < 11; ++j) {
          Vector x(11, 0.0);
          x[j] = 1.0;
          CHECK(forward_step(h, x, p) == forward_step(h, j, p));
        }
      }
    }
  }

  TEST_CASE("shape errors") {
    const auto p = toy2();
    CHECK_THROWS_AS(forward_step(Vector(3, 0.0), TokenId{0}, p), ShapeError);
    CHECK_THROWS_AS(forward_step(Vector(2, 0.0), TokenId{3}, p), ShapeError);
    CHECK_THROWS_AS(forward_step(Vector(2, 0.0), Vector(2, 0.0), p), ShapeError);
    CHECK_THROWS(ModelParams::zeros(2, 3, Activation::tanh, false, 3));
  }

  TEST_CASE("T = 0 gives the single h0 row") {
    const auto b = sequential_forward(std::vector<TokenId>{}, Vector{0.3, -0.1}, toy2());
    CHECK(b.states.rows == 1);
    CHECK(b.states.data == std::vector<double>{0.3, -0.1});
  }

  TEST_CASE("hand-unrolled H = 2, T = 3") {
    const auto p = toy2();
    const double a0 = 0.2, b0 = -0.5;  // h0
    const std::vector<TokenId> x{2, 0, 1};
    auto V = [&](int i, TokenId j) { return p.V.data[i * 3 + j]; };
    const double h1a = std::tanh(0.5 * a0 + -0.3 * b0 + V(0, 2));
    const double h1b = std::tanh(0.2 * a0 + 0.4 * b0 + V(1, 2));
    const double h2a = std::tanh(0.5 * h1a + -0.3 * h1b + V(0, 0));
    const double h2b = std::tanh(0.2 * h1a + 0.4 * h1b + V(1, 0));
    const double h3a = std::tanh(0.5 * h2a + -0.3 * h2b + V(0, 1));
    const double h3b = std::tanh(0.2 * h2a + 0.4 * h2b + V(1, 1));
    const auto blk = sequential_forward(x, Vector{a0, b0}, p);
    const std::vector<double> expect{a0, b0, h1a, h1b, h2a, h2b, h3a, h3b};
    CHECK(max_abs_diff(blk.states.data, expect) < 1e-15);
  }

  TEST_CASE("sequential forward matches the nested-loop oracle, with bias and embedding") {
    std::mt19937_64 rng(17);
    for (std::size_t emb : {0u, 3u}) {
      for (auto act : {Activation::tanh, Activation::sigmoid}) {
        const auto p = oracle::random_params(rng, 5, 9, 0.7, true, emb, act);
        const auto in = oracle::random_tokens(rng, 12, 9);
        const Vector h0{0.1, -0.2, 0.3, 0.0, 0.05};
        const auto blk = sequential_forward(in, h0, p);
        const auto ref = oracle::forward(p, in, h0);
        for (std::size_t t = 0; t < ref.size(); ++t) CHECK(max_abs_diff(blk.row(t), ref[t]) < 1e-13);
      }
    }
  }

  TEST_CASE("prefix property") {
    std::mt19937_64 rng(23);
    const auto p = oracle::random_params(rng, 4, 6, 0.9);
    const auto in = oracle::random_tokens(rng, 10, 6);
    const auto full = sequential_forward(in, Vector(4, 0.0), p);
    for (std::size_t k = 0; k <= in.size(); ++k) {
      const auto part = sequential_forward(std::span(in).first(k), Vector(4, 0.0), p);
      for (std::size_t t = 0; t <= k; ++t) {
        CHECK(std::equal(part.row(t).begin(), part.row(t).end(), full.row(t).begin()));
      }
    }
  }

  TEST_CASE("output distribution") {
    auto p = ModelParams::zeros(3, 5);
    for (double v : predict_log_probs(Vector{1, 2, 3}, p)) CHECK(v == doctest::Approx(std::log(0.2)));

    auto q = ModelParams::zeros(1, 2);
    q.U.data = {1.0, 0.0};
    const Vector lp = predict_log_probs(Vector{1.0}, q);
    const double e = std::exp(1.0);
    CHECK(lp[0] == doctest::Approx(std::log(e / (e + 1))).epsilon(1e-14));
    CHECK(lp[1] == doctest::Approx(std::log(1 / (e + 1))).epsilon(1e-14));

    std::mt19937_64 rng(29);
    const auto r = oracle::random_params(rng, 4, 13, 2.0, true);
    double s = 0;
    for (double v : predict_log_probs(Vector{0.3, -1, 0.5, 0.9}, r)) s += std::exp(v);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("sequence NLL") {
    auto p = ModelParams::zeros(3, 7);
    const std::vector<TokenId> y{3, 4, 0};
    const auto r = sequence_nll(y, 0, Vector(3, 0.0), p);
    CHECK(r.words == 3);
    CHECK(r.nll == 3 * std::log(7.0));

    // single token, |V| = 2
    auto q = ModelParams::zeros(1, 2);
    q.V.data = {0.8, -0.4};
    q.U.data = {1.5, -0.5};
    const double h1 = std::tanh(-0.4);  // input is bos = 1
    const double l0 = 1.5 * h1, l1 = -0.5 * h1;
    const double expect = -(l0 - std::log(std::exp(l0) + std::exp(l1)));
    CHECK(sequence_nll(std::vector<TokenId>{0}, 1, Vector{0.0}, q).nll ==
          doctest::Approx(expect).epsilon(1e-14));

    // additive over sentences when h resets
    std::mt19937_64 rng(31);
    const auto rp = oracle::random_params(rng, 4, 6, 0.8);
    const std::vector<TokenId> s1{2, 3, 0}, s2{5, 1, 1, 0};
    EncodedCorpus c;
    c.sentences = {s1, s2};
    c.word_count = 7;
    c.vocab_size = 6;
    const double total = corpus_nll(c, rp, ForwardSpec::sequential()).nll;
    CHECK(total == sequence_nll(s1, 0, Vector(4, 0.0), rp).nll + sequence_nll(s2, 0, Vector(4, 0.0), rp).nll);
    CHECK(total == doctest::Approx(oracle::bptt_loss(rp, s1, 0) + oracle::bptt_loss(rp, s2, 0)).epsilon(1e-12));
  }

  TEST_CASE("perplexity") {
    EncodedCorpus c;
    c.sentences = {{2, 3, 0}, {4, 0}};
    c.word_count = 5;
    c.vocab_size = 9;
    CHECK(perplexity(c, ModelParams::zeros(4, 9), ForwardSpec::sequential()) == doctest::Approx(9.0).epsilon(1e-14));

    std::mt19937_64 rng(37);
    const auto p = oracle::random_params(rng, 6, 9, 0.9);
    const double seq = perplexity(c, p, ForwardSpec::sequential());
    const double fp = perplexity(c, p, ForwardSpec::fpi(3));
    CHECK(std::abs(seq - fp) / seq < 1e-9);
    for (int w : {1, 2, 3}) CHECK(perplexity(c, p, ForwardSpec::fpi(3), w) == fp);
    CHECK_THROWS_AS(perplexity(EncodedCorpus{}, p, ForwardSpec::sequential()), DataError);
  }

  TEST_CASE("forward option parsing") {
    CHECK(ForwardSpec::parse("sequential").kind == ForwardSpec::Kind::sequential);
    const auto f = ForwardSpec::parse("fpi:7");
    CHECK(f.kind == ForwardSpec::Kind::fpi);
    CHECK(f.rho == 7);
    CHECK(f.to_string() == "fpi:7");
    CHECK_THROWS(ForwardSpec::parse("fpi:0"));
    CHECK_THROWS(ForwardSpec::parse("fpi:x"));
    CHECK_THROWS(ForwardSpec::parse("parallel"));
  }

  TEST_CASE("model file roundtrip") {
    std::mt19937_64 rng(41);
    for (std::size_t emb : {0u, 3u}) {
      for (bool bias : {false, true}) {
        const auto p = oracle::random_params(rng, 4, 7, 1.0, bias, emb, Activation::sigmoid);
        std::stringstream buf;
        save_model(buf, p);
        CHECK(load_model(buf) == p);
      }
    }
    std::stringstream junk("fixpoint-model v1 2 3 3 tanh 0\n");
    CHECK_THROWS_AS(load_model(junk), DataError);
    std::stringstream trailing;
    save_model(trailing, ModelParams::zeros(2, 3));
    trailing << 'x';
    CHECK_THROWS_AS(load_model(trailing), DataError);
  }
}
