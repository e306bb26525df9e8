#pragma once

// Seeded stand-in for a newswire treebank split when the real text is not
// available: Zipfian word frequencies, sparse word-to-word transitions, a
// per-sentence topic that shifts the unigram distribution, and sentence
// lengths around twenty words.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "fixpoint/corpus.hpp"

namespace synthetic {

struct Spec {
  std::size_t vocab = 1000;
  std::size_t topics = 12;
  std::size_t successors = 24;
  double mean_length = 21.0;
  std::uint64_t seed = 2024;
};

class Generator {
 public:
  explicit Generator(const Spec& spec) : spec_(spec), rng_(spec.seed) {
    const std::size_t n = spec.vocab;
    std::vector<double> zipf(n);
    for (std::size_t i = 0; i < n; ++i) zipf[i] = 1.0 / std::pow(static_cast<double>(i + 1), 1.05);
    global_ = std::discrete_distribution<std::size_t>(zipf.begin(), zipf.end());

    for (std::size_t k = 0; k < spec.topics; ++k) {
      std::vector<double> w(n, 0.0);
      for (std::size_t j = 0; j < 60; ++j) w[pick_uniform(n)] += 1.0 / (1.0 + static_cast<double>(j) / 6.0);
      topic_.emplace_back(w.begin(), w.end());
    }
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<std::size_t> next(spec.successors);
      std::vector<double> w(spec.successors);
      for (std::size_t j = 0; j < spec.successors; ++j) {
        next[j] = global_(rng_);
        w[j] = 1.0 / static_cast<double>(j + 1);
      }
      succ_.push_back(next);
      succ_weight_.emplace_back(w.begin(), w.end());
    }
  }

  fixpoint::Sentences sentences(std::size_t words) {
    fixpoint::Sentences out;
    std::size_t total = 0;
    std::poisson_distribution<int> len(spec_.mean_length - 3.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> pick_topic(0, spec_.topics - 1);
    while (total < words) {
      const std::size_t topic = pick_topic(rng_);
      const std::size_t n = 3 + static_cast<std::size_t>(len(rng_));
      std::vector<std::string> s;
      std::size_t prev = global_(rng_);
      for (std::size_t t = 0; t < n; ++t) {
        const double r = u(rng_);
        std::size_t w;
        if (t > 0 && r < 0.55) {
          w = succ_[prev][succ_weight_[prev](rng_)];
        } else if (r < 0.85) {
          w = topic_[topic](rng_);
        } else {
          w = global_(rng_);
        }
        s.push_back("w" + std::to_string(w));
        prev = w;
      }
      total += s.size() + 1;
      out.push_back(std::move(s));
    }
    return out;
  }

 private:
  std::size_t pick_uniform(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_);
  }

  Spec spec_;
  std::mt19937_64 rng_;
  std::discrete_distribution<std::size_t> global_;
  std::vector<std::discrete_distribution<std::size_t>> topic_;
  std::vector<std::vector<std::size_t>> succ_;
  std::vector<std::discrete_distribution<std::size_t>> succ_weight_;
};

}  // namespace synthetic
