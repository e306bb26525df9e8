#include "fixpoint/eval_bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include "fixpoint/fpi.hpp"

namespace fixpoint {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

SweepResult sweep_rho(const TrainConfig& config_template, std::span<const std::size_t> rhos,
                      const EncodedCorpus& train_corpus, const EncodedCorpus& valid,
                      const EncodedCorpus& test, bool with_bptt_reference,
                      const std::function<void(const SweepRow&)>& progress) {
  if (rhos.empty()) throw std::invalid_argument("sweep needs at least one rho");
  for (std::size_t i = 0; i < rhos.size(); ++i) {
    if (rhos[i] == 0) throw std::invalid_argument("sweep rho values must be >= 1");
    if (i > 0 && rhos[i] <= rhos[i - 1]) {
      throw std::invalid_argument("sweep rho values must be strictly increasing");
    }
  }
  if (test.empty()) throw DataError("test corpus is empty");

  SweepResult result;
  if (with_bptt_reference) {
    TrainConfig cfg = config_template;
    cfg.grad_mode = GradMode::bptt();
    const auto start = Clock::now();
    try {
      const auto trained = train(cfg, train_corpus, valid);
      result.bptt_ppl = perplexity(test, trained.best_params, ForwardSpec::sequential(), cfg.workers);
    } catch (const DivergenceError&) {
      result.bptt_ppl = std::numeric_limits<double>::quiet_NaN();
    }
    result.bptt_seconds = seconds_since(start);
  }

  for (std::size_t rho : rhos) {
    for (bool detach : {false, true}) {
      TrainConfig cfg = config_template;
      cfg.grad_mode = GradMode::fpi(rho, detach);
      SweepRow row;
      row.rho = rho;
      row.detach = detach;
      const auto start = Clock::now();
      try {
        const auto trained = train(cfg, train_corpus, valid);
        row.test_ppl = perplexity(test, trained.best_params, cfg.eval_forward(), cfg.workers);
      } catch (const DivergenceError& e) {
        row.failed = true;
        row.error = e.what();
        row.test_ppl = std::numeric_limits<double>::quiet_NaN();
      }
      row.seconds = seconds_since(start);
      if (progress) progress(row);
      result.rows.push_back(std::move(row));
    }
  }
  return result;
}

void write_sweep_csv(const std::filesystem::path& directory, const SweepResult& result) {
  std::filesystem::create_directories(directory);
  write_file_atomic(directory / "sweep.csv", [&](std::ostream& out) {
    out.precision(17);
    out << kSweepHeader << '\n';
    for (const auto& r : result.rows) {
      out << r.rho << ',' << (r.detach ? 1 : 0) << ',' << r.test_ppl << ',' << r.seconds << '\n';
    }
  });
  if (result.bptt_ppl) {
    write_file_atomic(directory / "sweep_reference.csv", [&](std::ostream& out) {
      out.precision(17);
      out << kSweepReferenceHeader << '\n';
      out << "bptt," << *result.bptt_ppl << ',' << result.bptt_seconds << '\n';
    });
  }
}

namespace {

template <typename Fn>
double median_seconds(std::size_t trials, Fn&& fn) {
  fn();  // warmup
  std::vector<double> times;
  times.reserve(trials);
  for (std::size_t i = 0; i < trials; ++i) {
    const auto start = Clock::now();
    fn();
    times.push_back(seconds_since(start));
  }
  std::sort(times.begin(), times.end());
  const std::size_t mid = times.size() / 2;
  return times.size() % 2 == 1 ? times[mid] : 0.5 * (times[mid - 1] + times[mid]);
}

}  // namespace

BenchResult bench_forward(const BenchConfig& config) {
  if (config.trials < 3) throw std::invalid_argument("bench needs at least 3 trials");
  if (config.lengths.empty() || config.rhos.empty() || config.workers.empty()) {
    throw std::invalid_argument("bench needs non-empty T, rho and worker lists");
  }
  for (int w : config.workers) {
    if (w < 1) throw std::invalid_argument("worker counts must be >= 1");
  }

  TrainConfig init;
  init.hidden = config.hidden;
  init.init_range = config.init_range;
  init.seed = config.seed;
  const ModelParams params = init_params(init, config.vocab);
  const Vector h0(config.hidden, 0.0);

  std::vector<int> worker_list = config.workers;
  if (std::find(worker_list.begin(), worker_list.end(), 1) == worker_list.end()) {
    worker_list.insert(worker_list.begin(), 1);
  }

  BenchResult result;
  std::mt19937_64 rng(config.seed);
  for (std::size_t length : config.lengths) {
    std::uniform_int_distribution<TokenId> token(0, static_cast<TokenId>(config.vocab - 1));
    std::vector<TokenId> inputs(length);
    for (auto& x : inputs) x = token(rng);

    const HistoryBlock reference = sequential_forward(inputs, h0, params);
    for (int w : worker_list) {
      HistoryBlock check = fpi_solve(inputs, h0, length, params, FpiInit::zeros, w).block;
      if (config.inject_fault && !check.states.empty()) check.states.data.back() += 1e-3;
      const double diff = max_abs_diff(check.states.data, reference.states.data);
      if (diff != 0.0) {
        throw EquivalenceGateError("fpi_solve(rho = T = " + std::to_string(length) + ") with " +
                                   std::to_string(w) + " workers differs from the sequential "
                                   "recurrence by " + std::to_string(diff));
      }
    }

    result.sequential.push_back(
        {length, median_seconds(config.trials, [&] { (void)sequential_forward(inputs, h0, params); })});

    for (std::size_t rho : config.rhos) {
      double baseline = 0.0;
      for (int w : worker_list) {
        const double t = median_seconds(config.trials, [&] {
          (void)fpi_solve(inputs, h0, rho, params, FpiInit::zeros, w);
        });
        if (w == 1) baseline = t;
        const bool requested =
            std::find(config.workers.begin(), config.workers.end(), w) != config.workers.end();
        if (requested) result.rows.push_back({length, rho, w, t, w == 1 ? 1.0 : baseline / t});
      }
    }
  }
  return result;
}

void write_bench_csv(const std::filesystem::path& directory, const BenchResult& result) {
  std::filesystem::create_directories(directory);
  write_file_atomic(directory / "bench.csv", [&](std::ostream& out) {
    out.precision(9);
    out << kBenchHeader << '\n';
    for (const auto& r : result.rows) {
      out << r.length << ',' << r.rho << ',' << r.workers << ',' << r.median_seconds << ','
          << r.speedup << '\n';
    }
  });
  write_file_atomic(directory / "bench_sequential.csv", [&](std::ostream& out) {
    out.precision(9);
    out << kBenchSequentialHeader << '\n';
    for (const auto& s : result.sequential) out << s.length << ',' << s.median_seconds << '\n';
  });
}

double fpi_seconds_per_iteration(const BenchResult& result, std::size_t length) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t n = 0;
  for (const auto& r : result.rows) {
    if (r.length != length || r.workers != 1) continue;
    const auto x = static_cast<double>(r.rho);
    sx += x;
    sy += r.median_seconds;
    sxx += x * x;
    sxy += x * r.median_seconds;
    ++n;
  }
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  const double nn = static_cast<double>(n);
  return (nn * sxy - sx * sy) / (nn * sxx - sx * sx);
}

}  // namespace fixpoint
