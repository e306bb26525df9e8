#include "fixpoint/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

namespace fixpoint {

LossNorm parse_loss_norm(std::string_view name) {
  if (name == "per_word") return LossNorm::per_word;
  if (name == "per_sequence") return LossNorm::per_sequence;
  throw std::invalid_argument("loss_norm must be per_word or per_sequence");
}

std::string_view to_string(LossNorm n) {
  return n == LossNorm::per_word ? "per_word" : "per_sequence";
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("train config: " + what); };
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (epochs < 1) fail("epochs must be >= 1");
  if (hidden < 1) fail("hidden must be >= 1");
  if (!(learning_rate > 0.0)) fail("learning_rate must be > 0");
  if (!(beta1 > 0.0 && beta1 < 1.0)) fail("beta1 must lie in (0, 1)");
  if (!(beta2 > 0.0 && beta2 < 1.0)) fail("beta2 must lie in (0, 1)");
  if (!(epsilon > 0.0)) fail("epsilon must be > 0");
  if (!(init_range >= 0.0)) fail("init_range must be >= 0");
  if (clip_norm && !(*clip_norm > 0.0)) fail("clip_norm must be > 0");
  if (workers < 1) fail("workers must be >= 1");
  if (grad_mode.is_fpi() && grad_mode.rho < 1) fail("rho must be >= 1");
}

ForwardSpec TrainConfig::eval_forward() const {
  return grad_mode.is_fpi() ? ForwardSpec::fpi(grad_mode.rho) : ForwardSpec::sequential();
}

OptimizerState OptimizerState::zeros_like(const ModelParams& p) {
  OptimizerState s;
  s.m = ModelParams::zeros(p.hidden(), p.vocab(), p.activation, p.has_bias(),
                           p.one_hot() ? 0 : p.input_dim());
  s.v = s.m;
  return s;
}

DivergenceError::DivergenceError(std::size_t e, std::size_t b, const std::string& what)
    : std::runtime_error("training diverged at epoch " + std::to_string(e) + ", batch " +
                         std::to_string(b) + ": " + what),
      epoch(e),
      batch(b) {}

ModelParams init_params(const TrainConfig& config, std::size_t vocab_size) {
  ModelParams p = ModelParams::zeros(config.hidden, vocab_size, config.activation, config.bias,
                                     config.embedding_dim);
  if (config.init_range == 0.0) return p;
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> dist(-config.init_range, config.init_range);
  for (auto t : p.tensors()) {
    for (double& x : t) x = dist(rng);
  }
  return p;
}

void adam_step(ModelParams& params, const GradientSet& grads, OptimizerState& opt,
               const TrainConfig& config, double grad_scale) {
  auto p = params.tensors();
  auto m = opt.m.tensors();
  auto v = opt.v.tensors();
  const auto g = grads.tensors();
  if (p.size() != g.size() || m.size() != p.size() || v.size() != p.size()) {
    throw ShapeError("adam_step: gradient or optimizer layout does not match parameters");
  }
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (g[k].size() != p[k].size() || m[k].size() != p[k].size()) {
      throw ShapeError("adam_step: tensor size mismatch for " +
                       std::string(params.tensor_names()[k]));
    }
    for (std::size_t j = 0; j < g[k].size(); ++j) {
      if (!std::isfinite(g[k][j] * grad_scale)) {
        throw NonFiniteError("non-finite gradient in " + std::string(params.tensor_names()[k]) +
                             " at entry " + std::to_string(j));
      }
    }
  }

  const auto t = static_cast<double>(opt.step + 1);
  const double bc1 = 1.0 - std::pow(config.beta1, t);
  const double bc2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t k = 0; k < p.size(); ++k) {
    for (std::size_t j = 0; j < p[k].size(); ++j) {
      const double gj = g[k][j] * grad_scale;
      m[k][j] = config.beta1 * m[k][j] + (1.0 - config.beta1) * gj;
      v[k][j] = config.beta2 * v[k][j] + (1.0 - config.beta2) * gj * gj;
      const double mhat = m[k][j] / bc1;
      const double vhat = v[k][j] / bc2;
      p[k][j] -= config.learning_rate * mhat / (std::sqrt(vhat) + config.epsilon);
    }
  }
  ++opt.step;
}

void save_optimizer(const std::filesystem::path& path, const OptimizerState& opt) {
  const auto& p = opt.m;
  write_file_atomic(path, [&](std::ostream& out) {
    out << "fixpoint-opt v1 " << p.hidden() << ' ' << p.input_dim() << ' ' << p.vocab() << ' '
        << to_string(p.activation) << ' ' << (p.has_bias() ? 1 : 0) << ' ' << opt.step << '\n';
    write_tensors(out, opt.m.tensors());
    write_tensors(out, opt.v.tensors());
  });
}

OptimizerState load_optimizer(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::string header;
  std::getline(in, header);
  std::istringstream hs(header);
  std::string magic, version, act;
  std::size_t h = 0, e = 0, v = 0;
  int bias = 0;
  std::uint64_t step = 0;
  if (!(hs >> magic >> version >> h >> e >> v >> act >> bias >> step) || magic != "fixpoint-opt" ||
      version != "v1") {
    throw DataError("not a fixpoint-opt v1 file");
  }
  OptimizerState s;
  s.m = ModelParams::zeros(h, v, parse_activation(act), bias == 1, e == v ? 0 : e);
  s.v = s.m;
  s.step = step;
  read_tensors(in, s.m.tensors());
  read_tensors(in, s.v.tensors());
  return s;
}

namespace {

void write_metrics(const std::filesystem::path& path, const std::vector<EpochMetrics>& rows) {
  write_file_atomic(path, [&](std::ostream& out) {
    out << kMetricsHeader << '\n';
    out.precision(17);
    for (const auto& r : rows) {
      out << r.epoch << ',' << r.train_loss << ',' << r.valid_ppl << ',' << r.seconds << '\n';
    }
  });
}

}  // namespace

TrainResult train(const TrainConfig& config, const EncodedCorpus& train_corpus,
                  const EncodedCorpus& valid_corpus, const TrainOutput& output) {
  config.validate();
  if (train_corpus.vocab_size == 0) throw DataError("training corpus has no vocabulary");
  return train_from(init_params(config, train_corpus.vocab_size), config, train_corpus,
                    valid_corpus, output);
}

TrainResult train_from(ModelParams params, const TrainConfig& config,
                       const EncodedCorpus& train_corpus, const EncodedCorpus& valid_corpus,
                       const TrainOutput& output) {
  config.validate();
  params.validate();
  if (train_corpus.empty()) throw DataError("training corpus is empty");
  if (valid_corpus.empty()) throw DataError("validation corpus is empty");

  OptimizerState opt = OptimizerState::zeros_like(params);
  GradWorkspace workspace;
  const ForwardSpec eval_forward = config.eval_forward();
  TrainResult result;
  result.best_valid_ppl = std::numeric_limits<double>::infinity();

  if (output.directory) std::filesystem::create_directories(*output.directory);

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const auto batches = batchify(train_corpus, config.batch_size, config.seed + epoch);
    double loss_sum = 0.0;
    std::size_t words = 0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const GradientSet g =
          batch_gradients(batches[b], params, config.grad_mode, config.workers, &workspace);
      if (!std::isfinite(g.loss)) throw DivergenceError(epoch, b, "non-finite loss");
      double scale = config.loss_norm == LossNorm::per_word
                         ? 1.0 / static_cast<double>(g.words)
                         : 1.0 / static_cast<double>(batches[b].rows);
      if (config.clip_norm) {
        const double n = g.norm() * scale;
        if (n > *config.clip_norm) scale *= *config.clip_norm / n;
      }
      try {
        adam_step(params, g, opt, config, scale);
      } catch (const NonFiniteError& e) {
        throw DivergenceError(epoch, b, e.what());
      }
      loss_sum += g.loss;
      words += g.words;
    }

    EpochMetrics row;
    row.epoch = epoch;
    row.train_loss = loss_sum / static_cast<double>(words);
    row.valid_ppl = perplexity(valid_corpus, params, eval_forward, config.workers);
    if (!std::isfinite(row.valid_ppl)) {
      throw DivergenceError(epoch, batches.size(), "non-finite validation perplexity");
    }
    row.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.metrics.push_back(row);

    if (row.valid_ppl < result.best_valid_ppl) {
      result.best_valid_ppl = row.valid_ppl;
      result.best_epoch = epoch;
      result.best_params = params;
    }

    if (output.directory) {
      const auto& dir = *output.directory;
      save_model(dir / ("epoch" + std::to_string(epoch) + ".model"), params);
      save_optimizer(dir / ("epoch" + std::to_string(epoch) + ".opt"), opt);
      if (result.best_epoch == epoch) save_model(dir / "best.model", params);
      write_metrics(dir / "metrics.csv", result.metrics);
    }
    if (output.on_epoch) output.on_epoch(row);
  }
  result.final_params = std::move(params);
  return result;
}

}  // namespace fixpoint
