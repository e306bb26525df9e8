// fixpoint: build-vocab | train | eval | sweep-rho | bench
//
// exit codes: 0 ok, 1 internal / bench gate failure, 2 usage, 3 data, 4 divergence

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fixpoint/config.hpp"
#include "fixpoint/corpus.hpp"
#include "fixpoint/elman.hpp"
#include "fixpoint/eval_bench.hpp"
#include "fixpoint/perplexity.hpp"
#include "fixpoint/trainer.hpp"

namespace fs = std::filesystem;
using namespace fixpoint;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitDivergence = 4;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Paths that may also appear in a config file next to the training keys.
const std::set<std::string>& cli_keys() {
  static const std::set<std::string> keys = [] {
    std::set<std::string> k = train_config_keys();
    k.insert({"vocab", "train", "valid", "test", "out"});
    return k;
  }();
  return keys;
}

// Flag overrides shared by train and sweep-rho. Each maps onto one config key.
struct Overrides {
  std::string config_file;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> grad_mode;
  std::optional<std::size_t> rho, hidden, epochs, batch_size, embedding_dim;
  std::optional<double> lr, init_range, clip_norm;
  std::optional<std::string> activation, loss_norm;
  bool bias = false;

  void add_to(CLI::App* app, bool with_grad_mode) {
    app->add_option("--config", config_file, "key=value config file")->check(CLI::ExistingFile);
    app->add_option("--seed", seed, "random seed");
    app->add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);
    if (with_grad_mode) {
      app->add_option("--grad-mode", grad_mode, "bptt | fpi | fpi-detach")
          ->check(CLI::IsMember({"bptt", "fpi", "fpi-detach"}));
      app->add_option("--rho", rho, "fixed-point iterations");
    }
    app->add_option("--hidden", hidden, "hidden units");
    app->add_option("--epochs", epochs);
    app->add_option("--batch-size", batch_size);
    app->add_option("--lr", lr, "Adam learning rate");
    app->add_option("--init-range", init_range);
    app->add_option("--clip-norm", clip_norm, "max gradient norm (off by default)");
    app->add_option("--activation", activation)->check(CLI::IsMember({"tanh", "sigmoid"}));
    app->add_option("--loss-norm", loss_norm)
        ->check(CLI::IsMember({"per_word", "per_sequence"}));
    app->add_option("--embedding-dim", embedding_dim, "0 = one-hot inputs");
    app->add_flag("--bias", bias, "add hidden and output biases");
  }

  KeyValueConfig resolve() const {
    KeyValueConfig kv(cli_keys());
    if (!config_file.empty()) kv.load(config_file);
    auto put = [&](const char* key, const auto& v) {
      if (v) {
        std::ostringstream os;
        os.precision(17);
        os << *v;
        kv.set(key, os.str());
      }
    };
    put("seed", seed);
    put("workers", workers);
    put("grad_mode", grad_mode);
    put("rho", rho);
    put("hidden", hidden);
    put("epochs", epochs);
    put("batch_size", batch_size);
    put("embedding_dim", embedding_dim);
    put("learning_rate", lr);
    put("init_range", init_range);
    put("clip_norm", clip_norm);
    put("activation", activation);
    put("loss_norm", loss_norm);
    if (bias) kv.set("bias", "1");
    return kv;
  }
};

std::string path_value(const KeyValueConfig& kv, const std::string& flag, const char* key) {
  if (!flag.empty()) return flag;
  return kv.get(key).value_or("");
}

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw UsageError(std::string("missing ") + what + " path");
  if (!fs::is_regular_file(path)) throw DataError(std::string(what) + " not found: " + path);
}

EncodedCorpus load_corpus(const Vocabulary& vocab, const std::string& path) {
  return encode(vocab, read_sentences(fs::path(path)));
}

void echo_config(const fs::path& out_dir, const TrainConfig& config,
                 const std::vector<std::pair<std::string, std::string>>& paths) {
  KeyValueConfig kv = to_key_values(config);
  KeyValueConfig all(cli_keys());
  for (const auto& [k, v] : kv.values()) all.set(k, v);
  for (const auto& [k, v] : paths) all.set(k, v);
  write_file_atomic(out_dir / "config.txt", [&](std::ostream& out) { all.write(out); });
}

std::vector<std::size_t> parse_size_list(const std::string& text, const char* what) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw UsageError(std::string("bad ") + what + " list: '" + text + "'");
    }
  }
  if (out.empty()) throw UsageError(std::string("empty ") + what + " list");
  return out;
}

// ---- build-vocab ----

struct BuildVocabArgs {
  std::string train;
  std::string out;
  std::size_t min_count = 1;
};

int cmd_build_vocab(const BuildVocabArgs& a) {
  require_file(a.train, "training text");
  const Sentences text = read_sentences(fs::path(a.train));
  const Vocabulary vocab = build_vocab(text, a.min_count);
  const EncodedCorpus enc = encode(vocab, text);
  if (!fs::path(a.out).parent_path().empty()) fs::create_directories(fs::path(a.out).parent_path());
  write_file_atomic(a.out, [&](std::ostream& out) { vocab.save(out); });
  std::cout << "vocab size " << vocab.size() << '\n';
  std::cout << "training tokens " << enc.word_count << " (including <eos>)\n";
  return kExitOk;
}

// ---- train ----

struct TrainArgs {
  Overrides overrides;
  std::string vocab, train, valid, out;
};

int cmd_train(const TrainArgs& a) {
  const KeyValueConfig kv = a.overrides.resolve();
  const TrainConfig config = train_config_from(kv);
  const std::string vocab_path = path_value(kv, a.vocab, "vocab");
  const std::string train_path = path_value(kv, a.train, "train");
  const std::string valid_path = path_value(kv, a.valid, "valid");
  const std::string out_dir = path_value(kv, a.out, "out");
  require_file(vocab_path, "vocabulary");
  require_file(train_path, "training text");
  require_file(valid_path, "validation text");
  if (out_dir.empty()) throw UsageError("missing --out directory");

  const Vocabulary vocab = Vocabulary::load(fs::path(vocab_path));
  const EncodedCorpus train_corpus = load_corpus(vocab, train_path);
  const EncodedCorpus valid_corpus = load_corpus(vocab, valid_path);
  if (train_corpus.empty()) throw DataError("training corpus is empty");
  if (valid_corpus.empty()) throw DataError("validation corpus is empty");

  fs::create_directories(out_dir);
  echo_config(out_dir, config,
              {{"vocab", vocab_path}, {"train", train_path}, {"valid", valid_path}, {"out", out_dir}});

  TrainOutput output;
  output.directory = fs::path(out_dir);
  output.on_epoch = [](const EpochMetrics& m) {
    std::cout << "epoch " << m.epoch << "  train " << std::fixed << std::setprecision(4)
              << m.train_loss << " nats/word  valid ppl " << std::setprecision(2) << m.valid_ppl
              << "  (" << std::setprecision(1) << m.seconds << "s)\n"
              << std::defaultfloat;
  };
  const TrainResult r = train(config, train_corpus, valid_corpus, output);
  std::cout << "best epoch " << r.best_epoch << " valid ppl " << std::fixed << std::setprecision(2)
            << r.best_valid_ppl << '\n';
  return kExitOk;
}

// ---- eval ----

struct EvalArgs {
  std::string model, vocab, test, out;
  std::string forward = "sequential";
  int workers = 1;
};

int cmd_eval(const EvalArgs& a) {
  ForwardSpec forward;
  try {
    forward = ForwardSpec::parse(a.forward);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  require_file(a.model, "model");
  require_file(a.vocab, "vocabulary");
  require_file(a.test, "test text");
  const Vocabulary vocab = Vocabulary::load(fs::path(a.vocab));
  const ModelParams params = load_model(fs::path(a.model));
  if (params.vocab() != vocab.size()) {
    throw DataError("model vocabulary size " + std::to_string(params.vocab()) +
                    " does not match vocabulary file size " + std::to_string(vocab.size()));
  }
  const EncodedCorpus test = load_corpus(vocab, a.test);
  const NllResult nll = corpus_nll(test, params, forward, a.workers);
  if (nll.words == 0) throw DataError("test corpus is empty");
  const double ppl = std::exp(nll.nll / static_cast<double>(nll.words));

  std::ostringstream line;
  line << forward.to_string() << ',' << nll.words << ',' << std::fixed << std::setprecision(2) << ppl;
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    write_file_atomic(fs::path(a.out) / "eval.csv", [&](std::ostream& out) {
      out << "forward,words,ppl\n" << line.str() << '\n';
    });
  }
  std::cout << "ppl " << std::fixed << std::setprecision(2) << ppl << '\n';
  return kExitOk;
}

// ---- sweep-rho ----

struct SweepArgs {
  Overrides overrides;
  std::string vocab, train, valid, test, out;
  std::string rho_list = "1,2,5";
  bool no_reference = false;
};

int cmd_sweep(const SweepArgs& a) {
  const KeyValueConfig kv = a.overrides.resolve();
  const TrainConfig config = train_config_from(kv);
  const std::vector<std::size_t> rhos = parse_size_list(a.rho_list, "rho");
  const std::string vocab_path = path_value(kv, a.vocab, "vocab");
  const std::string train_path = path_value(kv, a.train, "train");
  const std::string valid_path = path_value(kv, a.valid, "valid");
  const std::string test_path = path_value(kv, a.test, "test");
  const std::string out_dir = path_value(kv, a.out, "out");
  require_file(vocab_path, "vocabulary");
  require_file(train_path, "training text");
  require_file(valid_path, "validation text");
  require_file(test_path, "test text");
  if (out_dir.empty()) throw UsageError("missing --out directory");

  const Vocabulary vocab = Vocabulary::load(fs::path(vocab_path));
  const EncodedCorpus train_corpus = load_corpus(vocab, train_path);
  const EncodedCorpus valid_corpus = load_corpus(vocab, valid_path);
  const EncodedCorpus test_corpus = load_corpus(vocab, test_path);
  if (train_corpus.empty() || valid_corpus.empty() || test_corpus.empty()) {
    throw DataError("train, valid and test corpora must be non-empty");
  }

  fs::create_directories(out_dir);
  echo_config(out_dir, config,
              {{"vocab", vocab_path},
               {"train", train_path},
               {"valid", valid_path},
               {"test", test_path},
               {"out", out_dir}});

  SweepResult result;
  try {
    result = sweep_rho(config, rhos, train_corpus, valid_corpus, test_corpus, !a.no_reference,
                       [](const SweepRow& r) {
                         std::cout << "rho " << r.rho << (r.detach ? " detach" : "       ")
                                   << "  test ppl " << std::fixed << std::setprecision(2)
                                   << r.test_ppl << "  (" << std::setprecision(1) << r.seconds
                                   << "s)" << (r.failed ? "  FAILED: " + r.error : "") << '\n'
                                   << std::defaultfloat;
                       });
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (result.bptt_ppl) {
    std::cout << "bptt reference test ppl " << std::fixed << std::setprecision(2)
              << *result.bptt_ppl << '\n';
  }
  write_sweep_csv(out_dir, result);
  return kExitOk;
}

// ---- bench ----

struct BenchArgs {
  std::string out;
  std::string t_list = "256";
  std::string rho_list = "1,2,4,8";
  std::string worker_list = "1,2,4";
  std::size_t hidden = 100;
  std::size_t vocab = 1000;
  std::size_t trials = 5;
  std::uint64_t seed = 7;
  bool inject_fault = false;
};

int cmd_bench(const BenchArgs& a) {
  if (a.out.empty()) throw UsageError("missing --out directory");
  BenchConfig bc;
  bc.hidden = a.hidden;
  bc.vocab = a.vocab;
  bc.trials = a.trials;
  bc.seed = a.seed;
  bc.inject_fault = a.inject_fault;
  bc.lengths = parse_size_list(a.t_list, "T");
  bc.rhos = parse_size_list(a.rho_list, "rho");
  bc.workers.clear();
  for (std::size_t w : parse_size_list(a.worker_list, "worker")) bc.workers.push_back(static_cast<int>(w));
  if (bc.trials < 3) throw UsageError("--trials must be >= 3");

  BenchResult result;
  try {
    result = bench_forward(bc);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  write_bench_csv(a.out, result);
  for (const auto& s : result.sequential) {
    std::cout << "T=" << s.length << " sequential " << std::scientific << std::setprecision(3)
              << s.median_seconds << "s\n";
  }
  for (const auto& r : result.rows) {
    std::cout << "T=" << r.length << " rho=" << r.rho << " workers=" << r.workers << "  "
              << std::scientific << std::setprecision(3) << r.median_seconds << "s  speedup "
              << std::fixed << std::setprecision(2) << r.speedup << '\n';
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Elman RNN language models: sequential and fixed-point-iteration training"};
  app.require_subcommand(1);

  BuildVocabArgs vocab_args;
  auto* build_vocab_cmd = app.add_subcommand("build-vocab", "build a vocabulary from training text");
  build_vocab_cmd->add_option("--train", vocab_args.train, "training text")->required();
  build_vocab_cmd->add_option("--out", vocab_args.out, "vocabulary file to write")->required();
  build_vocab_cmd->add_option("--min-count", vocab_args.min_count, "rarer tokens map to <unk>")
      ->check(CLI::PositiveNumber);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "train a model");
  train_args.overrides.add_to(train_cmd, true);
  train_cmd->add_option("--vocab", train_args.vocab);
  train_cmd->add_option("--train", train_args.train);
  train_cmd->add_option("--valid", train_args.valid);
  train_cmd->add_option("--out", train_args.out, "output directory");

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "perplexity of a model on a text file");
  eval_cmd->add_option("--model", eval_args.model)->required();
  eval_cmd->add_option("--vocab", eval_args.vocab)->required();
  eval_cmd->add_option("--test", eval_args.test)->required();
  eval_cmd->add_option("--forward", eval_args.forward, "sequential | fpi:<rho>");
  eval_cmd->add_option("--workers", eval_args.workers)->check(CLI::PositiveNumber);
  eval_cmd->add_option("--out", eval_args.out, "directory for eval.csv");

  SweepArgs sweep_args;
  auto* sweep_cmd = app.add_subcommand("sweep-rho", "train fpi and fpi-detach models over rho");
  sweep_args.overrides.add_to(sweep_cmd, false);
  sweep_cmd->add_option("--vocab", sweep_args.vocab);
  sweep_cmd->add_option("--train", sweep_args.train);
  sweep_cmd->add_option("--valid", sweep_args.valid);
  sweep_cmd->add_option("--test", sweep_args.test);
  sweep_cmd->add_option("--out", sweep_args.out, "output directory");
  sweep_cmd->add_option("--rho-list", sweep_args.rho_list, "comma separated, increasing");
  sweep_cmd->add_flag("--no-bptt-reference", sweep_args.no_reference);

  BenchArgs bench_args;
  auto* bench_cmd = app.add_subcommand("bench", "time sequential vs fixed-point forward passes");
  bench_cmd->add_option("--out", bench_args.out, "output directory")->required();
  bench_cmd->add_option("--T-list", bench_args.t_list);
  bench_cmd->add_option("--rho-list", bench_args.rho_list);
  bench_cmd->add_option("--worker-list,--workers", bench_args.worker_list);
  bench_cmd->add_option("--hidden", bench_args.hidden);
  bench_cmd->add_option("--vocab-size", bench_args.vocab);
  bench_cmd->add_option("--trials", bench_args.trials);
  bench_cmd->add_option("--seed", bench_args.seed);
  bench_cmd->add_flag("--inject-fault", bench_args.inject_fault)->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (build_vocab_cmd->parsed()) return cmd_build_vocab(vocab_args);
    if (train_cmd->parsed()) return cmd_train(train_args);
    if (eval_cmd->parsed()) return cmd_eval(eval_args);
    if (sweep_cmd->parsed()) return cmd_sweep(sweep_args);
    if (bench_cmd->parsed()) return cmd_bench(bench_args);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const ShapeError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const EquivalenceGateError& e) {
    std::cerr << "equivalence gate failed: " << e.what() << '\n';
    return kExitInternal;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInternal;
  }
  return kExitUsage;
}
