#include "fixpoint/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace fixpoint {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError("bad value for " + key + ": '" + value + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true") return true;
  if (value == "0" || value == "false") return false;
  throw ConfigError("bad boolean for " + key + ": '" + value + "'");
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

KeyValueConfig::KeyValueConfig(std::set<std::string> allowed_keys)
    : allowed_(std::move(allowed_keys)) {}

void KeyValueConfig::parse(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    }
    set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
}

void KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  parse(in);
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
  if (!allowed_.contains(key)) throw ConfigError("unknown config key '" + key + "'");
  values_[key] = value;
}

std::optional<std::string> KeyValueConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

void KeyValueConfig::write(std::ostream& out) const {
  for (const auto& [k, v] : values_) out << k << '=' << v << '\n';
}

const std::set<std::string>& train_config_keys() {
  static const std::set<std::string> keys{
      "grad_mode", "rho",        "batch_size", "epochs",        "learning_rate", "beta1",
      "beta2",     "epsilon",    "seed",       "hidden",        "init_range",    "clip_norm",
      "loss_norm", "activation", "bias",       "embedding_dim", "workers"};
  return keys;
}

TrainConfig train_config_from(const KeyValueConfig& kv, TrainConfig c) {
  auto str = [&](const char* k) { return kv.get(k); };
  try {
    if (auto v = str("batch_size")) c.batch_size = parse_number<std::size_t>("batch_size", *v);
    if (auto v = str("epochs")) c.epochs = parse_number<std::size_t>("epochs", *v);
    if (auto v = str("learning_rate")) c.learning_rate = parse_number<double>("learning_rate", *v);
    if (auto v = str("beta1")) c.beta1 = parse_number<double>("beta1", *v);
    if (auto v = str("beta2")) c.beta2 = parse_number<double>("beta2", *v);
    if (auto v = str("epsilon")) c.epsilon = parse_number<double>("epsilon", *v);
    if (auto v = str("seed")) c.seed = parse_number<std::uint64_t>("seed", *v);
    if (auto v = str("hidden")) c.hidden = parse_number<std::size_t>("hidden", *v);
    if (auto v = str("init_range")) c.init_range = parse_number<double>("init_range", *v);
    if (auto v = str("clip_norm")) {
      if (*v == "none") {
        c.clip_norm.reset();
      } else {
        c.clip_norm = parse_number<double>("clip_norm", *v);
      }
    }
    if (auto v = str("loss_norm")) c.loss_norm = parse_loss_norm(*v);
    if (auto v = str("activation")) c.activation = parse_activation(*v);
    if (auto v = str("bias")) c.bias = parse_bool("bias", *v);
    if (auto v = str("embedding_dim")) c.embedding_dim = parse_number<std::size_t>("embedding_dim", *v);
    if (auto v = str("workers")) c.workers = parse_number<int>("workers", *v);

    std::size_t rho = c.grad_mode.rho;
    if (auto v = str("rho")) rho = parse_number<std::size_t>("rho", *v);
    const std::string mode = str("grad_mode").value_or(c.grad_mode.name());
    c.grad_mode = GradMode::parse(mode, rho);
    if (!c.grad_mode.is_fpi()) c.grad_mode.rho = rho;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

KeyValueConfig to_key_values(const TrainConfig& c) {
  KeyValueConfig kv(train_config_keys());
  kv.set("grad_mode", c.grad_mode.name());
  kv.set("rho", std::to_string(c.grad_mode.rho));
  kv.set("batch_size", std::to_string(c.batch_size));
  kv.set("epochs", std::to_string(c.epochs));
  kv.set("learning_rate", format_double(c.learning_rate));
  kv.set("beta1", format_double(c.beta1));
  kv.set("beta2", format_double(c.beta2));
  kv.set("epsilon", format_double(c.epsilon));
  kv.set("seed", std::to_string(c.seed));
  kv.set("hidden", std::to_string(c.hidden));
  kv.set("init_range", format_double(c.init_range));
  kv.set("clip_norm", c.clip_norm ? format_double(*c.clip_norm) : "none");
  kv.set("loss_norm", std::string(to_string(c.loss_norm)));
  kv.set("activation", std::string(to_string(c.activation)));
  kv.set("bias", c.bias ? "1" : "0");
  kv.set("embedding_dim", std::to_string(c.embedding_dim));
  kv.set("workers", std::to_string(c.workers));
  return kv;
}

}  // namespace fixpoint
