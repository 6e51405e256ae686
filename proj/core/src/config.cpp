#include "cnce/config.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <sstream>

namespace cnce {

namespace {

struct KeyDefault {
  const char* key;
  const char* value;
};

// Registered keys. Namespaces follow the library modules.
constexpr KeyDefault kDefaults[] = {
    // Seeds and parallel runs.
    {"run.seed", "0"},
    {"run.seeds", "5"},

    // Correlated-Gaussian benchmark and its critic.
    {"toy.sigma_z", "1,-0.5,-0.5,1"},
    {"toy.sigma_eps", "1,0.9,0.9,1"},
    {"toy.n", "2000"},
    {"toy.eval_n", "2000"},
    {"toy.hidden", "10"},
    {"toy.layers", "5"},
    {"toy.out_dim", "10"},
    {"toy.tau", "1"},
    {"toy.epochs", "100"},
    {"toy.batch", "128"},
    {"toy.train_k", "100"},
    {"toy.k", "100"},
    {"toy.omegas", "0.10,0.25,0.50,0.75,0.90,0.95"},
    {"opt.toy_lr", "0.03"},

    // Bias/variance study.
    {"biasvar.omega_lower", "0.5"},
    {"biasvar.omega_upper", "1"},
    {"biasvar.trials", "10000"},
    {"biasvar.anchors", "64"},

    // Unrestricted-q counterexample.
    {"counter.fractions", "1,0.5,0.2,0.05"},

    // Synthetic instance-discrimination data.
    {"data.classes", "8"},
    {"data.per_class", "100"},
    {"data.dim", "16"},
    {"data.class_scale", "1"},
    {"data.noise_scale", "0.26"},
    {"data.train_fraction", "0.8"},

    // Views.
    {"aug.noise", "0.2"},
    {"aug.jitter_lo", "0.8"},
    {"aug.jitter_hi", "1.2"},
    {"aug.dropout", "0.1"},

    // Encoder and training.
    {"model.hidden", "64"},
    {"model.out_dim", "16"},
    {"train.method", "ir"},
    {"train.k", "64"},
    {"train.tau", "0.1"},
    {"train.epochs", "100"},
    {"train.batch", "32"},
    {"train.eval_every", "10"},
    {"opt.kind", "sgd"},
    {"opt.lr", "0.1"},
    {"opt.momentum", "0.9"},
    {"opt.weight_decay", "0.0001"},
    {"moco.m", "0.99"},
    {"moco.queue", "256"},
    {"kmeans.k", "8"},
    {"kmeans.iters", "20"},

    // Ring thresholds and annealing of the lower one.
    {"ring.omega_upper", "0.8"},
    {"schedule.kind", "linear"},
    {"schedule.start", "0"},
    {"schedule.end", "0.5"},
    {"schedule.horizon", "50"},
    {"schedule.steps", ""},
    {"schedule.delta", "0.05"},
    {"schedule.min", "0"},
    {"schedule.max", "0.5"},

    // Method grid for `instdisc`.
    {"instdisc.variants", "ir,ir-ring,ir-ring-noanneal"},

    // Hardness phase study.
    {"phase.branch_epochs", "0,25,50,75"},
    {"phase.omegas", "0,0.5,0.75,0.9"},
    {"phase.ring", "ball"},
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

double parse_real(const std::string& key, const std::string& s) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE)
    throw ConfigError(key, "config key '" + key + "': expected a number, got '" + s + "'");
  return v;
}

std::uint64_t parse_u64(const std::string& key, const std::string& s) {
  errno = 0;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  if (s.empty() || s[0] == '-' || end != s.c_str() + s.size() || errno == ERANGE)
    throw ConfigError(key, "config key '" + key + "': expected a nonnegative integer, got '" + s + "'");
  return v;
}

}  // namespace

ExperimentConfig ExperimentConfig::defaults() {
  ExperimentConfig c;
  for (const auto& kd : kDefaults) c.values_[kd.key] = kd.value;
  return c;
}

ExperimentConfig ExperimentConfig::parse(std::istream& in) {
  ExperimentConfig c = defaults();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("", "config line " + std::to_string(lineno) + ": expected 'key = value'");
    c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config file '" + path + "'");
  return parse(in);
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError(key, "unknown config key '" + key + "'");
  it->second = value;
}

const std::string& ExperimentConfig::text(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError(key, "unknown config key '" + key + "'");
  return it->second;
}

double ExperimentConfig::real(const std::string& key) const { return parse_real(key, text(key)); }

std::size_t ExperimentConfig::count(const std::string& key) const {
  return static_cast<std::size_t>(parse_u64(key, text(key)));
}

std::uint64_t ExperimentConfig::u64(const std::string& key) const { return parse_u64(key, text(key)); }

std::vector<double> ExperimentConfig::reals(const std::string& key) const {
  std::vector<double> out;
  for (const auto& s : split_list(text(key))) out.push_back(parse_real(key, s));
  return out;
}

std::vector<std::size_t> ExperimentConfig::counts(const std::string& key) const {
  std::vector<std::size_t> out;
  for (const auto& s : split_list(text(key))) out.push_back(static_cast<std::size_t>(parse_u64(key, s)));
  return out;
}

std::vector<std::string> ExperimentConfig::texts(const std::string& key) const { return split_list(text(key)); }

std::string ExperimentConfig::resolved() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

std::string ExperimentConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : resolved()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace cnce
