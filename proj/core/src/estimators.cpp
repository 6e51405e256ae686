#include "cnce/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace cnce {

double nce_term(double pos_sim, std::span<const double> neg_sims) {
  if (neg_sims.empty()) throw std::invalid_argument("nce_term: need at least one negative");
  std::vector<double> all;
  all.reserve(neg_sims.size() + 1);
  all.push_back(pos_sim);
  all.insert(all.end(), neg_sims.begin(), neg_sims.end());
  return pos_sim - logsumexp(all) + std::log(static_cast<double>(all.size()));
}

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void check_square(const Matrix& sims, std::size_t k) {
  if (sims.rows != sims.cols || sims.rows < 2) throw std::invalid_argument("estimator: need a square n x n matrix, n >= 2");
  if (k == 0 || k >= sims.rows) throw std::invalid_argument("estimator: need 1 <= k < n");
}

// Mean NCE term over all anchors; negatives for anchor i come from
// support(i), a sorted candidate slice.
template <class SupportFn>
double conditional_mean(const Matrix& sims, std::size_t k, Rng& rng, SupportFn&& support) {
  const std::size_t n = sims.rows;
  std::vector<double> negs(k);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = sims.row(i);
    const std::vector<std::size_t> s = support(row, i);
    const auto picks = sample_negatives(s, k, rng);
    for (std::size_t j = 0; j < k; ++j) negs[j] = row[picks[j]];
    total += nce_term(row[i], negs);
  }
  return total / static_cast<double>(n);
}

EstimateRecord single(std::string name, double value, std::size_t k, std::optional<RingSpec> omega) {
  EstimateRecord r;
  r.estimator = std::move(name);
  r.mean = value;
  r.std = 0.0;
  r.per_seed = {value};
  r.k = k;
  r.term_count = k + 1;
  r.omega = omega;
  return r;
}

}  // namespace

nlohmann::json EstimateRecord::to_json() const {
  nlohmann::json j{{"estimator", estimator}, {"mean", mean},     {"std", std},
                   {"per_seed", per_seed},   {"k", k},           {"term_count", term_count},
                   {"convention", "mean over positive and k negatives"}};
  if (omega) j["omega"] = {{"lower", omega->lower}, {"upper", omega->upper}};
  else j["omega"] = nullptr;
  return j;
}

std::string EstimateRecord::csv_header() { return "estimator,omega_lower,omega_upper,mean,stdev,seeds,k,term_count"; }

std::string EstimateRecord::csv_row() const {
  std::string row = estimator + ",";
  row += omega ? fmt17(omega->lower) + "," + fmt17(omega->upper) : std::string(",");
  row += "," + fmt17(mean) + "," + (per_seed.size() > 1 ? fmt17(std) : std::string("n/a"));
  row += "," + std::to_string(per_seed.size()) + "," + std::to_string(k) + "," + std::to_string(term_count);
  return row;
}

EstimateRecord combine_seeds(std::span<const EstimateRecord> records) {
  if (records.empty()) throw std::invalid_argument("combine_seeds: no records");
  EstimateRecord out = records.front();
  out.per_seed.clear();
  for (const auto& r : records) {
    if (r.estimator != out.estimator || r.k != out.k || r.omega != out.omega)
      throw std::invalid_argument("combine_seeds: records describe different configurations");
    out.per_seed.insert(out.per_seed.end(), r.per_seed.begin(), r.per_seed.end());
  }
  const auto ms = mean_std(out.per_seed);
  out.mean = ms.mean;
  out.std = ms.std;
  return out;
}

EstimateRecord nce_estimate(const Matrix& sims, std::size_t k, Rng& rng) {
  check_square(sims, k);
  const double v = conditional_mean(sims, k, rng, [](std::span<const double> row, std::size_t i) {
    return sort_by_similarity(row, i);
  });
  return single("nce", v, k, std::nullopt);
}

EstimateRecord cnce_estimate(const Matrix& sims, std::size_t k, const RingSpec& spec, Rng& rng) {
  check_square(sims, k);
  spec.validate();
  const double v = conditional_mean(sims, k, rng, [&](std::span<const double> row, std::size_t i) {
    return ring_select(row, spec, i);
  });
  return single("cnce", v, k, spec);
}

EstimateRecord adversarial_estimate(const Matrix& sims, std::size_t k, double epsilon_fraction, Rng& rng) {
  check_square(sims, k);
  if (!(epsilon_fraction > 0.0 && epsilon_fraction <= 1.0))
    throw std::invalid_argument("adversarial_estimate: epsilon_fraction must lie in (0, 1]");
  const double v = conditional_mean(sims, k, rng, [&](std::span<const double> row, std::size_t i) {
    return ring_select(row, RingSpec{0.0, epsilon_fraction}, i);
  });
  return single("adversarial", v, k, RingSpec{0.0, epsilon_fraction});
}

EstimateRecord nce_estimate(const PairDataset& data, const PairCritic& critic, std::size_t k, Rng& rng) {
  return nce_estimate(critic.similarity_matrix(data), k, rng);
}

EstimateRecord cnce_estimate(const PairDataset& data, const PairCritic& critic, std::size_t k, const RingSpec& spec,
                             Rng& rng) {
  return cnce_estimate(critic.similarity_matrix(data), k, spec, rng);
}

EstimateRecord adversarial_estimate(const PairDataset& data, const PairCritic& critic, std::size_t k,
                                    double epsilon_fraction, Rng& rng) {
  return adversarial_estimate(critic.similarity_matrix(data), k, epsilon_fraction, rng);
}

double la_objective(std::span<const double> anchor, const Matrix& bank, std::span<const std::size_t> close_set,
                    std::span<const std::size_t> background_set, double tau) {
  if (close_set.empty() || background_set.empty())
    throw std::invalid_argument("la_objective: close and background sets must be nonempty");
  std::vector<double> c, b;
  for (std::size_t j : close_set) c.push_back(similarity(anchor, bank.row(j), tau));
  for (std::size_t j : background_set) b.push_back(similarity(anchor, bank.row(j), tau));
  return logmeanexp(c) - logmeanexp(b);
}

namespace {

SupportStats summarize(std::string name, const std::vector<double>& z, double true_mi) {
  SupportStats s;
  s.support = std::move(name);
  s.trials = z.size();
  const auto ms = mean_std(z);
  s.mean = ms.mean;
  s.bias = ms.mean - true_mi;
  s.variance = ms.std * ms.std;
  const auto t = static_cast<double>(z.size());
  s.bias_se = std::sqrt(s.variance / t);
  s.variance_se = s.variance * std::sqrt(2.0 / (t - 1.0));
  return s;
}

}  // namespace

BiasVarianceReport bias_variance(const Matrix& sims, std::size_t k, const RingSpec& spec, std::size_t trials,
                                 std::size_t anchors, double true_mi, Rng& rng) {
  check_square(sims, k);
  spec.validate();
  if (trials < 100) throw std::invalid_argument("bias_variance: need at least 100 trials");
  if (anchors == 0 || anchors > sims.rows) throw std::invalid_argument("bias_variance: anchor count out of range");

  // sp is the marginal support and sq the ring; sc is what the ring leaves out.
  std::vector<std::vector<std::size_t>> sp(anchors), sq(anchors), sc(anchors);
  bool has_complement = true;
  for (std::size_t i = 0; i < anchors; ++i) {
    const auto row = sims.row(i);
    sp[i] = sort_by_similarity(row, i);
    sq[i] = ring_select(row, spec, i);
    const auto n = static_cast<double>(sp[i].size());
    const auto lo = static_cast<std::size_t>(std::floor(spec.lower * n));
    const auto hi = static_cast<std::size_t>(std::floor(spec.upper * n));
    sc[i].assign(sp[i].begin(), sp[i].begin() + static_cast<std::ptrdiff_t>(lo));
    sc[i].insert(sc[i].end(), sp[i].begin() + static_cast<std::ptrdiff_t>(hi), sp[i].end());
    if (sc[i].empty()) has_complement = false;
  }

  auto run = [&](const std::vector<std::vector<std::size_t>>& supports, std::uint64_t offset) {
    std::vector<double> z(trials);
    std::vector<double> negs(k);
    for (std::size_t t = 0; t < trials; ++t) {
      Rng trial = rng.split(3 * t + offset);
      double total = 0.0;
      for (std::size_t i = 0; i < anchors; ++i) {
        const auto row = sims.row(i);
        const auto& s = supports[i];
        for (std::size_t j = 0; j < k; ++j) negs[j] = row[s[trial.index(s.size())]];
        total += nce_term(row[i], negs);
      }
      z[t] = total / static_cast<double>(anchors);
    }
    return z;
  };

  BiasVarianceReport r;
  r.true_mi = true_mi;
  r.anchors = anchors;
  r.k = k;
  r.spec = spec;
  r.p = summarize("p", run(sp, 0), true_mi);
  r.q = summarize("q", run(sq, 1), true_mi);
  if (has_complement) r.complement = summarize("complement", run(sc, 2), true_mi);
  return r;
}

}  // namespace cnce
