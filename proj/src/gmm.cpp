#include "resnetcrowd/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

namespace resnetcrowd {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // ln(2*pi)

double log_sum_exp(std::span<const double> v) {
  const double peak = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(peak)) return peak;
  double s = 0.0;
  for (double x : v) s += std::exp(x - peak);
  return peak + std::log(s);
}

double component_log_pdf(const GaussianMixture& g, std::size_t k, std::span<const double> x) {
  double acc = 0.0;
  const auto& mu = g.means[k];
  const auto& var = g.variances[k];
  for (std::size_t d = 0; d < x.size(); ++d) {
    const double diff = x[d] - mu[d];
    acc += kLog2Pi + std::log(var[d]) + diff * diff / var[d];
  }
  return -0.5 * acc;
}

GaussianMixture seed_mixture(const FeatureMatrix& data, const GmmOptions& opt, std::mt19937_64& rng) {
  const std::size_t n = data.size(), dim = data.front().size(), k = opt.components;
  std::vector<double> mean(dim, 0.0), var(dim, 0.0);
  for (const auto& x : data) {
    for (std::size_t d = 0; d < dim; ++d) mean[d] += x[d];
  }
  for (auto& m : mean) m /= static_cast<double>(n);
  for (const auto& x : data) {
    for (std::size_t d = 0; d < dim; ++d) var[d] += (x[d] - mean[d]) * (x[d] - mean[d]);
  }
  for (auto& v : var) v = std::max(v / static_cast<double>(n), opt.variance_floor);

  GaussianMixture g;
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::size_t pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  for (std::size_t c = 0; c < k; ++c) {
    g.means.push_back(data[pick]);
    for (std::size_t i = 0; i < n; ++i) {
      double d2 = 0.0;
      for (std::size_t d = 0; d < dim; ++d) d2 += (data[i][d] - data[pick][d]) * (data[i][d] - data[pick][d]);
      nearest[i] = std::min(nearest[i], d2);
    }
    if (c + 1 == k) break;
    double total = 0.0;
    for (double d2 : nearest) total += d2;
    if (total > 0.0) {
      pick = std::discrete_distribution<std::size_t>(nearest.begin(), nearest.end())(rng);
    } else {
      pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);  // all points coincide
    }
  }
  g.variances.assign(k, var);
  g.weights.assign(k, 1.0 / static_cast<double>(k));
  return g;
}

// E-step: responsibilities into `resp` (n x k); returns mean log-likelihood.
double expectation(const GaussianMixture& g, const FeatureMatrix& data, FeatureMatrix& resp) {
  const std::size_t k = g.components();
  std::vector<double> logs(k);
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t c = 0; c < k; ++c) logs[c] = std::log(g.weights[c]) + component_log_pdf(g, c, data[i]);
    const double lse = log_sum_exp(logs);
    total += lse;
    for (std::size_t c = 0; c < k; ++c) resp[i][c] = std::exp(logs[c] - lse);
  }
  return total / static_cast<double>(data.size());
}

// M-step; returns false when a component has no responsibility left.
bool maximisation(GaussianMixture& g, const FeatureMatrix& data, const FeatureMatrix& resp, double floor) {
  const std::size_t n = data.size(), dim = g.dim(), k = g.components();
  for (std::size_t c = 0; c < k; ++c) {
    double nk = 0.0;
    for (std::size_t i = 0; i < n; ++i) nk += resp[i][c];
    if (!(nk > 1e-10 * static_cast<double>(n))) return false;
    std::vector<double> mu(dim, 0.0), var(dim, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t d = 0; d < dim; ++d) mu[d] += resp[i][c] * data[i][d];
    }
    for (auto& m : mu) m /= nk;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t d = 0; d < dim; ++d) var[d] += resp[i][c] * (data[i][d] - mu[d]) * (data[i][d] - mu[d]);
    }
    for (auto& v : var) v = std::max(v / nk, floor);
    g.weights[c] = nk / static_cast<double>(n);
    g.means[c] = std::move(mu);
    g.variances[c] = std::move(var);
  }
  return true;
}

}  // namespace

double GaussianMixture::log_density(std::span<const double> x) const {
  if (x.size() != dim()) throw GmmError("log_density: dimension mismatch");
  std::vector<double> logs(components());
  for (std::size_t c = 0; c < components(); ++c) logs[c] = std::log(weights[c]) + component_log_pdf(*this, c, x);
  return log_sum_exp(logs);
}

GmmFit fit_gmm(const FeatureMatrix& data, const GmmOptions& options) {
  if (options.components == 0) throw GmmError("fit_gmm: need at least one component");
  if (data.size() < 2 * options.components) {
    throw GmmError("fit_gmm: " + std::to_string(data.size()) + " samples for " + std::to_string(options.components) +
                   " components (need at least twice as many)");
  }
  const std::size_t dim = data.front().size();
  if (dim == 0) throw GmmError("fit_gmm: empty feature vectors");
  for (const auto& x : data) {
    if (x.size() != dim) throw GmmError("fit_gmm: ragged feature matrix");
    for (double v : x) {
      if (!std::isfinite(v)) throw GmmError("fit_gmm: non-finite feature");
    }
  }

  std::mt19937_64 rng(options.seed);
  FeatureMatrix resp(data.size(), std::vector<double>(options.components));
  for (std::size_t attempt = 0; attempt <= options.max_reseeds; ++attempt) {
    GmmFit fit;
    fit.reseeds = attempt;
    fit.model = seed_mixture(data, options, rng);
    double ll = expectation(fit.model, data, resp);
    fit.log_likelihood.push_back(ll);
    bool collapsed = false;
    while (fit.iterations < options.max_iterations) {
      if (!maximisation(fit.model, data, resp, options.variance_floor)) {
        collapsed = true;
        break;
      }
      ++fit.iterations;
      const double next = expectation(fit.model, data, resp);
      fit.log_likelihood.push_back(next);
      if (next < ll - 1e-9 * std::max(1.0, std::abs(ll))) {
        throw GmmError("fit_gmm: log-likelihood decreased at iteration " + std::to_string(fit.iterations));
      }
      const bool done = next - ll < options.tolerance;
      ll = next;
      if (done) {
        fit.converged = true;
        break;
      }
    }
    if (!collapsed) return fit;
  }
  throw GmmError("fit_gmm: a component kept collapsing after " + std::to_string(options.max_reseeds) + " re-seeds");
}

}  // namespace resnetcrowd
