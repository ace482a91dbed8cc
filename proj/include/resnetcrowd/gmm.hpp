#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace resnetcrowd {

class GmmError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using FeatureMatrix = std::vector<std::vector<double>>;

/// Mixture of axis-aligned Gaussians.
struct GaussianMixture {
  std::vector<double> weights;
  FeatureMatrix means;
  FeatureMatrix variances;

  std::size_t components() const { return weights.size(); }
  std::size_t dim() const { return means.empty() ? 0 : means.front().size(); }
  double log_density(std::span<const double> x) const;
};

struct GmmOptions {
  std::size_t components = 2;
  std::uint64_t seed = 0;
  /// Stop once the mean per-sample log-likelihood improves by less than this.
  double tolerance = 1e-6;
  std::size_t max_iterations = 200;
  double variance_floor = 1e-6;
  /// Restarts allowed after a component loses all responsibility.
  std::size_t max_reseeds = 10;
};

struct GmmFit {
  GaussianMixture model;
  /// Mean per-sample log-likelihood after seeding and after every EM step
  /// of the successful attempt.
  std::vector<double> log_likelihood;
  std::size_t iterations = 0;
  bool converged = false;
  std::size_t reseeds = 0;
};

/// EM with k-means++ seeding. A component that collapses to no
/// responsibility triggers a restart from a fresh seeding; running out of
/// restarts throws GmmError, as does a likelihood decrease beyond rounding.
GmmFit fit_gmm(const FeatureMatrix& data, const GmmOptions& options = {});

}  // namespace resnetcrowd
