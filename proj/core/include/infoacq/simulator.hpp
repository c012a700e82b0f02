#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "infoacq/full_value.hpp"
#include "infoacq/hjb.hpp"
#include "infoacq/model.hpp"

namespace infoacq {

enum class Mu0Mode { SampleFromPrior, Fixed };

struct SimConfig {
  double dt = 1e-3;
  double horizon = 15.0;
  std::size_t n_paths = 10000;
  std::uint64_t master_seed = 42;
  double x0 = 1.0;
  double m0 = 0.0;
  double gamma0 = 0.5;
  Mu0Mode mu0_mode = Mu0Mode::SampleFromPrior;
  double mu0_value = 0.0;
  // Each step's Brownian increment is the sum of this many finer draws, so a run
  // at dt with k substeps sees the same paths as a run at dt/k with one.
  int noise_substeps = 1;
  // 0 uses every hardware thread.
  unsigned threads = 0;

  std::size_t steps() const;
  void validate(const Model& model) const;
};

enum class PolicyKind { Optimal, NoAcquisition, FullObservation, ConstantRate };

struct Policy {
  PolicyKind kind = PolicyKind::Optimal;
  double rate = 0.0;           // ConstantRate only
  double control_offset = 0.0;  // added to U*; leaves the variance untouched

  static Policy optimal() { return {PolicyKind::Optimal}; }
  static Policy no_acquisition() { return {PolicyKind::NoAcquisition}; }
  static Policy full_observation() { return {PolicyKind::FullObservation}; }
  static Policy constant_rate(double h) { return {PolicyKind::ConstantRate, h}; }
  std::string label() const;
};

// Solved objects a policy needs. The table is required by the optimal policy only.
struct PolicyArtifacts {
  const Model* model = nullptr;
  const ValueTable* table = nullptr;

  explicit PolicyArtifacts(const Model& m) : model(&m) {}
  explicit PolicyArtifacts(const ValueTable& t) : model(&t.model), table(&t) {}
};

struct PathRecord {
  std::vector<double> t, X, mu, m, gamma, u, h;
  // Increments over [t_k, t_k + dt); the last entry of each is 0.
  std::vector<double> dI1, dI2, dX, dY;
  std::vector<double> running_cost;  // discounted cost accumulated up to t_k
  void write_csv(std::ostream& os) const;  // t,X,mu,m,gamma,u,h
};

PathRecord simulate_path(const SimConfig& config, const Policy& policy, const PolicyArtifacts& artifacts,
                         std::uint64_t path_index);

struct KalmanSequence {
  std::vector<double> m;
  std::vector<double> gamma;
};

// Exact Kalman filter of the Euler-discretised model. dX and dY are the per-step
// observation increments, u and h the controls held over each step.
KalmanSequence discrete_kalman_oracle(const std::vector<double>& dX, const std::vector<double>& dY,
                                      const std::vector<double>& u, const std::vector<double>& h,
                                      const SimConfig& config, const Model& model);

struct FilterDeviation {
  double max_mean = 0;      // max_k |m_k - m_k^KF|
  double max_variance = 0;  // max_k |gamma_k - P_k|
};
FilterDeviation filter_deviation(const SimConfig& config, const Policy& policy, const PolicyArtifacts& artifacts,
                                 std::uint64_t path_index);

struct MCEstimate {
  std::string policy;
  double mean = 0;
  double std_error = 0;
  std::size_t n_paths = 0;
  double truncation_bound = 0;
  std::size_t n_failed = 0;
  std::vector<double> per_path;  // discounted cost of each successful path, by index
};

MCEstimate mc_cost(const SimConfig& config, const Policy& policy, const PolicyArtifacts& artifacts);

// Exact expected cost of the policy from the configured initial data.
double policy_oracle(const SimConfig& config, const Policy& policy, const FullValueModel& fv);

struct PolicyComparison {
  MCEstimate full, optimal, no_acquisition;
  double full_vs_optimal_gap = 0;      // optimal - full
  double optimal_vs_no_gap = 0;        // no_acquisition - optimal
  double full_vs_optimal_tol = 0;      // 3 pooled standard errors
  double optimal_vs_no_tol = 0;
  bool ordering_holds = false;
};

// Three policies on common random numbers. Throws OrderingViolation when enforce is set.
PolicyComparison compare_policies(const SimConfig& config, const ValueTable& table, bool enforce = true);

struct InnovationStatistics {
  std::size_t samples = 0;  // per channel
  double mean1 = 0, var1 = 0, mean2 = 0, var2 = 0;  // of increments divided by sqrt(dt)
  double mean_bound = 0;  // 4 / sqrt(samples)
  bool passes() const;
};
InnovationStatistics innovation_statistics(const SimConfig& config, const Policy& policy,
                                           const PolicyArtifacts& artifacts);

struct FilterBiasPoint {
  double t = 0;
  double mean_error = 0;     // mean of mu - m
  double error_se = 0;
  double mean_sq_error = 0;  // mean of (mu - m)^2
  double gamma = 0;
};
std::vector<FilterBiasPoint> filter_bias(const SimConfig& config, const Policy& policy,
                                         const PolicyArtifacts& artifacts, const std::vector<double>& times);

// Pairwise (cascade) summation; result independent of thread count.
double pairwise_sum(const double* x, std::size_t n);

}  // namespace infoacq
