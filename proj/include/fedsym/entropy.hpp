#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedsym {

/// Per-class sample counts for one client (index = class id).
using ClassCounts = std::vector<std::int64_t>;

/// Discrete Gaussian over the class indices 0..classes-1.
struct GaussianSpec {
  double mu = 0.0;
  double sigma = 1.0;
  int classes = 2;
};

struct SolverResult {
  double sigma = 0.0;
  ClassCounts counts;
  double achieved_beta = 0.0;
  int iterations = 0;   // sigma evaluations spent by the Newton/bisection search
  int adjustments = 0;  // samples moved away from the rounded Gaussian counts
};

struct SolverOptions {
  double eps = 1e-3;
  int max_iter = 100;
  int newton_iter = 20;  // Newton steps before falling back to bisection
};

class InvalidDistribution : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The search ran out of iterations; `best` is the closest candidate seen.
class NoConvergence : public std::runtime_error {
 public:
  NoConvergence(const std::string& what, SolverResult best)
      : std::runtime_error(what), best_(std::move(best)) {}
  const SolverResult& best() const noexcept { return best_; }

 private:
  SolverResult best_;
};

/// No integer count vector of the requested total reaches the target balance.
class InfeasibleTarget : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shannon entropy of the count proportions, in bits. Zero counts contribute 0.
double shannon_entropy(std::span<const std::int64_t> counts);

/// Shannon entropy normalised by log2(#classes); 0 = one class, 1 = uniform.
/// Exactly invariant under permutation and positive integer scaling of `counts`.
double entropy_balance(std::span<const std::int64_t> counts);

/// Truncated discrete Gaussian PMF over 0..classes-1, normalised by the
/// finite sum of the kernel (not by sigma*sqrt(2*pi)).
std::vector<double> discrete_gaussian_pmf(const GaussianSpec& spec);

/// Smallest sigma whose continuous-Gaussian balance reaches `beta`:
/// sqrt(classes^(2 beta) / (2 pi e)).
double sigma_lower_bound(double beta, int classes);

/// Continuous-Gaussian balance 0.5 * log_classes(2 pi e sigma^2). Strict upper
/// bound on the balance of the truncated discrete Gaussian with this sigma.
double balance_upper_bound(double sigma, int classes);

/// Integer apportionment of `total` by `pmf`: floor(p_i * total) plus the
/// residual handed out by largest remainder, ties to the lowest index.
ClassCounts counts_from_pmf(std::span<const double> pmf, std::int64_t total);

/// Class index the solver centres its Gaussian on: floor(classes / 2).
int gaussian_center(int classes);

/// Finds sigma such that the integer counts of the centred discrete Gaussian
/// (summing to `total`) have entropy balance within `opts.eps` of `beta`.
///
/// Newton iteration on the continuous tangent 1/(ln(classes) * sigma), started
/// at sigma_lower_bound(beta) and never allowed below it, then bisection on
/// the bracket the Newton steps established. If rounding makes the balance
/// staircase skip over the target window, the best candidate is nudged by
/// single-sample moves between classes (for totals up to 40, the closest
/// integer partition is found by enumeration instead). Results always satisfy
/// achieved_beta <= balance_upper_bound(sigma); after count adjustments sigma
/// is raised to sigma_lower_bound(achieved_beta) when needed.
///
/// beta == 0 and beta == 1 are answered directly (one class / uniform).
SolverResult solve_sigma(double beta, int classes, std::int64_t total,
                         const SolverOptions& opts = {});

}  // namespace fedsym
