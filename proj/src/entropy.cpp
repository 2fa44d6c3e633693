#include "fedsym/entropy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <sstream>

namespace fedsym {

namespace {

constexpr double kSigmaMin = 1e-4;
constexpr double kSigmaMax = 1e6;
// Largest total for which InfeasibleTarget is proven by enumerating partitions.
constexpr std::int64_t kEnumerationLimit = 40;

double two_pi_e() { return 2.0 * std::numbers::pi * std::numbers::e; }

// Validates and returns the sum. Throws InvalidDistribution on negative or
// all-zero input.
std::int64_t checked_total(std::span<const std::int64_t> counts) {
  std::int64_t total = 0;
  for (auto c : counts) {
    if (c < 0) throw InvalidDistribution("class counts must be non-negative");
    total += c;
  }
  if (total <= 0) throw InvalidDistribution("class counts sum to zero");
  return total;
}

// Entropy in nats. Terms are summed over the sorted counts so the result does
// not depend on the order of `counts`. When every non-zero count is equal the
// closed form ln(m) is returned, which makes the uniform case exact.
double entropy_nats(std::span<const std::int64_t> counts) {
  const auto total = checked_total(counts);
  std::vector<std::int64_t> sorted;
  sorted.reserve(counts.size());
  for (auto c : counts)
    if (c > 0) sorted.push_back(c);
  std::sort(sorted.begin(), sorted.end());
  if (sorted.front() == sorted.back()) return std::log(static_cast<double>(sorted.size()));

  const double n = static_cast<double>(total);
  double h = 0.0;
  for (auto c : sorted) {
    const double p = static_cast<double>(c) / n;
    h -= p * std::log(p);
  }
  return h;
}

double xlogx(std::int64_t c) {
  return c > 0 ? static_cast<double>(c) * std::log(static_cast<double>(c)) : 0.0;
}

bool accepted(double target, double achieved, double sigma, int classes, double eps) {
  return std::abs(achieved - target) < eps && achieved <= balance_upper_bound(sigma, classes);
}

// Greedy moves of delta samples from one class to another, minimising
// |beta - target|. Deltas are capped so one step scores about 20k candidates
// (single samples only once classes * classes reaches that). When no move
// helps, the best pair of moves is tried, the first drawn from the most
// promising singles. Returns the number of samples moved away from the
// starting counts, or nullopt if the target window was not reached.
std::optional<int> refine_counts(ClassCounts& counts, double target, double eps) {
  const int classes = static_cast<int>(counts.size());
  const ClassCounts start = counts;
  const double total = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::int64_t{0}));
  const double log_total = std::log(total);
  const double log_classes = std::log(static_cast<double>(classes));
  const std::int64_t max_delta = std::max<std::int64_t>(1, 20000 / (std::int64_t{classes} * classes));

  double sum_xlogx = 0.0;
  for (auto c : counts) sum_xlogx += xlogx(c);
  auto gap = [&](double s) { return std::abs((log_total - s / total) / log_classes - target); };

  struct Move {
    double score;
    int from, to;
    std::int64_t delta;
  };
  auto moved = [&](double s, const Move& m) {
    return s - xlogx(counts[m.from]) + xlogx(counts[m.from] - m.delta) - xlogx(counts[m.to]) +
           xlogx(counts[m.to] + m.delta);
  };
  auto apply = [&](const Move& m) {
    sum_xlogx = moved(sum_xlogx, m);
    counts[m.from] -= m.delta;
    counts[m.to] += m.delta;
  };
  auto undo = [&](const Move& m) { apply({m.score, m.to, m.from, m.delta}); };
  auto candidates = [&](std::vector<Move>& out) {
    out.clear();
    for (int a = 0; a < classes; ++a)
      for (int b = 0; b < classes; ++b) {
        if (a == b) continue;
        for (std::int64_t d = 1; d <= std::min(counts[a], max_delta); ++d) {
          Move m{0.0, a, b, d};
          m.score = gap(moved(sum_xlogx, m));
          out.push_back(m);
        }
      }
  };
  auto distance = [&] {
    std::int64_t moved_samples = 0;
    for (int i = 0; i < classes; ++i) moved_samples += std::abs(counts[i] - start[i]);
    return static_cast<int>(moved_samples / 2);
  };
  constexpr std::size_t kPairSeeds = 64;

  double current = gap(sum_xlogx);
  std::vector<Move> singles, seconds;
  for (int step = 0;; ++step) {
    if (std::abs(entropy_balance(counts) - target) < eps) return distance();
    if (step >= 10 * classes) return std::nullopt;

    candidates(singles);
    if (singles.empty()) return std::nullopt;
    const auto top = std::min(singles.size(), kPairSeeds);
    std::partial_sort(singles.begin(), singles.begin() + static_cast<std::ptrdiff_t>(top), singles.end(),
                      [](const Move& x, const Move& y) { return x.score < y.score; });
    if (singles.front().score < current) {
      apply(singles.front());
      current = singles.front().score;
      continue;
    }

    std::optional<std::pair<Move, Move>> pair;
    double best = current;
    for (std::size_t k = 0; k < top; ++k) {
      const auto first = singles[k];
      apply(first);
      candidates(seconds);
      for (const auto& m : seconds)
        if (m.score < best) {
          best = m.score;
          pair.emplace(first, m);
        }
      undo(first);
    }
    if (!pair) return std::nullopt;
    apply(pair->first);
    apply(pair->second);
    current = best;
  }
}

// Closest-to-target partition of `total` into at most `classes` parts, laid
// out around `center` (largest part there, then alternating right/left).
// Only called for small totals.
ClassCounts closest_partition(std::int64_t total, int classes, int center, double target) {
  ClassCounts parts, best;
  double best_gap = std::numeric_limits<double>::infinity();
  parts.reserve(classes);
  auto recurse = [&](auto&& self, std::int64_t remaining, std::int64_t max_part) -> void {
    if (remaining == 0) {
      ClassCounts full(parts);
      full.resize(classes, 0);
      const double gap = std::abs(entropy_balance(full) - target);
      if (gap < best_gap) {
        best_gap = gap;
        best = parts;
      }
      return;
    }
    if (static_cast<int>(parts.size()) == classes) return;
    for (auto p = std::min(remaining, max_part); p >= 1; --p) {
      parts.push_back(p);
      self(self, remaining - p, p);
      parts.pop_back();
    }
  };
  recurse(recurse, total, total);

  ClassCounts out(classes, 0);
  for (std::size_t k = 0; k < best.size(); ++k) {
    const int step = static_cast<int>((k + 1) / 2);
    const int pos = k % 2 == 1 ? center + step : center - step;
    out[((pos % classes) + classes) % classes] = best[k];
  }
  return out;
}

}  // namespace

double shannon_entropy(std::span<const std::int64_t> counts) {
  return entropy_nats(counts) / std::numbers::ln2;
}

double entropy_balance(std::span<const std::int64_t> counts) {
  if (counts.size() < 2) throw InvalidDistribution("entropy balance needs at least two classes");
  return entropy_nats(counts) / std::log(static_cast<double>(counts.size()));
}

std::vector<double> discrete_gaussian_pmf(const GaussianSpec& spec) {
  if (spec.classes < 2) throw std::invalid_argument("discrete Gaussian needs at least two classes");
  if (!(spec.sigma > 0.0) || !std::isfinite(spec.sigma))
    throw std::invalid_argument("discrete Gaussian needs a positive finite sigma");

  std::vector<double> pmf(spec.classes);
  for (int i = 0; i < spec.classes; ++i) {
    const double z = (i - spec.mu) / spec.sigma;
    pmf[i] = -0.5 * z * z;
  }
  // Shift by the largest exponent so tiny sigma does not underflow to 0/0.
  const double top = *std::max_element(pmf.begin(), pmf.end());
  double norm = 0.0;
  for (auto& v : pmf) {
    v = std::exp(v - top);
    norm += v;
  }
  for (auto& v : pmf) v /= norm;
  return pmf;
}

double sigma_lower_bound(double beta, int classes) {
  if (classes < 2) throw std::invalid_argument("sigma bound needs at least two classes");
  return std::sqrt(std::pow(static_cast<double>(classes), 2.0 * beta) / two_pi_e());
}

double balance_upper_bound(double sigma, int classes) {
  return 0.5 * std::log(two_pi_e() * sigma * sigma) / std::log(static_cast<double>(classes));
}

ClassCounts counts_from_pmf(std::span<const double> pmf, std::int64_t total) {
  if (pmf.empty()) throw std::invalid_argument("empty pmf");
  if (total < 0) throw std::invalid_argument("negative total");
  double mass = 0.0;
  for (auto p : pmf) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw std::invalid_argument("pmf entries must be finite and non-negative");
    mass += p;
  }
  if (!(mass > 0.0)) throw std::invalid_argument("pmf has no mass");

  const auto n = pmf.size();
  ClassCounts counts(n);
  std::vector<double> remainder(n);
  std::int64_t assigned = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double raw = pmf[i] / mass * static_cast<double>(total);
    const double whole = std::floor(raw);
    counts[i] = static_cast<std::int64_t>(whole);
    remainder[i] = raw - whole;
    assigned += counts[i];
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });

  std::int64_t residual = total - assigned;
  for (std::size_t k = 0; residual > 0; k = (k + 1) % n, --residual) ++counts[order[k]];
  // Only reachable through floating-point excess; take back from the smallest remainders.
  for (std::size_t k = n; residual < 0;) {
    k = (k == 0 ? n : k) - 1;
    if (counts[order[k]] > 0) {
      --counts[order[k]];
      ++residual;
    }
  }
  return counts;
}

int gaussian_center(int classes) { return classes / 2; }

SolverResult solve_sigma(double beta, int classes, std::int64_t total, const SolverOptions& opts) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw std::invalid_argument("target balance must lie in [0, 1]");
  if (classes < 2) throw std::invalid_argument("solver needs at least two classes");
  if (total <= 0) throw std::invalid_argument("samples per client must be positive");
  if (!(opts.eps > 0.0)) throw std::invalid_argument("eps must be positive");
  if (opts.max_iter < 1) throw std::invalid_argument("max_iter must be positive");

  const int center = gaussian_center(classes);

  if (beta == 1.0) {
    if (total < classes) throw std::invalid_argument("uniform target needs at least one sample per class");
    const std::vector<double> uniform(classes, 1.0 / classes);
    SolverResult r;
    r.sigma = kSigmaMax;
    r.counts = counts_from_pmf(uniform, total);
    r.achieved_beta = entropy_balance(r.counts);
    return r;
  }
  if (beta == 0.0) {
    SolverResult r;
    r.sigma = sigma_lower_bound(0.0, classes);
    r.counts.assign(classes, 0);
    r.counts[center] = total;
    r.achieved_beta = 0.0;
    return r;
  }

  const double log_classes = std::log(static_cast<double>(classes));
  const double floor_sigma = std::max(sigma_lower_bound(beta, classes), kSigmaMin);

  struct Candidate {
    double sigma;
    ClassCounts counts;
    double beta;
  };
  auto evaluate = [&](double sigma) {
    Candidate c{sigma, counts_from_pmf(discrete_gaussian_pmf({double(center), sigma, classes}), total), 0.0};
    c.beta = entropy_balance(c.counts);
    return c;
  };

  std::optional<Candidate> best;
  double lo = floor_sigma;
  std::optional<double> hi;
  int iterations = 0;

  auto record = [&](const Candidate& c) {
    ++iterations;
    if (!best || std::abs(c.beta - beta) < std::abs(best->beta - beta)) best = c;
    if (c.beta < beta)
      lo = std::max(lo, c.sigma);
    else
      hi = hi ? std::min(*hi, c.sigma) : c.sigma;
    return accepted(beta, c.beta, c.sigma, classes, opts.eps);
  };
  auto finish = [&](const Candidate& c, int adjustments = 0) {
    return SolverResult{c.sigma, c.counts, c.beta, iterations, adjustments};
  };
  auto collapsed = [&] { return hi && *hi - lo <= 1e-12 * *hi; };

  // Newton on the continuous tangent.
  double sigma = floor_sigma;
  while (iterations < std::min(opts.newton_iter, opts.max_iter)) {
    auto c = evaluate(sigma);
    if (record(c)) return finish(c);
    if (collapsed()) break;
    double next = sigma + (beta - c.beta) * log_classes * sigma;
    next = std::clamp(next, floor_sigma, kSigmaMax);
    if (hi && (next >= *hi || next <= lo))
      next = 0.5 * (lo + *hi);
    else if (!hi && next <= lo)
      next = std::min(2.0 * lo, kSigmaMax);
    sigma = next;
  }

  // Grow the bracket until it straddles the target.
  while (!hi && iterations < opts.max_iter && lo < kSigmaMax) {
    auto c = evaluate(std::min(2.0 * lo, kSigmaMax));
    if (record(c)) return finish(c);
  }

  // Bisection on the bracket.
  while (hi && !collapsed() && iterations < opts.max_iter) {
    auto c = evaluate(0.5 * (lo + *hi));
    if (record(c)) return finish(c);
  }

  // Rounding stepped over the target window: adjust the counts directly,
  // starting from whichever bracket end needs fewer moves. The reported sigma
  // is raised, if needed, to stay consistent with the achieved balance.
  auto consistent_sigma = [&](double s, double achieved) {
    return std::max({s, floor_sigma, sigma_lower_bound(std::clamp(achieved, 0.0, 1.0), classes)});
  };
  std::optional<std::pair<int, Candidate>> refined;
  std::vector<double> ends{lo};
  if (hi) ends.push_back(*hi);
  for (double end : ends) {
    auto c = evaluate(end);
    if (auto moves = refine_counts(c.counts, beta, opts.eps)) {
      c.beta = entropy_balance(c.counts);
      c.sigma = consistent_sigma(c.sigma, c.beta);
      if (!refined || *moves < refined->first) refined.emplace(*moves, std::move(c));
    }
  }
  if (refined) return finish(refined->second, refined->first);

  if (total <= kEnumerationLimit) {
    auto counts = closest_partition(total, classes, center, beta);
    const double achieved = entropy_balance(counts);
    if (std::abs(achieved - beta) < opts.eps) {
      const auto gaussian = evaluate(lo).counts;
      std::int64_t moved = 0;
      for (int i = 0; i < classes; ++i) moved += std::abs(counts[i] - gaussian[i]);
      Candidate c{consistent_sigma(lo, achieved), std::move(counts), achieved};
      return finish(c, static_cast<int>(moved / 2));
    }
    std::ostringstream msg;
    msg << "no count vector of " << total << " samples over " << classes
        << " classes has entropy balance within " << opts.eps << " of " << beta;
    throw InfeasibleTarget(msg.str());
  }
  std::ostringstream msg;
  msg << "sigma search for balance " << beta << " stopped after " << iterations
      << " iterations; closest balance " << best->beta;
  throw NoConvergence(msg.str(), finish(*best));
}

}  // namespace fedsym
