#pragma once

// Independent reference implementations used as test oracles. They work on
// plain nested vectors with explicit loops and share no code with the library
// beyond reading an MDP's transition probabilities.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "cairl/mdp.hpp"

namespace oracle {

using Dense3 = std::vector<std::vector<std::vector<double>>>;  // [s][a][s']
using RewardFn = std::function<double(long, long, long)>;

inline Dense3 dense(const cairl::TabularMdp& mdp) {
  const long S = mdp.num_states(), A = mdp.num_actions();
  Dense3 P(S, std::vector<std::vector<double>>(A, std::vector<double>(S, 0.0)));
  for (long s = 0; s < S; ++s)
    for (long a = 0; a < A; ++a)
      for (long n = 0; n < S; ++n) P[s][a][n] = mdp.probability(s, a, n);
  return P;
}

inline std::vector<std::vector<double>> q_backup(const Dense3& P, const RewardFn& r, double gamma,
                                                 const std::vector<double>& V) {
  const std::size_t S = P.size(), A = P[0].size();
  std::vector<std::vector<double>> Q(S, std::vector<double>(A, 0.0));
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t a = 0; a < A; ++a)
      for (std::size_t n = 0; n < S; ++n)
        if (P[s][a][n] != 0) Q[s][a] += P[s][a][n] * (r(long(s), long(a), long(n)) + gamma * V[n]);
  return Q;
}

/// Plain fixed-point iteration of the hard Bellman operator.
inline std::vector<double> hard_values(const Dense3& P, const RewardFn& r, double gamma, int iterations) {
  std::vector<double> V(P.size(), 0.0);
  for (int it = 0; it < iterations; ++it) {
    const auto Q = q_backup(P, r, gamma, V);
    for (std::size_t s = 0; s < P.size(); ++s) {
      double best = -INFINITY;
      for (double q : Q[s]) best = std::max(best, q);
      V[s] = best;
    }
  }
  return V;
}

/// Plain fixed-point iteration of the soft Bellman operator.
inline std::vector<double> soft_values(const Dense3& P, const RewardFn& r, double gamma, double alpha,
                                       int iterations) {
  std::vector<double> V(P.size(), 0.0);
  for (int it = 0; it < iterations; ++it) {
    const auto Q = q_backup(P, r, gamma, V);
    for (std::size_t s = 0; s < P.size(); ++s) {
      double total = 0.0;
      for (double q : Q[s]) total += std::exp(q / alpha);
      V[s] = alpha * std::log(total);
    }
  }
  return V;
}

/// Cumulative next-state tables for fast sampling.
struct Sampler {
  std::vector<std::vector<std::vector<std::pair<long, double>>>> cdf;  // [s][a] -> (s', cum)
  std::vector<double> init_cdf;

  explicit Sampler(const cairl::TabularMdp& mdp) {
    const long S = mdp.num_states(), A = mdp.num_actions();
    cdf.assign(S, std::vector<std::vector<std::pair<long, double>>>(A));
    for (long s = 0; s < S; ++s)
      for (long a = 0; a < A; ++a) {
        double c = 0.0;
        for (cairl::TransitionMatrix<double>::InnerIterator it(mdp.transitions(), mdp.row_index(s, a)); it; ++it) {
          c += it.value();
          cdf[s][a].push_back({it.col(), c});
        }
      }
    double c = 0.0;
    for (long s = 0; s < S; ++s) init_cdf.push_back(c += mdp.initial_distribution()(s));
  }

  template <typename Gen>
  long next(long s, long a, Gen& gen) const {
    const double u = std::uniform_real_distribution<double>(0.0, cdf[s][a].back().second)(gen);
    for (const auto& [n, c] : cdf[s][a])
      if (u < c) return n;
    return cdf[s][a].back().first;
  }

  template <typename Gen>
  long initial(Gen& gen) const {
    const double u = std::uniform_real_distribution<double>(0.0, init_cdf.back())(gen);
    for (std::size_t s = 0; s < init_cdf.size(); ++s)
      if (u < init_cdf[s]) return long(s);
    return long(init_cdf.size()) - 1;
  }
};

template <typename Gen>
long draw(const Eigen::RowVectorXd& probs, Gen& gen) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(gen);
  double c = 0.0;
  for (long a = 0; a < probs.size(); ++a)
    if (u < (c += probs(a))) return a;
  return probs.size() - 1;
}

struct Estimate {
  double mean = 0.0;
  double stderr_ = 0.0;
};

/// Monte Carlo discounted return over the horizon; absorbing terminal states
/// keep accruing reward by stepping through their self-loops.
inline Estimate monte_carlo_return(const cairl::TabularMdp& mdp, const cairl::TabularPolicy& policy,
                                   const RewardFn& r, int rollouts, std::uint64_t seed) {
  const Sampler sampler(mdp);
  std::mt19937_64 gen(seed);
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < rollouts; ++i) {
    long s = sampler.initial(gen);
    double g = 0.0, w = 1.0;
    for (int t = 0; t < mdp.horizon(); ++t) {
      const long a = draw(policy.probs().row(s), gen);
      const long n = sampler.next(s, a, gen);
      g += w * r(s, a, n);
      w *= mdp.discount();
      s = n;
    }
    sum += g;
    sum_sq += g * g;
  }
  const double mean = sum / rollouts;
  const double var = (sum_sq / rollouts - mean * mean) * rollouts / (rollouts - 1.0);
  return {mean, std::sqrt(var / rollouts)};
}

/// Random dense MDP with each row supported on `support` next states.
inline cairl::TabularMdp random_mdp(long S, long A, std::uint64_t seed, double gamma, int horizon,
                                    int support = 4, std::vector<long> terminals = {}) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> unif(0.05, 1.0);
  std::uniform_int_distribution<long> pick(0, S - 1);
  cairl::Table<double> rows = cairl::Table<double>::Zero(S * A, S);
  for (long s = 0; s < S; ++s)
    for (long a = 0; a < A; ++a) {
      const bool terminal = std::find(terminals.begin(), terminals.end(), s) != terminals.end();
      if (terminal) {
        rows(s * A + a, s) = 1.0;
        continue;
      }
      for (int k = 0; k < support; ++k) rows(s * A + a, pick(gen)) += unif(gen);
      rows.row(s * A + a) /= rows.row(s * A + a).sum();
    }
  cairl::Vector<double> init = cairl::Vector<double>::Zero(S);
  for (long s = 0; s < S; ++s)
    if (std::find(terminals.begin(), terminals.end(), s) == terminals.end()) init(s) = unif(gen);
  init /= init.sum();
  return cairl::TabularMdp::from_dense(S, A, rows, init, gamma, horizon, terminals);
}

/// Random stochastic policy with entries bounded away from zero.
inline cairl::TabularPolicy random_policy(long S, long A, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> unif(0.1, 1.0);
  cairl::Table<double> p(S, A);
  for (long s = 0; s < S; ++s) {
    for (long a = 0; a < A; ++a) p(s, a) = unif(gen);
    p.row(s) /= p.row(s).sum();
  }
  return cairl::TabularPolicy(p);
}

}  // namespace oracle
