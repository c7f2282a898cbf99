#pragma once

// Limited-memory BFGS (two-loop recursion) with a strong-Wolfe line search.

#include <functional>
#include <span>
#include <vector>

namespace anomid {

struct LbfgsConfig {
  int max_iters = 300;
  int memory = 10;
  double c1 = 1e-4;  // sufficient decrease
  double c2 = 0.9;   // curvature
  double grad_tol = 1e-5;
  int max_line_search_evals = 40;
};

struct LbfgsResult {
  std::vector<double> x;
  double value = 0.0;
  double initial_value = 0.0;
  int iterations = 0;
  bool converged = false;           // gradient norm reached grad_tol
  bool line_search_failed = false;  // stopped early; x is the best point seen
  std::vector<double> value_history;  // one entry per accepted iterate, starting at x0
};

// Writes the gradient into grad and returns the objective value.
using Objective = std::function<double(std::span<const double> x, std::span<double> grad)>;

LbfgsResult minimize_lbfgs(const Objective& objective, std::vector<double> x0,
                           const LbfgsConfig& config = {});

}  // namespace anomid
