#include "anomid/lbfgs.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <optional>

#include "anomid/error.hpp"

namespace anomid {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

struct Point {
  double alpha = 0.0;
  double value = 0.0;
  double slope = 0.0;  // directional derivative
  std::vector<double> x;
  std::vector<double> grad;
};

class LineSearch {
 public:
  LineSearch(const Objective& f, const std::vector<double>& x0, double f0,
             const std::vector<double>& dir, double slope0, const LbfgsConfig& cfg)
      : f_(f), x0_(x0), f0_(f0), dir_(dir), slope0_(slope0), cfg_(cfg) {}

  std::optional<Point> run(double alpha_init) {
    Point prev{0.0, f0_, slope0_, {}, {}};
    double alpha = alpha_init;
    for (int i = 0; evals_ < cfg_.max_line_search_evals; ++i) {
      Point cur = eval(alpha);
      if (!std::isfinite(cur.value)) {
        // Step overshot into a non-finite region; shrink.
        alpha = 0.5 * (prev.alpha + alpha);
        continue;
      }
      if (cur.value > f0_ + cfg_.c1 * alpha * slope0_ || (i > 0 && cur.value >= prev.value)) {
        return zoom(prev, cur);
      }
      if (std::abs(cur.slope) <= -cfg_.c2 * slope0_) return cur;
      if (cur.slope >= 0.0) return zoom(cur, prev);
      prev = std::move(cur);
      alpha *= 2.0;
    }
    return std::nullopt;
  }

 private:
  Point eval(double alpha) {
    ++evals_;
    Point p;
    p.alpha = alpha;
    p.x.resize(x0_.size());
    p.grad.resize(x0_.size());
    for (std::size_t i = 0; i < x0_.size(); ++i) p.x[i] = x0_[i] + alpha * dir_[i];
    p.value = f_(p.x, p.grad);
    p.slope = dot(p.grad, dir_);
    return p;
  }

  // Minimizer of the cubic matching value and slope at both ends, kept away
  // from the bracket ends; bisection when the cubic has no minimizer.
  static double interpolate(const Point& a, const Point& b) {
    const double lo = std::min(a.alpha, b.alpha);
    const double hi = std::max(a.alpha, b.alpha);
    const double width = hi - lo;
    const double d1 = a.slope + b.slope - 3.0 * (a.value - b.value) / (a.alpha - b.alpha);
    const double disc = d1 * d1 - a.slope * b.slope;
    if (disc >= 0.0) {
      const double d2 = std::copysign(std::sqrt(disc), b.alpha - a.alpha);
      const double denom = b.slope - a.slope + 2.0 * d2;
      if (denom != 0.0) {
        const double alpha = b.alpha - (b.alpha - a.alpha) * (b.slope + d2 - d1) / denom;
        if (std::isfinite(alpha) && alpha > lo + 0.01 * width && alpha < hi - 0.01 * width) {
          return alpha;
        }
      }
    }
    return lo + 0.5 * width;
  }

  std::optional<Point> zoom(Point lo, Point hi) {
    while (evals_ < cfg_.max_line_search_evals) {
      Point cur = eval(interpolate(lo, hi));
      if (!std::isfinite(cur.value) || cur.value > f0_ + cfg_.c1 * cur.alpha * slope0_ ||
          cur.value >= lo.value) {
        hi = std::move(cur);
        continue;
      }
      if (std::abs(cur.slope) <= -cfg_.c2 * slope0_) return cur;
      if (cur.slope * (hi.alpha - lo.alpha) >= 0.0) hi = lo;
      lo = std::move(cur);
      if (std::abs(hi.alpha - lo.alpha) <= 1e-16 * std::max(1.0, std::abs(lo.alpha))) break;
    }
    // Out of budget. Accept lo if it decreased the objective at all.
    if (lo.alpha > 0.0 && lo.value < f0_) return lo;
    return std::nullopt;
  }

  const Objective& f_;
  const std::vector<double>& x0_;
  double f0_;
  const std::vector<double>& dir_;
  double slope0_;
  const LbfgsConfig& cfg_;
  int evals_ = 0;
};

}  // namespace

LbfgsResult minimize_lbfgs(const Objective& objective, std::vector<double> x0,
                           const LbfgsConfig& cfg) {
  if (cfg.memory < 1) throw DataError("L-BFGS memory must be >= 1");
  const std::size_t n = x0.size();
  LbfgsResult res;
  std::vector<double> x = std::move(x0);
  std::vector<double> g(n);
  double fx = objective(x, g);
  if (!std::isfinite(fx)) throw DivergenceError("L-BFGS: objective is not finite at the start point");
  res.initial_value = fx;
  res.value_history.push_back(fx);

  std::deque<std::vector<double>> s_hist, y_hist;
  std::deque<double> rho_hist;
  std::vector<double> dir(n);
  std::vector<double> alpha_buf;

  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    const double gnorm = std::sqrt(dot(g, g));
    if (gnorm <= cfg.grad_tol) {
      res.converged = true;
      break;
    }
    // Two-loop recursion: dir = -H g.
    for (std::size_t i = 0; i < n; ++i) dir[i] = -g[i];
    const std::size_t m = s_hist.size();
    alpha_buf.assign(m, 0.0);
    for (std::size_t k = m; k-- > 0;) {
      alpha_buf[k] = rho_hist[k] * dot(s_hist[k], dir);
      for (std::size_t i = 0; i < n; ++i) dir[i] -= alpha_buf[k] * y_hist[k][i];
    }
    if (m > 0) {
      const double gamma = dot(s_hist.back(), y_hist.back()) / dot(y_hist.back(), y_hist.back());
      for (double& d : dir) d *= gamma;
    }
    for (std::size_t k = 0; k < m; ++k) {
      const double beta = rho_hist[k] * dot(y_hist[k], dir);
      for (std::size_t i = 0; i < n; ++i) dir[i] += (alpha_buf[k] - beta) * s_hist[k][i];
    }
    double slope = dot(g, dir);
    if (!(slope < 0.0)) {
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      for (std::size_t i = 0; i < n; ++i) dir[i] = -g[i];
      slope = -gnorm * gnorm;
    }
    const double alpha0 = s_hist.empty() ? std::min(1.0, 1.0 / gnorm) : 1.0;
    LineSearch ls(objective, x, fx, dir, slope, cfg);
    auto step = ls.run(alpha0);
    if (!step) {
      res.line_search_failed = true;
      break;
    }
    std::vector<double> s(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = step->x[i] - x[i];
      y[i] = step->grad[i] - g[i];
    }
    const double sy = dot(s, y);
    if (sy > 1e-12 * std::sqrt(dot(s, s) * dot(y, y))) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > cfg.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    x = std::move(step->x);
    g = std::move(step->grad);
    fx = step->value;
    res.value_history.push_back(fx);
    ++res.iterations;
  }
  if (!res.converged && std::sqrt(dot(g, g)) <= cfg.grad_tol) res.converged = true;
  res.x = std::move(x);
  res.value = fx;
  return res;
}

}  // namespace anomid
