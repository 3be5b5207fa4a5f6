#pragma once

// Globally adaptive Gauss-Kronrod (7/15) quadrature with an absolute error
// target. Panel rules come from Boost.Math; the subdivision strategy (always
// bisect the panel with the largest error estimate) is QUADPACK's QAG.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <queue>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace ctmdp {

struct QuadratureResult {
  double value = 0.0;
  double error = 0.0;
  std::size_t panels = 0;
  bool converged = false;
};

template <typename F>
QuadratureResult integrate_adaptive(F&& f, double a, double b, double abs_tol, std::size_t max_panels = 4096) {
  using Rule = boost::math::quadrature::gauss_kronrod<double, 15>;
  struct Panel {
    double a, b, value, error;
    bool operator<(const Panel& o) const { return error < o.error; }
  };
  auto eval = [&](double lo, double hi) {
    double err = 0.0;
    const double v = Rule::integrate(f, lo, hi, 0, 0.0, &err);
    return Panel{lo, hi, v, err};
  };

  QuadratureResult result;
  if (a == b) {
    result.converged = true;
    return result;
  }
  std::priority_queue<Panel> heap;
  heap.push(eval(a, b));
  double total_error = heap.top().error;
  while (total_error > abs_tol && heap.size() < max_panels) {
    Panel worst = heap.top();
    heap.pop();
    const double mid = 0.5 * (worst.a + worst.b);
    if (mid <= worst.a || mid >= worst.b) {  // panel no longer splittable
      heap.push(worst);
      break;
    }
    Panel left = eval(worst.a, mid);
    Panel right = eval(mid, worst.b);
    total_error += left.error + right.error - worst.error;
    heap.push(left);
    heap.push(right);
  }
  result.panels = heap.size();
  // Sum in a fixed order so the result does not depend on heap layout.
  std::vector<Panel> panels;
  panels.reserve(heap.size());
  while (!heap.empty()) {
    panels.push_back(heap.top());
    heap.pop();
  }
  std::sort(panels.begin(), panels.end(), [](const Panel& x, const Panel& y) { return x.a < y.a; });
  total_error = 0.0;
  for (const auto& p : panels) {
    result.value += p.value;
    total_error += p.error;
  }
  result.error = total_error;
  result.converged = total_error <= abs_tol;
  return result;
}

}  // namespace ctmdp
