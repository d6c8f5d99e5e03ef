#pragma once

// Compactly supported test functions and the mesoscopic window
// f̃(x) = f(N^α (x − E)).

#include <cmath>
#include <cstddef>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "betagas/core_fn.hpp"
#include "betagas/equilibrium.hpp"
#include "betagas/errors.hpp"

namespace betagas {

/// A C^5 (or smoother) function with supp f ⊂ [−M, M].
class TestFunction {
 public:
  TestFunction(SmoothFn f, double radius) : f_(std::move(f)), radius_(radius) {
    if (!(radius_ > 0.0)) throw RejectedInput("TestFunction: support radius must be > 0");
    if (f_.smoothness() < 5) throw RejectedInput("TestFunction: f must be at least C^5");
    for (double x : {-radius_, radius_})
      for (int p = 0; p <= 5; ++p)
        if (std::abs(f_.derivative(x, p)) > 1e-10)
          throw RejectedInput("TestFunction: derivative " + std::to_string(p) + " does not vanish at the support edge");
  }

  /// (1 − x²)^k on [−1, 1], zero outside; C^{k−1}, so k >= 6 for C^5.
  static TestFunction bump(int k) { return poly_bump({1.0}, k); }

  /// q(x)·(1 − x²)^k on [−1, 1], zero outside.
  static TestFunction poly_bump(std::vector<double> q_coeffs, int k) {
    if (k < 6) throw RejectedInput("TestFunction: bump exponent k must be >= 6 for C^5 smoothness");
    Polynomial p(std::move(q_coeffs));
    const Polynomial base({1.0, 0.0, -1.0});
    for (int i = 0; i < k; ++i) p = p * base;
    auto poly = std::make_shared<const Polynomial>(std::move(p));
    SmoothFn f([poly](double x, int order) {
      if (x <= -1.0 || x >= 1.0) return 0.0;
      return poly->derivative(x, order);
    }, k - 1, Interval{-1.0, 1.0});
    return TestFunction(std::move(f), 1.0);
  }

  static TestFunction zero(double radius = 1.0) { return TestFunction(SmoothFn::zero(), radius); }

  /// x ↦ f(x/s).
  TestFunction scaled(double s) const {
    if (!(s > 0.0)) throw RejectedInput("TestFunction::scaled: s must be > 0");
    const SmoothFn f = f_;
    const Interval sup = support();
    SmoothFn g([f, s](double x, int order) { return std::pow(s, -order) * f.derivative(x / s, order); },
               f_.smoothness(), Interval{s * sup.lo, s * sup.hi});
    return TestFunction(std::move(g), radius_ * s);
  }

  /// x ↦ f(x − t).
  TestFunction shifted(double t) const {
    const SmoothFn f = f_;
    const Interval sup = support();
    SmoothFn g([f, t](double x, int order) { return f.derivative(x - t, order); }, f_.smoothness(),
               Interval{sup.lo + t, sup.hi + t});
    return TestFunction(std::move(g), radius_ + std::abs(t));
  }

  double operator()(double x) const { return f_(x); }
  double derivative(double x, int order) const { return f_.derivative(x, order); }
  double radius() const { return radius_; }
  /// Smallest known interval containing supp f; [−M, M] by default.
  Interval support() const { return f_.support_hint().value_or(Interval{-radius_, radius_}); }
  const SmoothFn& fn() const { return f_; }

 private:
  SmoothFn f_;
  double radius_;
};

struct MesoWindow {
  double E = 0.0;
  double alpha = 0.5;

  /// N^{−α}
  double width(std::size_t N) const { return std::pow(static_cast<double>(N), -alpha); }

  void validate(const EquilibriumMeasure& mu) const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("MesoWindow: alpha must lie in (0, 1)");
    if (!(E > mu.a() && E < mu.b()))
      throw DomainError("MesoWindow: energy E=" + std::to_string(E) + " is not in the bulk (" +
                        std::to_string(mu.a()) + ", " + std::to_string(mu.b()) + ")");
  }
};

/// f̃(x) = f(N^α (x − E)), derivatives by the chain rule.
inline SmoothFn rescaled(const TestFunction& f, const MesoWindow& w, std::size_t N) {
  const double s = std::pow(static_cast<double>(N), w.alpha);
  const double E = w.E;
  const SmoothFn g = f.fn();
  return SmoothFn([g, s, E](double x, int order) { return std::pow(s, order) * g.derivative(s * (x - E), order); },
                  g.smoothness(), Interval{E - f.radius() / s, E + f.radius() / s});
}

/// Panel breakpoints on the support: uniform panels across the window
/// E ± M·width (so the edge kinks of f̃ sit on breakpoints), then panels that
/// double in size toward a and b.
inline std::vector<double> mesoscopic_breaks(Interval support, double E, double width, double M,
                                             int window_panels = 8) {
  const double r = M * width;
  const int hw = window_panels / 2;
  const double step0 = r / hw;
  std::vector<double> br{support.lo, support.hi};
  for (int j = -hw; j <= hw; ++j) {
    const double x = E + r * j / hw;
    if (x > support.lo && x < support.hi) br.push_back(x);
  }
  for (int side : {-1, 1}) {
    const double limit = side > 0 ? support.hi - E : E - support.lo;
    double d = r;
    double step = step0;
    while (true) {
      step *= 2.0;
      d += step;
      if (d >= limit - 0.5 * step) break;
      br.push_back(E + side * d);
    }
  }
  std::sort(br.begin(), br.end());
  br.erase(std::unique(br.begin(), br.end(), [](double p, double q) { return std::abs(p - q) < 1e-14; }), br.end());
  return br;
}

/// Breakpoints uniform in angle: the layout for macroscopic functions.
inline std::vector<double> angular_breaks(Interval support, int panels = 8) {
  std::vector<double> br;
  for (int m = 0; m <= panels; ++m) br.push_back(support.mid() - support.half() * std::cos(kPi * m / panels));
  br.front() = support.lo;
  br.back() = support.hi;
  return br;
}

}  // namespace betagas
