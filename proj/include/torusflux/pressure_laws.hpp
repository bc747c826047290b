#pragma once

// Constitutive pressure laws pi_mu(rho) = pi(rho) + mu rho^Gamma, their potentials
// Pi_mu(rho) = rho * int_1^rho pi_mu(xi) / xi^2 dxi, the convex/compact splitting
// Pi_mu = P_mu + Q, and the truncations T_k and renormalizations L_k.

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "torusflux/common.hpp"
#include "torusflux/quadrature.hpp"

namespace torusflux {

enum class LawKind { Isentropic, NonMonotonePerturbed, Tabulated };

inline const char* to_string(LawKind kind) {
  switch (kind) {
    case LawKind::Isentropic: return "isentropic";
    case LawKind::NonMonotonePerturbed: return "perturbed";
    case LawKind::Tabulated: return "tabulated";
  }
  return "unknown";
}

/// Compactly supported smooth dip q(rho) = -A * b((rho - c) / w) with the
/// unit-height bump b(t) = exp(1 - 1/(1 - t^2)) on |t| < 1. q(0) = 0 as long
/// as c > w.
template <typename Scalar>
struct BumpPerturbation {
  Scalar amplitude = Scalar(0.3);
  Scalar center = Scalar(0.75);
  Scalar half_width = Scalar(0.25);

  Scalar support_min() const { return center - half_width; }
  Scalar support_max() const { return center + half_width; }

  /// Derivative of the given order (0, 1 or 2) with respect to rho.
  Scalar operator()(Scalar rho, int order = 0) const {
    const Scalar t = (rho - center) / half_width;
    if (std::abs(t) >= Scalar(1)) return Scalar(0);
    const Scalar s = Scalar(1) - t * t;
    const Scalar b = std::exp(Scalar(1) - Scalar(1) / s);
    if (order == 0) return -amplitude * b;
    const Scalar g1 = Scalar(-2) * t / (s * s);
    if (order == 1) return -amplitude * b * g1 / half_width;
    const Scalar g2 = Scalar(-2) / (s * s) - Scalar(8) * t * t / (s * s * s);
    return -amplitude * b * (g1 * g1 + g2) / (half_width * half_width);
  }
};

/// Natural cubic spline through strictly increasing abscissae.
template <typename Scalar>
class NaturalSpline {
 public:
  NaturalSpline() = default;
  NaturalSpline(std::vector<Scalar> x, std::vector<Scalar> y) : x_(std::move(x)), y_(std::move(y)) {
    const std::size_t n = x_.size();
    if (n < 3 || y_.size() != n) throw DomainError("spline needs at least three (x, y) pairs");
    for (std::size_t i = 1; i < n; ++i)
      if (!(x_[i] > x_[i - 1])) throw DomainError("spline abscissae must be strictly increasing");
    // Tridiagonal solve for second derivatives with natural end conditions.
    m_.assign(n, Scalar(0));
    std::vector<Scalar> c(n, Scalar(0)), d(n, Scalar(0));
    for (std::size_t i = 1; i + 1 < n; ++i) {
      const Scalar h0 = x_[i] - x_[i - 1], h1 = x_[i + 1] - x_[i];
      const Scalar a = h0, b = 2 * (h0 + h1), cc = h1;
      const Scalar r = 6 * ((y_[i + 1] - y_[i]) / h1 - (y_[i] - y_[i - 1]) / h0);
      const Scalar denom = b - a * c[i - 1];
      c[i] = cc / denom;
      d[i] = (r - a * d[i - 1]) / denom;
    }
    for (std::size_t i = n - 2; i >= 1; --i) {
      m_[i] = d[i] - c[i] * m_[i + 1];
      if (i == 1) break;
    }
  }

  Scalar front() const { return x_.front(); }
  Scalar back() const { return x_.back(); }

  Scalar operator()(Scalar x, int order = 0) const {
    const auto it = std::upper_bound(x_.begin(), x_.end(), x);
    std::size_t i = it == x_.begin() ? 0 : std::size_t(it - x_.begin()) - 1;
    i = std::min(i, x_.size() - 2);
    const Scalar h = x_[i + 1] - x_[i];
    const Scalar a = (x_[i + 1] - x) / h, b = (x - x_[i]) / h;
    switch (order) {
      case 0:
        return a * y_[i] + b * y_[i + 1] +
               ((a * a * a - a) * m_[i] + (b * b * b - b) * m_[i + 1]) * h * h / 6;
      case 1:
        return (y_[i + 1] - y_[i]) / h - (3 * a * a - 1) * h * m_[i] / 6 +
               (3 * b * b - 1) * h * m_[i + 1] / 6;
      default:
        return a * m_[i] + b * m_[i + 1];
    }
  }

 private:
  std::vector<Scalar> x_, y_, m_;
};

/// Growth envelope a2 rho^gamma - C <= pi(rho) <= C + a1 rho^gamma and the
/// derivative bound constant of |pi'| <= C' rho^(gamma-1), |pi''| <= C' rho^(gamma-2).
template <typename Scalar>
struct GrowthEnvelope {
  Scalar a1 = 1, a2 = 1, C = 1, C_derivative = 1;
};

template <typename Scalar>
class PressureLaw {
 public:
  static PressureLaw isentropic(Scalar gamma, Scalar Gamma = Scalar(4), Scalar mu = Scalar(0)) {
    PressureLaw law(LawKind::Isentropic, gamma, Gamma, mu);
    law.envelope_ = {1, 1, 1, std::max(gamma, gamma * std::abs(gamma - 1))};
    return law;
  }

  static PressureLaw perturbed(Scalar gamma, Scalar Gamma, Scalar mu,
                               BumpPerturbation<Scalar> q = {}) {
    if (!(q.half_width > 0) || q.support_min() <= 0)
      throw DomainError("perturbation support must lie in (0, inf) so that q(0) = 0");
    if (!(q.amplitude >= 0)) throw DomainError("perturbation amplitude must be nonnegative");
    PressureLaw law(LawKind::NonMonotonePerturbed, gamma, Gamma, mu);
    law.bump_ = q;
    law.envelope_ = {1, 1, 1 + q.amplitude, std::max(gamma, gamma * std::abs(gamma - 1))};
    return law;
  }

  /// Tabulated pi(rho) through (rho_i, pi_i); (0, 0) is prepended when absent.
  /// Above the last sample pi continues as pi_last (rho/rho_last)^gamma.
  static PressureLaw tabulated(std::vector<Scalar> rho, std::vector<Scalar> pi, Scalar gamma,
                               Scalar Gamma = Scalar(4), Scalar mu = Scalar(0)) {
    if (rho.size() != pi.size() || rho.empty())
      throw DomainError("tabulated law needs matching nonempty columns");
    for (std::size_t i = 0; i < rho.size(); ++i) {
      if (rho[i] < 0) throw DomainError("tabulated density must be nonnegative");
      if (i > 0 && !(rho[i] > rho[i - 1]))
        throw DomainError("tabulated density column must be strictly increasing");
    }
    if (rho.front() > 0) {
      rho.insert(rho.begin(), Scalar(0));
      pi.insert(pi.begin(), Scalar(0));
    } else if (pi.front() != 0) {
      throw DomainError("tabulated law must satisfy pi(0) = 0");
    }
    PressureLaw law(LawKind::Tabulated, gamma, Gamma, mu);
    law.spline_ = NaturalSpline<Scalar>(rho, pi);
    law.table_end_ = rho.back();
    law.table_end_value_ = pi.back();
    // Envelope constants from the samples.
    Scalar a1 = 0, a2 = std::numeric_limits<Scalar>::max(), C = 0, Cd = 0;
    for (std::size_t i = 1; i < rho.size(); ++i) {
      const Scalar r = rho[i];
      const Scalar g = std::pow(r, gamma);
      a1 = std::max(a1, pi[i] / g);
      if (r >= 1) a2 = std::min(a2, pi[i] / g);
      else C = std::max(C, pi[i]);
    }
    if (a2 == std::numeric_limits<Scalar>::max()) a2 = std::min(a1, pi.back() / std::pow(rho.back(), gamma));
    law.envelope_ = {a1, a2, std::max(C, Scalar(1)), Cd};
    Scalar cd = 0;
    for (Scalar r = 1; r <= std::max(rho.back(), Scalar(1)) * 2; r *= Scalar(1.05)) {
      cd = std::max(cd, std::abs(law.base(r, 1)) / std::pow(r, gamma - 1));
      cd = std::max(cd, std::abs(law.base(r, 2)) / std::pow(r, gamma - 2));
    }
    law.envelope_.C_derivative = std::max(cd, std::max(gamma, gamma * std::abs(gamma - 1)));
    return law;
  }

  /// Two whitespace-separated columns (rho, pi); '#' starts a comment.
  static PressureLaw read_tabulated(std::istream& in, Scalar gamma, Scalar Gamma = Scalar(4),
                                    Scalar mu = Scalar(0)) {
    std::vector<Scalar> rho, pi;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      std::istringstream fields(line);
      double r, p;
      if (!(fields >> r)) continue;
      if (!(fields >> p))
        throw DomainError("tabulated law line " + std::to_string(line_no) + ": expected two columns");
      rho.push_back(Scalar(r));
      pi.push_back(Scalar(p));
    }
    return tabulated(std::move(rho), std::move(pi), gamma, Gamma, mu);
  }

  LawKind kind() const { return kind_; }
  Scalar gamma() const { return gamma_; }
  Scalar Gamma() const { return Gamma_; }
  Scalar mu() const { return mu_; }
  const GrowthEnvelope<Scalar>& envelope() const { return envelope_; }
  const std::optional<BumpPerturbation<Scalar>>& perturbation() const { return bump_; }

  PressureLaw with_mu(Scalar mu) const {
    PressureLaw copy = *this;
    if (mu < 0) throw DomainError("mu must be nonnegative");
    copy.mu_ = mu;
    return copy;
  }

  /// pi(rho) without the mu correction; order 0, 1 or 2.
  Scalar base(Scalar rho, int order = 0) const {
    if (kind_ == LawKind::Tabulated) {
      if (rho <= table_end_) return spline_(rho, order);
      const Scalar s = rho / table_end_;
      const Scalar v = table_end_value_ * std::pow(s, gamma_);
      if (order == 0) return v;
      if (order == 1) return gamma_ * v / rho;
      return gamma_ * (gamma_ - 1) * v / (rho * rho);
    }
    Scalar v = power_pressure(Scalar(1), gamma_, rho, order);
    if (bump_) v += (*bump_)(rho, order);
    return v;
  }

  /// pi_mu(rho) = pi(rho) + mu rho^Gamma; order 0, 1 or 2.
  Scalar pressure(Scalar rho, int order = 0) const {
    if (rho < 0) throw DomainError("pressure evaluated at negative density");
    Scalar v = base(rho, order);
    if (mu_ != 0) v += power_pressure(mu_, Gamma_, rho, order);
    return v;
  }

  /// Pi_mu(rho) and its derivatives up to order 3. With include_mu = false the
  /// potential of pi alone.
  Scalar potential(Scalar rho, int order = 0, bool include_mu = true) const {
    if (rho < 0) throw DomainError("potential evaluated at negative density");
    Scalar v(0);
    if (include_mu && mu_ != 0) v += power_potential(mu_, Gamma_, rho, order);
    switch (kind_) {
      case LawKind::Isentropic:
        v += power_potential(Scalar(1), gamma_, rho, order);
        break;
      case LawKind::NonMonotonePerturbed:
        v += power_potential(Scalar(1), gamma_, rho, order);
        v += bump_potential(rho, order);
        break;
      case LawKind::Tabulated:
        v += tabulated_potential(rho, order);
        break;
    }
    return v;
  }

 private:
  PressureLaw(LawKind kind, Scalar gamma, Scalar Gamma, Scalar mu)
      : kind_(kind), gamma_(gamma), Gamma_(Gamma), mu_(mu) {
    if (!(gamma > 1)) throw DomainError("pressure exponent gamma must exceed 1");
    if (!(Gamma > 1)) throw DomainError("correction exponent Gamma must exceed 1");
    if (!(mu >= 0)) throw DomainError("mu must be nonnegative");
  }

  static Scalar power_pressure(Scalar c, Scalar e, Scalar rho, int order) {
    if (order == 0) return c * std::pow(rho, e);
    if (order == 1) return c * e * std::pow(rho, e - 1);
    return c * e * (e - 1) * std::pow(rho, e - 2);
  }

  // rho * int_1^rho c xi^(e-2) dxi = c (rho^e - rho) / (e - 1)
  static Scalar power_potential(Scalar c, Scalar e, Scalar rho, int order) {
    switch (order) {
      case 0: return c * (std::pow(rho, e) - rho) / (e - 1);
      case 1: return c * (e * std::pow(rho, e - 1) - 1) / (e - 1);
      case 2: return c * e * std::pow(rho, e - 2);
      default: return c * e * (e - 2) * std::pow(rho, e - 3);
    }
  }

  // J(rho) = int_1^rho q(xi) / xi^2 dxi, integrated only over the support of q.
  Scalar bump_integral(Scalar rho) const {
    const auto& q = *bump_;
    const Scalar lo = std::max(std::min(Scalar(1), rho), q.support_min());
    const Scalar hi = std::min(std::max(Scalar(1), rho), q.support_max());
    if (!(hi > lo)) return Scalar(0);
    const auto integrand = [&q](Scalar xi) { return q(xi) / (xi * xi); };
    const Scalar value = integrate(integrand, lo, hi, Scalar(1e-16), Scalar(1e-14)).value;
    return rho < 1 ? -value : value;
  }

  // Potential part R = rho J of a pressure part r, with R' = J + r/rho,
  // R'' = r'/rho and R''' = (rho r'' - r')/rho^2.
  Scalar bump_potential(Scalar rho, int order) const {
    const auto& q = *bump_;
    if (rho == 0) return Scalar(0);
    switch (order) {
      case 0: return rho * bump_integral(rho);
      case 1: return bump_integral(rho) + q(rho) / rho;
      case 2: return q(rho, 1) / rho;
      default: return (rho * q(rho, 2) - q(rho, 1)) / (rho * rho);
    }
  }

  // Split off the linear part near zero: int_1^rho (pi - s0 xi)/xi^2 + s0 log rho.
  Scalar tabulated_integral(Scalar rho) const {
    const Scalar s0 = spline_(Scalar(0), 1);
    const auto integrand = [this, s0](Scalar xi) { return (base(xi) - s0 * xi) / (xi * xi); };
    Scalar value(0);
    // Integrate piecewise across the table end so the kink does not stall refinement.
    const Scalar lo = std::min(Scalar(1), rho), hi = std::max(Scalar(1), rho);
    if (lo < table_end_ && hi > table_end_) {
      value = integrate(integrand, lo, table_end_).value + integrate(integrand, table_end_, hi).value;
    } else {
      value = integrate(integrand, lo, hi).value;
    }
    if (rho < 1) value = -value;
    return value + s0 * std::log(rho);
  }

  Scalar tabulated_potential(Scalar rho, int order) const {
    if (rho == 0) return order == 0 ? Scalar(0) : -std::numeric_limits<Scalar>::infinity();
    switch (order) {
      case 0: return rho * tabulated_integral(rho);
      case 1: return tabulated_integral(rho) + base(rho) / rho;
      case 2: return base(rho, 1) / rho;
      default: return (rho * base(rho, 2) - base(rho, 1)) / (rho * rho);
    }
  }

  LawKind kind_;
  Scalar gamma_, Gamma_, mu_;
  GrowthEnvelope<Scalar> envelope_;
  std::optional<BumpPerturbation<Scalar>> bump_;
  NaturalSpline<Scalar> spline_;
  Scalar table_end_ = 0, table_end_value_ = 0;
};

template <typename Scalar>
Scalar eval_pressure(const PressureLaw<Scalar>& law, Scalar rho) {
  return law.pressure(rho);
}

template <typename Scalar>
Scalar eval_potential(const PressureLaw<Scalar>& law, Scalar rho) {
  return law.potential(rho);
}

// ---------------------------------------------------------------------------
// Splitting Pi_mu = P_mu + Q.

/// Septic smoothstep: C^3 at both ends, 0 below M and 1 above 2M.
template <typename Scalar>
Scalar cutoff(Scalar rho, Scalar M, int order = 0) {
  if (M <= 0) return order == 0 ? Scalar(1) : Scalar(0);
  if (rho <= M) return Scalar(0);
  if (rho >= 2 * M) return order == 0 ? Scalar(1) : Scalar(0);
  const Scalar t = (rho - M) / M;
  const Scalar u = 1 - t;
  switch (order) {
    case 0: return t * t * t * t * (35 - 84 * t + 70 * t * t - 20 * t * t * t);
    case 1: return 140 * t * t * t * u * u * u / M;
    case 2: return 420 * t * t * u * u * (1 - 2 * t) / (M * M);
    default: return 840 * t * u * (1 - 5 * t + 5 * t * t) / (M * M * M);
  }
}

/// P_mu = mu rho^Gamma/(Gamma-1) + chi(rho) f(rho) with f = Pi_mu - mu rho^Gamma/(Gamma-1),
/// Q = (1 - chi) f, so Q vanishes above 2M.
template <typename Scalar>
class PotentialSplit {
 public:
  PotentialSplit(PressureLaw<Scalar> law, Scalar M) : law_(std::move(law)), M_(M) {}

  const PressureLaw<Scalar>& law() const { return law_; }
  Scalar M() const { return M_; }
  Scalar support_bound() const { return 2 * M_; }
  bool trivial() const { return M_ <= 0; }
  Scalar lambda_q() const { return lambda_q_; }
  Scalar C_q() const { return C_q_; }

  Scalar P(Scalar rho, int order = 0) const {
    if (trivial()) return law_.potential(rho, order);
    Scalar v = mu_power(rho, order);
    if (rho <= M_) return v;
    for (int j = 0; j <= order; ++j) {
      const Scalar chi = cutoff(rho, M_, j);
      if (chi != 0) v += binomial(order, j) * chi * f(rho, order - j);
    }
    return v;
  }

  Scalar Q(Scalar rho, int order = 0) const {
    if (trivial() || rho >= 2 * M_) return Scalar(0);
    if (order == 0) return (1 - cutoff(rho, M_)) * f(rho, 0);
    return -cutoff(rho, M_, 1) * f(rho, 0) + (1 - cutoff(rho, M_)) * f(rho, 1);
  }

  Scalar p_mu(Scalar rho) const { return rho * P(rho, 1) - P(rho); }
  Scalar q(Scalar rho) const { return rho * Q(rho, 1) - Q(rho); }

  void set_constants(Scalar lambda_q, Scalar C_q) {
    lambda_q_ = lambda_q;
    C_q_ = C_q;
  }

 private:
  static Scalar binomial(int n, int k) {
    static constexpr int table[4][4] = {{1, 0, 0, 0}, {1, 1, 0, 0}, {1, 2, 1, 0}, {1, 3, 3, 1}};
    return Scalar(table[n][k]);
  }

  Scalar mu_power(Scalar rho, int order) const {
    const Scalar G = law_.Gamma(), c = law_.mu() / (G - 1);
    switch (order) {
      case 0: return c * std::pow(rho, G);
      case 1: return c * G * std::pow(rho, G - 1);
      case 2: return c * G * (G - 1) * std::pow(rho, G - 2);
      default: return c * G * (G - 1) * (G - 2) * std::pow(rho, G - 3);
    }
  }

  // f = Pi - mu rho/(Gamma - 1).
  Scalar f(Scalar rho, int order) const {
    Scalar v = law_.potential(rho, order, false);
    const Scalar c = law_.mu() / (law_.Gamma() - 1);
    if (order == 0) v -= c * rho;
    if (order == 1) v -= c;
    return v;
  }

  PressureLaw<Scalar> law_;
  Scalar M_;
  Scalar lambda_q_ = 0, C_q_ = 0;
};

struct SplitOptions {
  double scan_min = 1e-3;
  double scan_limit = 1e4;
  int scan_points = 400;
  double growth = 1.25;
  double safety = 1.1;
};

/// Certification grid: 200 log-spaced points on [1e-3, 1e3], refined by
/// uniform points over (0, 3M] to resolve the cutoff layer.
template <typename Scalar>
std::vector<Scalar> split_sample_grid(Scalar M, int log_points = 200) {
  std::vector<Scalar> grid;
  for (int i = 0; i < log_points; ++i)
    grid.push_back(std::pow(Scalar(10), Scalar(-3) + Scalar(6) * i / (log_points - 1)));
  if (M > 0)
    for (int i = 1; i <= 400; ++i) grid.push_back(3 * M * Scalar(i) / 400);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end(),
                         [](Scalar a, Scalar b) { return std::abs(a - b) <= 1e-12 * std::abs(b); }),
             grid.end());
  return grid;
}

/// Second divided differences of sampled values on a nonuniform grid.
template <typename Scalar, typename F>
std::vector<Scalar> second_divided_differences(const std::vector<Scalar>& x, F&& f) {
  std::vector<Scalar> values(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) values[i] = f(x[i]);
  std::vector<Scalar> d2;
  for (std::size_t i = 1; i + 1 < x.size(); ++i) {
    const Scalar right = (values[i + 1] - values[i]) / (x[i + 1] - x[i]);
    const Scalar left = (values[i] - values[i - 1]) / (x[i] - x[i - 1]);
    d2.push_back(2 * (right - left) / (x[i + 1] - x[i - 1]));
  }
  return d2;
}

namespace detail {

template <typename Scalar>
bool derivatives_nonnegative(const PotentialSplit<Scalar>& split, const std::vector<Scalar>& grid) {
  for (Scalar rho : grid) {
    for (int order = 0; order <= 3; ++order) {
      const Scalar v = split.P(rho, order);
      if (!std::isfinite(v)) return false;
      // Relative slack for cancellation inside the cutoff layer.
      const Scalar scale = 1e-12 * (1 + std::abs(split.P(rho, 0)) + std::abs(v));
      if (v < -scale) return false;
    }
  }
  return true;
}

}  // namespace detail

/// Builds P_mu and Q with the smallest admissible cutoff level M on a geometric
/// scan, then estimates lambda_q from sampled second differences.
template <typename Scalar>
PotentialSplit<Scalar> build_split(const PressureLaw<Scalar>& law, const SplitOptions& opt = {}) {
  if (!(law.mu() > 0)) throw DomainError("splitting requires mu > 0");
  if (!(law.Gamma() > 3)) throw DomainError("splitting requires Gamma > 3");

  const Scalar G = law.Gamma(), c = law.mu() / (G - 1);
  std::optional<PotentialSplit<Scalar>> chosen;

  // Monotone-convex case: Pi_mu itself qualifies.
  {
    PotentialSplit<Scalar> trivial(law, Scalar(0));
    if (detail::derivatives_nonnegative(trivial, split_sample_grid<Scalar>(Scalar(0))))
      chosen = trivial;
  }

  if (!chosen) {
    // R: above it all derivatives of Pi + mu rho^Gamma/(Gamma-1) are positive.
    Scalar R = Scalar(opt.scan_min);
    const auto g = [&](Scalar rho, int order) {
      Scalar v = law.potential(rho, order, false);
      if (order == 0) v += c * std::pow(rho, G);
      if (order == 1) v += c * G * std::pow(rho, G - 1);
      if (order == 2) v += c * G * (G - 1) * std::pow(rho, G - 2);
      if (order == 3) v += c * G * (G - 1) * (G - 2) * std::pow(rho, G - 3);
      return v;
    };
    const Scalar log_lo = std::log(Scalar(opt.scan_min)), log_hi = std::log(Scalar(opt.scan_limit));
    for (int i = 0; i < opt.scan_points; ++i) {
      const Scalar rho = std::exp(log_lo + (log_hi - log_lo) * i / (opt.scan_points - 1));
      bool positive = true;
      for (int order = 0; order <= 3 && positive; ++order) positive = g(rho, order) > 0;
      if (!positive) R = std::exp(log_lo + (log_hi - log_lo) * (i + 1) / (opt.scan_points - 1));
    }
    for (Scalar M = std::max(R, Scalar(1)); M <= Scalar(opt.scan_limit); M *= Scalar(opt.growth)) {
      PotentialSplit<Scalar> candidate(law, M);
      if (detail::derivatives_nonnegative(candidate, split_sample_grid(M))) {
        chosen = candidate;
        break;
      }
    }
    if (!chosen) {
      std::ostringstream msg;
      msg << "no admissible cutoff level M found below " << opt.scan_limit;
      throw ConstructionError(msg.str());
    }
  }

  PotentialSplit<Scalar> split = *chosen;
  const auto grid = split_sample_grid(split.M());
  const auto d2P = second_divided_differences(grid, [&](Scalar r) { return split.P(r); });
  const auto d2p = second_divided_differences(grid, [&](Scalar r) { return split.p_mu(r); });
  Scalar lambda(0);
  for (std::size_t i = 0; i < d2P.size(); ++i) {
    if (d2p[i] == 0) continue;
    if (!(d2P[i] > 0)) {
      throw ConstructionError("P_mu has a flat sampled second difference where p_mu bends; "
                              "lambda_q is unbounded");
    }
    lambda = std::max(lambda, std::abs(d2p[i]) / d2P[i]);
  }
  Scalar Cq(0);
  for (Scalar r : grid) Cq = std::max(Cq, std::abs(split.Q(r)) + std::abs(split.Q(r, 1)));
  split.set_constants(Scalar(opt.safety) * lambda, Cq);
  return split;
}

// ---------------------------------------------------------------------------
// Truncation and renormalization.

/// T(x) = x on [0,1], 1 + (x-1) - (x-1)^2/4 on [1,3], 2 beyond: the C^1 cubic
/// Hermite piece with T(1)=1, T'(1)=1, T(3)=2, T'(3)=0 (its cubic coefficient vanishes).
template <typename Scalar>
Scalar truncation_unit(Scalar x) {
  if (x <= 1) return x;
  if (x >= 3) return Scalar(2);
  const Scalar s = x - 1;
  return 1 + s - s * s / 4;
}

/// T_k(x) = k T(x/k).
template <typename Scalar>
Scalar truncation_T(Scalar k, Scalar x) {
  if (!(k >= 1)) throw DomainError("truncation level k must be >= 1");
  if (x < 0) throw DomainError("truncation argument must be nonnegative");
  return k * truncation_unit(x / k);
}

/// L_k(rho) = rho int_1^rho T_k(xi)/xi^2 dxi in closed form. Equals rho log rho on (0, k].
template <typename Scalar>
Scalar renorm_L(Scalar k, Scalar rho) {
  if (!(k >= 1)) throw DomainError("renormalization level k must be >= 1");
  if (rho < 0) throw DomainError("renormalization argument must be nonnegative");
  if (rho == 0) return Scalar(0);
  // Antiderivatives: 1/xi on (0,k]; (3/2)log xi - xi/(4k) + k/(4 xi) on [k,3k]; -2k/xi beyond.
  const auto middle = [k](Scalar xi) { return Scalar(1.5) * std::log(xi) - xi / (4 * k) + k / (4 * xi); };
  Scalar integral = std::log(std::min(rho, k));
  if (rho > k) integral += middle(std::min(rho, 3 * k)) - middle(k);
  if (rho > 3 * k) integral += 2 * k * (Scalar(1) / (3 * k) - Scalar(1) / rho);
  return rho * integral;
}

// ---------------------------------------------------------------------------
// Certification on sample grids.

/// Central difference with two Richardson levels (error O(h^6)).
template <typename Scalar, typename F>
Scalar richardson_derivative(F&& f, Scalar x, Scalar h) {
  const auto central = [&](Scalar step) { return (f(x + step) - f(x - step)) / (2 * step); };
  const Scalar d1 = central(h), d2 = central(h / 2), d4 = central(h / 4);
  const Scalar r1 = (4 * d2 - d1) / 3, r2 = (4 * d4 - d2) / 3;
  return (16 * r2 - r1) / 15;
}

template <typename Scalar>
std::vector<Scalar> log_grid(Scalar lo, Scalar hi, int count) {
  std::vector<Scalar> grid(count);
  for (int i = 0; i < count; ++i)
    grid[i] = lo * std::pow(hi / lo, Scalar(i) / Scalar(count - 1));
  return grid;
}

template <typename Scalar>
struct LawCertificate {
  Scalar identity_residual = 0;   // max |rho Pi' - Pi - pi_mu| / (1 + |pi_mu|)
  Scalar envelope_violation = 0;  // max excess over the growth envelope (<= 0 passes)
  Scalar derivative_ratio = 0;    // max |pi'|/rho^(gamma-1), |pi''|/rho^(gamma-2) for rho > 1
  bool positivity = true;         // pi(0) = 0 and pi > 0 on the grid
  bool has_split = false;
  Scalar M = 0, lambda_q = 0, C_q = 0;
  Scalar convexity_min = 0;       // min sampled second difference of lambda_q P +- p_mu
  Scalar split_identity_residual = 0;
  Scalar derivative_min = 0;      // min over the grid of P and its first three derivatives
  bool q_support_ok = true;

  bool passed(Scalar identity_tol = Scalar(1e-8), Scalar convexity_tol = Scalar(1e-10)) const {
    const bool base = identity_residual <= identity_tol && envelope_violation <= 0 && positivity;
    if (!has_split) return base;
    return base && convexity_min >= -convexity_tol && split_identity_residual <= identity_tol &&
           q_support_ok && derivative_min >= -convexity_tol;
  }
};

/// Runs the invariant suite for one law: rho Pi' - Pi = pi_mu by Richardson
/// differences on 200 log-spaced densities in [1e-3, 1e3], the growth
/// envelope, and (when mu > 0 and Gamma > 3) the splitting checks.
template <typename Scalar>
LawCertificate<Scalar> certify_law(const PressureLaw<Scalar>& law) {
  LawCertificate<Scalar> cert;
  const auto grid = log_grid(Scalar(1e-3), Scalar(1e3), 200);
  const auto& env = law.envelope();
  cert.positivity = law.base(Scalar(0)) == 0;
  cert.envelope_violation = -std::numeric_limits<Scalar>::max();
  for (Scalar rho : grid) {
    const Scalar h = std::min(Scalar(1e-2) * rho, Scalar(2e-3));
    const Scalar dPi = richardson_derivative([&](Scalar r) { return law.potential(r); }, rho, h);
    const Scalar p = law.pressure(rho);
    cert.identity_residual =
        std::max(cert.identity_residual, std::abs(rho * dPi - law.potential(rho) - p) / (1 + std::abs(p)));
    const Scalar base = law.base(rho);
    if (!(base > 0)) cert.positivity = false;
    const Scalar g = std::pow(rho, law.gamma());
    cert.envelope_violation = std::max(cert.envelope_violation, base - (env.C + env.a1 * g));
    cert.envelope_violation = std::max(cert.envelope_violation, (env.a2 * g - env.C) - base);
    if (rho > 1) {
      const Scalar ratio = std::max(std::abs(law.base(rho, 1)) / std::pow(rho, law.gamma() - 1),
                                    std::abs(law.base(rho, 2)) / std::pow(rho, law.gamma() - 2));
      cert.derivative_ratio = std::max(cert.derivative_ratio, ratio);
      cert.envelope_violation =
          std::max(cert.envelope_violation, ratio - env.C_derivative * (1 + Scalar(1e-12)));
    }
  }
  if (!(law.mu() > 0 && law.Gamma() > 3)) return cert;

  const auto split = build_split(law);
  cert.has_split = true;
  cert.M = split.M();
  cert.lambda_q = split.lambda_q();
  cert.C_q = split.C_q();
  const auto sgrid = split_sample_grid(split.M());
  const Scalar lq = split.lambda_q();
  const auto plus = second_divided_differences(sgrid, [&](Scalar r) { return lq * split.P(r) + split.p_mu(r); });
  const auto minus = second_divided_differences(sgrid, [&](Scalar r) { return lq * split.P(r) - split.p_mu(r); });
  cert.convexity_min = std::numeric_limits<Scalar>::max();
  for (std::size_t i = 0; i < plus.size(); ++i)
    cert.convexity_min = std::min({cert.convexity_min, plus[i], minus[i]});
  cert.derivative_min = std::numeric_limits<Scalar>::max();
  for (Scalar rho : sgrid) {
    for (int order = 0; order <= 3; ++order)
      cert.derivative_min = std::min(cert.derivative_min, split.P(rho, order));
    const Scalar p = law.pressure(rho);
    const Scalar total = split.p_mu(rho) + split.q(rho);
    cert.split_identity_residual = std::max(cert.split_identity_residual, std::abs(total - p) / (1 + std::abs(p)));
    if (rho >= split.support_bound() && (split.Q(rho) != 0 || split.Q(rho, 1) != 0)) cert.q_support_ok = false;
  }
  return cert;
}

}  // namespace torusflux
