#pragma once

// Runtime monitors: energy balance, effective viscous flux, the weight
// transport, Kolmogorov-type compactness functionals, oscillation defect,
// and the Poisson-based pressure monitor.

#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "torusflux/maximal.hpp"
#include "torusflux/scheme.hpp"

namespace torusflux {

// ---------------------------------------------------------------------------
// Energy and effective viscous flux

/// int (|u|^2/2 + Pi_mu(rho)) dx.
template <typename Scalar>
Scalar energy(const PeriodicField<Scalar>& rho, const PeriodicField<Scalar>& u, const PressureLaw<Scalar>& law) {
  PeriodicField<Scalar> density = potential_field(law, rho);
  density.values().col(0) += Scalar(0.5) * u.values().square().rowwise().sum();
  return density.integral();
}

template <typename Scalar>
Scalar energy(const SchemeState<Scalar>& state) {
  return energy(state.rho, state.u, state.law);
}

/// G = div u - [pi_mu(rho)]_eps.
template <typename Scalar>
PeriodicField<Scalar> effective_viscous_flux(const PeriodicField<Scalar>& rho, const PeriodicField<Scalar>& u,
                                             const PressureLaw<Scalar>& law, const Mollifier<Scalar>& mollifier) {
  PeriodicField<Scalar> G = div(u);
  G.values() -= mollifier(pressure_field(law, rho)).values();
  return G;
}

template <typename Scalar>
PeriodicField<Scalar> effective_viscous_flux(const SchemeState<Scalar>& state) {
  const Mollifier<Scalar> mol(state.grid(), {state.params.pressure_epsilon()});
  return effective_viscous_flux(state.rho, state.u, state.law, mol);
}

/// Tracks phi = (-Delta)^{-1} div u between calls and reports the residual of
/// d_t phi = -G by a backward difference. Only the zero-mean part of G enters,
/// since phi has zero mean by construction.
template <typename Scalar>
class EvfTracker {
 public:
  struct Sample {
    PeriodicField<Scalar> G;
    Scalar G_l2 = 0;
    std::optional<Scalar> residual_l2;  // empty until two samples exist
  };

  explicit EvfTracker(const Mollifier<Scalar>& mollifier) : mollifier_(mollifier) {}

  Sample update(const PeriodicField<Scalar>& rho, const PeriodicField<Scalar>& u, const PressureLaw<Scalar>& law,
                Scalar t) {
    Sample s;
    const PeriodicField<Scalar> divu = div(u);
    s.G = divu;
    s.G.values() -= mollifier_(pressure_field(law, rho)).values();
    s.G_l2 = l2_norm(s.G);
    PeriodicField<Scalar> phi = inv_laplacian(divu, true);
    if (prev_phi_ && t > prev_t_) {
      PeriodicField<Scalar> r(rho.grid(), 1);
      r.values() = (phi.values() - prev_phi_->values()) / (t - prev_t_) + (s.G.values() - s.G.mean());
      s.residual_l2 = l2_norm(r);
    }
    prev_phi_ = std::move(phi);
    prev_t_ = t;
    return s;
  }

 private:
  const Mollifier<Scalar>& mollifier_;
  std::optional<PeriodicField<Scalar>> prev_phi_;
  Scalar prev_t_ = 0;
};

// ---------------------------------------------------------------------------
// Weight transport

/// Lambda = c1 + c2 M(|grad u|) + c3 |G| + c4 M(rho^gamma).
template <typename Scalar>
struct WeightConstants {
  Scalar c1 = 1, c2 = 1, c3 = 1, c4 = 0;

  /// The form 2C(1 + M(|grad u|) + |G|).
  static WeightConstants from_evf_form(Scalar C) { return {2 * C, 2 * C, 2 * C, 0}; }
};

template <typename Scalar>
PeriodicField<Scalar> gradient_magnitude(const PeriodicField<Scalar>& u) {
  PeriodicField<Scalar> out(u.grid(), 1);
  for (const auto& d : jacobian(u)) out.values() += d.values().square();
  out.values() = out.values().sqrt();
  out.set_nonnegative(true);
  return out;
}

template <typename Scalar>
PeriodicField<Scalar> weight_rate(const PeriodicField<Scalar>& u, const PeriodicField<Scalar>& G,
                                  const WeightConstants<Scalar>& c, const PeriodicField<Scalar>* rho = nullptr,
                                  Scalar gamma = Scalar(1)) {
  PeriodicField<Scalar> lambda(u.grid(), 1, c.c1);
  if (c.c2 != 0) lambda.values() += c.c2 * maximal_function(gradient_magnitude(u)).values();
  if (c.c3 != 0) lambda.values() += c.c3 * G.values().abs();
  if (c.c4 != 0) {
    if (!rho) throw DomainError("c4 term needs the density");
    PeriodicField<Scalar> rg(u.grid(), 1);
    rg.values() = rho->values().max(Scalar(0)).pow(gamma);
    lambda.values() += c.c4 * maximal_function(rg).values();
  }
  return lambda;
}

/// Periodic multilinear interpolation of a scalar field at a physical point.
template <typename Scalar>
Scalar interpolate(const PeriodicField<Scalar>& f, const std::array<Scalar, 3>& x) {
  const auto& grid = f.grid();
  const int d = grid.dim();
  std::array<int, 3> base{0, 0, 0};
  std::array<Scalar, 3> frac{0, 0, 0};
  for (int a = 0; a < d; ++a) {
    const Scalar s = x[a] / grid.spacing();
    const Scalar fl = std::floor(s);
    base[a] = int(fl);
    frac[a] = s - fl;
  }
  Scalar acc(0);
  for (int corner = 0; corner < (1 << d); ++corner) {
    Scalar w(1);
    std::array<int, 3> idx = base;
    for (int a = 0; a < d; ++a) {
      const int bit = (corner >> a) & 1;
      idx[a] += bit;
      w *= bit ? frac[a] : 1 - frac[a];
    }
    acc += w * f(grid.flat_index(idx));
  }
  return acc;
}

/// Semi-Lagrangian trace-back with multilinear interpolation, then the exact
/// decay factor exp(-Lambda dt). Keeps 0 <= w <= 1.
template <typename Scalar>
PeriodicField<Scalar> weight_advect_decay(const PeriodicField<Scalar>& w, const PeriodicField<Scalar>& velocity,
                                          const PeriodicField<Scalar>& lambda, Scalar dt) {
  const auto& grid = w.grid();
  PeriodicField<Scalar> out(grid, 1);
  for (Eigen::Index i = 0; i < grid.points(); ++i) {
    auto x = grid.coordinates(i);
    for (int a = 0; a < grid.dim(); ++a) x[a] -= dt * velocity(i, a);
    const Scalar advected = std::clamp(interpolate(w, x), Scalar(0), Scalar(1));
    out(i) = advected * std::exp(-lambda(i) * dt);
  }
  out.set_nonnegative(true);
  return out;
}

template <typename Scalar>
PeriodicField<Scalar> weight_evolve(const PeriodicField<Scalar>& w, const PeriodicField<Scalar>& u,
                                    const PeriodicField<Scalar>& G, const WeightConstants<Scalar>& c, Scalar dt) {
  return weight_advect_decay(w, u, weight_rate(u, G, c), dt);
}

/// w0 = 1, or min(1, M / rho0) when a level M > 0 is given.
template <typename Scalar>
PeriodicField<Scalar> initial_weight(const PeriodicField<Scalar>& rho0, Scalar level = Scalar(0)) {
  PeriodicField<Scalar> w(rho0.grid(), 1, Scalar(1));
  if (level > 0)
    for (Eigen::Index i = 0; i < w.grid().points(); ++i)
      if (rho0(i) > level) w(i) = level / rho0(i);
  w.set_nonnegative(true);
  return w;
}

/// int rho |log w| dx.
template <typename Scalar>
Scalar rho_log_weight(const PeriodicField<Scalar>& rho, const PeriodicField<Scalar>& w) {
  PeriodicField<Scalar> d(rho.grid(), 1);
  for (Eigen::Index i = 0; i < rho.grid().points(); ++i)
    d(i) = rho(i) > 0 ? rho(i) * std::abs(std::log(w(i))) : Scalar(0);
  return d.integral();
}

/// C^1 modulus: |w| - sigma/2 for |w| > sigma, w^2/(2 sigma) otherwise.
template <typename Scalar>
Scalar smoothed_modulus(Scalar w, Scalar sigma) {
  if (!(sigma > 0)) throw DomainError("sigma must be positive");
  const Scalar a = std::abs(w);
  return a > sigma ? a - sigma / 2 : w * w / (2 * sigma);
}

/// Derivative of smoothed_modulus: sign(w) for |w| > sigma, w / sigma otherwise.
template <typename Scalar>
Scalar smoothed_sign(Scalar w, Scalar sigma) {
  if (!(sigma > 0)) throw DomainError("sigma must be positive");
  if (std::abs(w) > sigma) return w > 0 ? Scalar(1) : Scalar(-1);
  return w / sigma;
}

// ---------------------------------------------------------------------------
// Compactness functional

/// Kernel K_h(z) = (|z| + h)^{-d} for |z| <= 1/2 and (1/2 + h)^{-d} beyond,
/// with z measured in periods (unit torus).
template <typename Scalar>
struct KernelSpec {
  Scalar h = Scalar(0.25);
  Scalar sigma = Scalar(0);  // > 0: smoothed modulus replaces |.| (p = 1 only)
  Scalar p = Scalar(1);
  bool normalized = true;

  void validate() const {
    if (!(h > 0 && h < Scalar(0.5))) throw DomainError("kernel scale h must lie in (0, 1/2)");
    if (!(p > 0)) throw DomainError("kernel exponent p must be positive");
    if (sigma < 0) throw DomainError("sigma must be nonnegative");
  }
};

template <typename Scalar>
Scalar kernel_value(Scalar z, Scalar h, int dim) {
  const Scalar r = z <= Scalar(0.5) ? z + h : Scalar(0.5) + h;
  return std::pow(r, Scalar(-dim));
}

/// ||K_h||_{L^1} over the unit torus in closed form: the radial part over
/// |z| <= 1/2 plus the constant tail over the rest of the cube.
template <typename Scalar>
Scalar kernel_l1_exact(Scalar h, int dim) {
  const Scalar R = Scalar(0.5), a = R + h;
  const Scalar pi = std::numbers::pi_v<Scalar>;
  if (dim == 1) return 2 * std::log(a / h);
  if (dim == 2) {
    // 2 pi int_0^R r/(r+h)^2 dr = 2 pi [log(a/h) + h/a - 1]
    const Scalar disc = 2 * pi * (std::log(a / h) + h / a - 1);
    return disc + (1 - pi * R * R) / (a * a);
  }
  // 4 pi int_0^R r^2/(r+h)^3 dr with antiderivative log s + 2h/s - h^2/(2 s^2), s = r + h
  const auto F = [h](Scalar s) { return std::log(s) + 2 * h / s - h * h / (2 * s * s); };
  const Scalar ball = 4 * pi * (F(a) - F(h));
  return ball + (1 - Scalar(4) / 3 * pi * R * R * R) / (a * a * a);
}

/// Same norm by adaptive quadrature of the radial profile (cross-check).
template <typename Scalar>
Scalar kernel_l1_quadrature(Scalar h, int dim) {
  const Scalar R = Scalar(0.5), a = R + h;
  const Scalar pi = std::numbers::pi_v<Scalar>;
  const Scalar surface[4] = {0, 2, 2 * pi, 4 * pi};
  const auto radial = [&](Scalar r) { return surface[dim] * std::pow(r, Scalar(dim - 1)) * std::pow(r + h, Scalar(-dim)); };
  const Scalar ball_volume[4] = {0, 2 * R, pi * R * R, Scalar(4) / 3 * pi * R * R * R};
  return integrate(radial, Scalar(0), R, Scalar(1e-15), Scalar(1e-14)).value + (1 - ball_volume[dim]) / std::pow(a, Scalar(dim));
}

/// Snapshots at sample times with quadrature weights (time steps) and
/// optional weight fields.
template <typename Scalar>
struct TimeSeries {
  std::vector<Scalar> weights;
  std::vector<Scalar> times;
  std::vector<PeriodicField<Scalar>> fields;
  std::vector<PeriodicField<Scalar>> w;  // empty or one per snapshot

  void push(Scalar weight, PeriodicField<Scalar> f, Scalar t = Scalar(0)) {
    weights.push_back(weight);
    times.push_back(t);
    fields.push_back(std::move(f));
  }
  bool empty() const { return fields.empty(); }
  Scalar duration() const {
    Scalar t(0);
    for (Scalar x : weights) t += x;
    return t;
  }
};

namespace detail {

/// Minimal-image offset lengths in periods, per flat offset index.
template <typename Scalar>
Eigen::Array<Scalar, Eigen::Dynamic, 1> offset_lengths(const TorusGrid<Scalar>& grid) {
  Eigen::Array<Scalar, Eigen::Dynamic, 1> r(grid.points());
  const int n = grid.n();
  for (Eigen::Index i = 0; i < grid.points(); ++i) {
    const auto idx = grid.multi_index(i);
    Scalar s(0);
    for (int a = 0; a < grid.dim(); ++a) {
      const int j = idx[a] <= n / 2 ? idx[a] : idx[a] - n;
      s += Scalar(j * j);
    }
    r[i] = std::sqrt(s) / Scalar(n);
  }
  return r;
}

/// D(z) = sum_x w(x) |f(x) - f(x+z)|^p / N for every offset z.
template <typename Scalar>
Eigen::Array<Scalar, Eigen::Dynamic, 1> difference_profile(const PeriodicField<Scalar>& f,
                                                           const PeriodicField<Scalar>* w, const KernelSpec<Scalar>& spec) {
  const auto& grid = f.grid();
  const Eigen::Index N = grid.points();
  Eigen::Array<Scalar, Eigen::Dynamic, 1> D(N);
  if (spec.p == 2 && spec.sigma == 0) {
    // sum_x w (f(x) - f(x+z))^2 = sum w f^2 + sum_x w(x) f(x+z)^2 - 2 sum_x w(x) f(x) f(x+z):
    // correlations evaluated with FFTs.
    Eigen::Array<Scalar, Eigen::Dynamic, 1> wv = w ? Eigen::Array<Scalar, Eigen::Dynamic, 1>(w->component(0))
                                                   : Eigen::Array<Scalar, Eigen::Dynamic, 1>::Ones(N);
    const Eigen::Array<Scalar, Eigen::Dynamic, 1> fv = f.component(0);
    const auto correlate = [&](const Eigen::Array<Scalar, Eigen::Dynamic, 1>& a,
                               const Eigen::Array<Scalar, Eigen::Dynamic, 1>& b) {
      // c(z) = sum_x a(x) b(x+z)  <=>  c_hat = conj(a_hat) b_hat
      Spectrum<Scalar> ah = a.template cast<std::complex<Scalar>>(), bh = b.template cast<std::complex<Scalar>>();
      detail::transform(ah, grid, false);
      detail::transform(bh, grid, false);
      Spectrum<Scalar> ch = ah.conjugate() * bh;
      return inverse_real(std::move(ch), grid);
    };
    const Scalar s0 = pairwise_sum(Eigen::Array<Scalar, Eigen::Dynamic, 1>(wv * fv * fv).eval().data(), std::size_t(N));
    D = s0 + correlate(wv, fv * fv) - 2 * correlate(wv * fv, fv);
    D = D.max(Scalar(0)) / Scalar(N);
    D[0] = 0;
    return D;
  }
  std::vector<Scalar> terms(static_cast<std::size_t>(N));
  for (Eigen::Index z = 0; z < N; ++z) {
    const auto dz = grid.multi_index(z);
    for (Eigen::Index x = 0; x < N; ++x) {
      const auto ix = grid.multi_index(x);
      const Eigen::Index y = grid.flat_index({ix[0] + dz[0], ix[1] + dz[1], ix[2] + dz[2]});
      const Scalar diff = f(x) - f(y);
      Scalar v = spec.sigma > 0 ? smoothed_modulus(diff, spec.sigma) : std::abs(diff);
      if (spec.p != 1) v = std::pow(v, spec.p);
      terms[std::size_t(x)] = (w ? (*w)(x) : Scalar(1)) * v;
    }
    D[z] = pairwise_sum(terms.data(), terms.size()) / Scalar(N);
  }
  return D;
}

}  // namespace detail

/// Normalized functional for several h at once; profiles are computed once per snapshot.
template <typename Scalar>
std::vector<Scalar> kolmogorov_table(const TimeSeries<Scalar>& series, const std::vector<Scalar>& h_list,
                                     KernelSpec<Scalar> spec) {
  if (series.empty()) throw DomainError("kolmogorov functional needs at least one snapshot");
  for (Scalar h : h_list) {
    spec.h = h;
    spec.validate();
  }
  const auto& grid = series.fields.front().grid();
  const auto lengths = detail::offset_lengths(grid);
  const Scalar cell = Scalar(1) / Scalar(grid.points());
  std::vector<Scalar> out(h_list.size(), Scalar(0));
  for (std::size_t t = 0; t < series.fields.size(); ++t) {
    const PeriodicField<Scalar>* w = series.w.empty() ? nullptr : &series.w[t];
    const auto D = detail::difference_profile(series.fields[t], w, spec);
    for (std::size_t k = 0; k < h_list.size(); ++k) {
      Eigen::Array<Scalar, Eigen::Dynamic, 1> terms(grid.points());
      for (Eigen::Index z = 0; z < grid.points(); ++z) terms[z] = kernel_value(lengths[z], h_list[k], grid.dim()) * D[z];
      out[k] += series.weights[t] * pairwise_sum(terms.data(), std::size_t(terms.size())) * cell;
    }
  }
  if (spec.normalized) {
    for (std::size_t k = 0; k < h_list.size(); ++k) {
      Eigen::Array<Scalar, Eigen::Dynamic, 1> kv(grid.points());
      for (Eigen::Index z = 0; z < grid.points(); ++z) kv[z] = kernel_value(lengths[z], h_list[k], grid.dim());
      out[k] /= pairwise_sum(kv.data(), std::size_t(kv.size())) * cell;
    }
  }
  return out;
}

template <typename Scalar>
Scalar kolmogorov_functional(const TimeSeries<Scalar>& series, const KernelSpec<Scalar>& spec) {
  return kolmogorov_table(series, std::vector<Scalar>{spec.h}, spec).front();
}

// ---------------------------------------------------------------------------
// Oscillation defect

template <typename Scalar>
struct DefectResult {
  Scalar value = 0;
  Scalar k_at_max = 0;
  std::vector<std::pair<Scalar, Scalar>> per_k;  // (k, max over the sequence)
};

inline std::vector<double> default_k_list() { return {1, 2, 4, 8, 16}; }

/// max over k in k_list and over the sequence of
/// sum_t dt int |T_k(rho_i) - T_k(rho)|^alpha dx.
template <typename Scalar>
DefectResult<Scalar> oscillation_defect(const std::vector<TimeSeries<Scalar>>& sequence, const TimeSeries<Scalar>& limit,
                                        Scalar alpha, const std::vector<Scalar>& k_list) {
  if (sequence.empty()) throw DomainError("oscillation defect needs a nonempty sequence");
  if (k_list.empty()) throw DomainError("oscillation defect needs at least one truncation level");
  if (!(alpha > 0)) throw DomainError("alpha must be positive");
  DefectResult<Scalar> result;
  result.value = -1;
  for (Scalar k : k_list) {
    Scalar best(0);
    for (const auto& member : sequence) {
      if (member.fields.size() != limit.fields.size())
        throw DomainError("sequence member and limit have different snapshot counts");
      Scalar total(0);
      for (std::size_t t = 0; t < member.fields.size(); ++t) {
        const auto& a = member.fields[t];
        const auto& b = limit.fields[t];
        PeriodicField<Scalar> d(a.grid(), 1);
        for (Eigen::Index i = 0; i < a.grid().points(); ++i)
          d(i) = std::pow(std::abs(truncation_T(k, std::max(a(i), Scalar(0))) - truncation_T(k, std::max(b(i), Scalar(0)))), alpha);
        total += member.weights[t] * d.integral();
      }
      best = std::max(best, total);
    }
    result.per_k.emplace_back(k, best);
    if (best > result.value) {
      result.value = best;
      result.k_at_max = k;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Pressure integrability monitor

template <typename Scalar>
struct BogovskiiRecord {
  Scalar alpha = 0;
  Scalar mean_rho_alpha = 0;
  Scalar pressure_rho_alpha = 0;   // int pi_mu(rho) rho^alpha
  Scalar rho_Gamma_alpha = 0;      // int rho^(Gamma + alpha)
  Scalar transport_pairing = 0;    // int u . B(div(rho^alpha u))
  Scalar compression_pairing = 0;  // (alpha - 1) int u . B(rho^alpha div u - mean)
  Scalar mean_pressure_term = 0;   // <rho^alpha> int pi_mu(rho)
  Scalar viscous_pairing = 0;      // int grad u : grad^2 psi
  Scalar damping_pairing = 0;      // alpha delta int u . B(rho^(alpha+m-1) - mean)
};

/// B f = grad Delta^{-1} (f - <f>).
template <typename Scalar>
PeriodicField<Scalar> bogovskii_B(const PeriodicField<Scalar>& f) {
  PeriodicField<Scalar> psi = inv_laplacian(f, true);
  psi.values() *= -1;
  return grad(psi);
}

template <typename Scalar>
Scalar pairing(const PeriodicField<Scalar>& a, const PeriodicField<Scalar>& b) {
  PeriodicField<Scalar> d(a.grid(), 1);
  d.values().col(0) = (a.values() * b.values()).rowwise().sum();
  return d.integral();
}

/// Solves Delta psi = rho^alpha - <rho^alpha> and reports the pairings of the
/// momentum equation tested with grad psi at one time slice.
template <typename Scalar>
BogovskiiRecord<Scalar> bogovskii_monitor(const PeriodicField<Scalar>& rho, const PeriodicField<Scalar>& u,
                                          const PressureLaw<Scalar>& law, Scalar alpha, Scalar delta = Scalar(0),
                                          Scalar m = Scalar(1)) {
  if (!(alpha > 0)) throw DomainError("alpha must be positive");
  const auto& grid = rho.grid();
  BogovskiiRecord<Scalar> rec;
  rec.alpha = alpha;
  PeriodicField<Scalar> ra(grid, 1);
  ra.values() = rho.values().max(Scalar(0)).pow(alpha);
  rec.mean_rho_alpha = ra.mean();
  const PeriodicField<Scalar> p = pressure_field(law, rho);
  PeriodicField<Scalar> tmp(grid, 1);
  tmp.values() = p.values() * ra.values();
  rec.pressure_rho_alpha = tmp.integral();
  tmp.values() = rho.values().max(Scalar(0)).pow(law.Gamma() + alpha);
  rec.rho_Gamma_alpha = tmp.integral();
  rec.mean_pressure_term = rec.mean_rho_alpha * p.integral();

  // psi with Delta psi = rho^alpha - <rho^alpha>; grad psi = B(rho^alpha).
  const PeriodicField<Scalar> phi = bogovskii_B(ra);
  const auto hess = jacobian(phi);
  const auto du = jacobian(u);
  Scalar visc(0);
  for (std::size_t k = 0; k < hess.size(); ++k) visc += pairing(du[k], hess[k]);
  rec.viscous_pairing = visc;

  PeriodicField<Scalar> flux(grid, grid.dim());
  for (int a = 0; a < grid.dim(); ++a) flux.component(a) = ra.values().col(0) * u.component(a);
  rec.transport_pairing = pairing(u, bogovskii_B(div(flux)));
  tmp.values() = ra.values() * div(u).values();
  rec.compression_pairing = (alpha - 1) * pairing(u, bogovskii_B(tmp));
  if (delta > 0) {
    tmp.values() = rho.values().max(Scalar(0)).pow(alpha + m - 1);
    rec.damping_pairing = alpha * delta * pairing(u, bogovskii_B(tmp));
  }
  return rec;
}

// ---------------------------------------------------------------------------
// Exponents

template <typename Scalar>
struct ExponentTable {
  Scalar Gamma = 0, m = 0, p1 = 0, p2 = 0, s = 0, alpha = 0;
  bool p1_ok = false, p2_ok = false, s_ok = false;
  bool regime_ok = false;  // Gamma > 3

  bool all_strict() const { return p1_ok && p2_ok && s_ok; }
};

/// m = 5/2 Gamma + 3/2, p1 = (m-1)/Gamma, p2 = 2(m-1)/Gamma,
/// s = 2(m-1)/(m+Gamma-1), alpha = 13/20 Gamma - 1/20.
template <typename Scalar>
ExponentTable<Scalar> exponent_table(Scalar Gamma) {
  ExponentTable<Scalar> e;
  e.Gamma = Gamma;
  e.m = Scalar(2.5) * Gamma + Scalar(1.5);
  e.p1 = (e.m - 1) / Gamma;
  e.p2 = 2 * (e.m - 1) / Gamma;
  e.s = 2 * (e.m - 1) / (e.m + Gamma - 1);
  e.alpha = Scalar(13) / 20 * Gamma - Scalar(1) / 20;
  e.p1_ok = e.p1 > Scalar(2.5);
  e.p2_ok = e.p2 > Scalar(5);
  e.s_ok = e.s > Scalar(10) / 7;
  e.regime_ok = Gamma > 3;
  return e;
}

// ---------------------------------------------------------------------------
// Run monitor

template <typename Scalar>
struct DiagnosticsRecord {
  Scalar t = 0;
  long step = 0;
  Scalar mass = 0;
  Scalar energy = 0;
  Scalar enstrophy_integral = 0;
  Scalar damping_integral = 0;
  Scalar evf_l2 = 0;
  Scalar evf_residual = std::numeric_limits<Scalar>::quiet_NaN();
  Scalar u_L2H1 = 0;           // (int_0^t ||u||_{W^{1,2}}^2)^{1/2}
  Scalar u_LinfL2 = 0;         // max_t ||u||_2
  Scalar rho_Gamma_LinfL1 = 0; // max_t int rho^Gamma
  Scalar pressure_Lp1 = 0;     // ||pi_mu(rho)||_{L^{p1}} over [0, t] x torus
  Scalar pressure_Lp2 = 0;
  Scalar damping_Ls = 0;       // ||rho^m pi_mu'(rho)||_{L^s} over [0, t] x torus
  Scalar weight_min = 1, weight_max = 1;
  Scalar rho_logw_integral = 0;
  Scalar rho_lambda_budget = 0;
  Scalar min_rho = 0;
  int picard_iterations = 0;
  Scalar rho_Gamma_alpha_integral = 0;  // int_0^t int rho^(Gamma + alpha)
};

inline constexpr const char* kMonitorSchema = "torusflux.monitors/1";

inline const std::vector<std::string>& monitor_columns() {
  static const std::vector<std::string> cols = {
      "t", "step", "mass", "energy", "enstrophy_integral", "damping_integral", "evf_l2", "evf_residual",
      "u_L2H1", "u_LinfL2", "rho_Gamma_LinfL1", "pressure_Lp1", "pressure_Lp2", "damping_Ls",
      "weight_min", "weight_max", "rho_logw_integral", "rho_lambda_budget", "min_rho", "picard_iterations",
      "rho_Gamma_alpha_integral"};
  return cols;
}

inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename Scalar>
void write_monitor_header(std::ostream& out) {
  out << "# schema=" << kMonitorSchema << "\n";
  const auto& cols = monitor_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << "\n";
}

template <typename Scalar>
void write_monitor_row(std::ostream& out, const DiagnosticsRecord<Scalar>& r) {
  const double v[] = {double(r.t), double(r.step), double(r.mass), double(r.energy), double(r.enstrophy_integral),
                      double(r.damping_integral), double(r.evf_l2), double(r.evf_residual), double(r.u_L2H1),
                      double(r.u_LinfL2), double(r.rho_Gamma_LinfL1), double(r.pressure_Lp1), double(r.pressure_Lp2),
                      double(r.damping_Ls), double(r.weight_min), double(r.weight_max), double(r.rho_logw_integral),
                      double(r.rho_lambda_budget), double(r.min_rho), double(r.picard_iterations),
                      double(r.rho_Gamma_alpha_integral)};
  for (std::size_t i = 0; i < std::size(v); ++i) out << (i ? "," : "") << format_number(v[i]);
  out << "\n";
}

template <typename Scalar>
struct MonitorOptions {
  WeightConstants<Scalar> weight;
  Scalar weight_level = 0;   // > 0: w0 = min(1, level / rho0)
  int kernel_stride = 10;    // steps between snapshots kept for double-integral functionals
  bool keep_snapshots = true;
  bool track_weight = true;
};

/// Observer accumulating DiagnosticsRecords along a run. Time integrals are
/// updated every step; records are emitted on sampled steps.
template <typename Scalar>
class DiagnosticsMonitor : public RunObserver<Scalar> {
 public:
  DiagnosticsMonitor(const TorusGrid<Scalar>& grid, const SchemeParams<Scalar>& params, MonitorOptions<Scalar> options = {})
      : params_(params),
        options_(options),
        mollifier_(grid, {params.pressure_epsilon()}),
        evf_(mollifier_) {}

  const std::vector<DiagnosticsRecord<Scalar>>& records() const { return records_; }
  const TimeSeries<Scalar>& snapshots() const { return series_; }
  const std::optional<PeriodicField<Scalar>>& weight() const { return w_; }
  Scalar alpha() const { return alpha_; }

  /// Largest E(t_{j+1}) + increments - E(t_j), relative to E(t_j), over consecutive steps.
  Scalar energy_violation() const { return energy_violation_; }
  /// min over steps of (w_min, 1 - w_max): negative means a bound was broken.
  Scalar weight_bound_slack() const { return weight_slack_; }

  void on_start(const SchemeState<Scalar>& s) override {
    const auto table = exponent_table(s.law.Gamma());
    p1_ = table.p1;
    p2_ = table.p2;
    s_exp_ = table.s;
    alpha_ = table.alpha;
    acc_ = {};
    acc_.t = s.t;
    if (options_.track_weight) {
      w_ = initial_weight(s.rho, options_.weight_level);
      acc_.rho_logw_integral = rho_log_weight(s.rho, *w_);
      acc_.rho_lambda_budget = acc_.rho_logw_integral;
      acc_.weight_min = w_->min();
      acc_.weight_max = w_->max();
    }
    const auto evf = evf_.update(s.rho, s.u, s.law, s.t);
    G_ = evf.G;
    acc_.evf_l2 = evf.G_l2;
    fill_instantaneous(s, acc_);
    prev_energy_ = acc_.energy;
    records_.clear();
    records_.push_back(acc_);
    series_ = {};
    steps_since_snapshot_ = 0;
    if (options_.keep_snapshots) push_snapshot(s, Scalar(0));
  }

  void on_step(const SchemeState<Scalar>& before, const SchemeState<Scalar>& after, const StepTrace<Scalar>& trace,
               bool sample) override {
    const Scalar dt = trace.dt;
    ++step_;
    acc_.step = step_;
    acc_.t = after.t;
    acc_.picard_iterations = trace.picard_iterations;
    acc_.enstrophy_integral += trace.momentum.enstrophy_increment;
    Scalar damping(0);
    for (const auto& [in, out] : trace.continuity.damping)
      damping += potential_field(after.law, in).integral() - potential_field(after.law, out).integral();
    acc_.damping_integral += damping;

    // Weight: rate frozen at the start of the step, advected with the transport velocity.
    if (options_.track_weight) {
      const auto lambda = weight_rate(before.u, G_, options_.weight, &before.rho, before.law.gamma());
      w_ = weight_advect_decay(*w_, trace.transport_velocity, lambda, dt);
      PeriodicField<Scalar> rl(after.grid(), 1);
      rl.values() = after.rho.values() * lambda.values();
      acc_.rho_lambda_budget += dt * rl.integral();
      acc_.weight_min = std::min(acc_.weight_min, w_->min());
      acc_.weight_max = std::max(acc_.weight_max, w_->max());
      weight_slack_ = std::min({weight_slack_, w_->min(), 1 - w_->max()});
    }

    const auto evf = evf_.update(after.rho, after.u, after.law, after.t);
    G_ = evf.G;
    acc_.evf_l2 = evf.G_l2;
    if (evf.residual_l2) acc_.evf_residual = *evf.residual_l2;

    // Space-time norms by the right-endpoint rule.
    const auto& grid = after.grid();
    const PeriodicField<Scalar> p = pressure_field(after.law, after.rho);
    PeriodicField<Scalar> tmp(grid, 1);
    tmp.values() = p.values().abs().pow(p1_);
    lp1_ += dt * tmp.integral();
    tmp.values() = p.values().abs().pow(p2_);
    lp2_ += dt * tmp.integral();
    for (Eigen::Index i = 0; i < grid.points(); ++i) {
      const Scalar r = std::max(after.rho(i), Scalar(0));
      tmp(i) = std::pow(std::abs(std::pow(r, params_.m) * after.law.pressure(r, 1)), s_exp_);
    }
    ls_ += dt * tmp.integral();
    tmp.values() = after.u.values().square().rowwise().sum();
    h1_ += dt * (tmp.integral());
    h1_ += trace.momentum.enstrophy_increment;
    tmp.values() = after.rho.values().max(Scalar(0)).pow(after.law.Gamma() + alpha_);
    acc_.rho_Gamma_alpha_integral += dt * tmp.integral();

    fill_instantaneous(after, acc_);
    const Scalar increments = acc_.energy + trace.momentum.enstrophy_increment + damping - prev_energy_;
    energy_violation_ = std::max(energy_violation_, increments / std::max(std::abs(prev_energy_), Scalar(1e-300)));
    prev_energy_ = acc_.energy;

    if (options_.track_weight) acc_.rho_logw_integral = rho_log_weight(after.rho, *w_);

    ++steps_since_snapshot_;
    if (options_.keep_snapshots && (steps_since_snapshot_ >= options_.kernel_stride || sample_is_last(after))) {
      push_snapshot(after, dt * Scalar(steps_since_snapshot_));
      steps_since_snapshot_ = 0;
    }
    if (sample) records_.push_back(acc_);
  }

 private:
  bool sample_is_last(const SchemeState<Scalar>& s) const { return s.t >= params_.t_end; }

  void push_snapshot(const SchemeState<Scalar>& s, Scalar weight) {
    series_.push(weight, s.rho, s.t);
    if (w_) series_.w.push_back(*w_);
  }

  void fill_instantaneous(const SchemeState<Scalar>& s, DiagnosticsRecord<Scalar>& r) {
    r.mass = s.rho.integral();
    r.energy = energy(s);
    r.min_rho = s.rho.min();
    PeriodicField<Scalar> tmp(s.grid(), 1);
    tmp.values() = s.rho.values().max(Scalar(0)).pow(s.law.Gamma());
    r.rho_Gamma_LinfL1 = std::max(r.rho_Gamma_LinfL1, tmp.integral());
    r.u_LinfL2 = std::max(r.u_LinfL2, l2_norm(s.u));
    r.pressure_Lp1 = std::pow(lp1_, 1 / p1_);
    r.pressure_Lp2 = std::pow(lp2_, 1 / p2_);
    r.damping_Ls = std::pow(ls_, 1 / s_exp_);
    r.u_L2H1 = std::sqrt(h1_);
  }

  SchemeParams<Scalar> params_;
  MonitorOptions<Scalar> options_;
  Mollifier<Scalar> mollifier_;
  EvfTracker<Scalar> evf_;
  std::vector<DiagnosticsRecord<Scalar>> records_;
  DiagnosticsRecord<Scalar> acc_;
  TimeSeries<Scalar> series_;
  std::optional<PeriodicField<Scalar>> w_;
  PeriodicField<Scalar> G_;
  Scalar p1_ = 2.5, p2_ = 5, s_exp_ = 1.5, alpha_ = 1;
  Scalar lp1_ = 0, lp2_ = 0, ls_ = 0, h1_ = 0;
  Scalar prev_energy_ = 0;
  Scalar energy_violation_ = -std::numeric_limits<Scalar>::infinity();
  Scalar weight_slack_ = 1;
  long step_ = 0;
  int steps_since_snapshot_ = 0;
};

}  // namespace torusflux
