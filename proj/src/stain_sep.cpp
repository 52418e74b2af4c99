#include "spcn/stain_sep.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "spcn/error.hpp"
#include "spcn/random.hpp"

namespace spcn {

void validate(const StainBasis& basis) {
  for (int s = 0; s < 2; ++s) {
    double norm2 = 0.0;
    for (int c = 0; c < 3; ++c) {
      const double v = basis(c, s);
      if (!(v >= 0.0) || !std::isfinite(v)) {
        throw Error(ErrorCode::invalid_argument, "stain basis entries must be finite and non-negative");
      }
      norm2 += v * v;
    }
    if (std::abs(std::sqrt(norm2) - 1.0) > 1e-9) {
      throw Error(ErrorCode::invalid_argument, "stain basis columns must have unit L2 norm");
    }
  }
}

Vec3 unit(const Vec3& v) {
  const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
  return {v[0] / n, v[1] / n, v[2] / n};
}

StainBasis reference_basis() {
  return StainBasis::from_columns(unit(kReferenceHematoxylin), unit(kReferenceEosin));
}

double angle_degrees(const Vec3& a, const Vec3& b) {
  const double dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
  const double na = std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
  const double nb = std::sqrt(b[0] * b[0] + b[1] * b[1] + b[2] * b[2]);
  return std::acos(std::clamp(dot / (na * nb), -1.0, 1.0)) * 180.0 / std::numbers::pi;
}

// ---------------------------------------------------------------------------
// Sparse coding

namespace {
constexpr int kMaxSweeps = 1000;
constexpr double kKktSlack = 1e-13;
}  // namespace

DensityCoder::DensityCoder(const StainBasis& basis, double lambda) : basis_(basis), lambda_(lambda) {
  validate(basis);
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw Error(ErrorCode::invalid_argument, "lambda must be finite and >= 0");
  }
  g00_ = g01_ = g11_ = 0.0;
  for (int c = 0; c < 3; ++c) {
    g00_ += basis(c, 0) * basis(c, 0);
    g01_ += basis(c, 0) * basis(c, 1);
    g11_ += basis(c, 1) * basis(c, 1);
  }
}

bool DensityCoder::try_support(const std::array<double, 2>& b, bool use0, bool use1,
                               std::array<double, 2>& h) const noexcept {
  const double r0 = b[0] - lambda_;
  const double r1 = b[1] - lambda_;
  if (use0 && use1) {
    const double det = g00_ * g11_ - g01_ * g01_;
    if (det <= 1e-12) return false;
    const double h0 = (g11_ * r0 - g01_ * r1) / det;
    const double h1 = (g00_ * r1 - g01_ * r0) / det;
    if (!(h0 > 0.0 && h1 > 0.0)) return false;
    h = {h0, h1};
    return true;
  }
  if (use0) {
    const double h0 = r0 / g00_;
    if (!(h0 > 0.0) || r1 - g01_ * h0 > kKktSlack) return false;
    h = {h0, 0.0};
    return true;
  }
  if (use1) {
    const double h1 = r1 / g11_;
    if (!(h1 > 0.0) || r0 - g01_ * h1 > kKktSlack) return false;
    h = {0.0, h1};
    return true;
  }
  if (r0 > kKktSlack || r1 > kKktSlack) return false;
  h = {0.0, 0.0};
  return true;
}

std::array<double, 2> DensityCoder::code(const double* od, std::array<double, 2> h) const noexcept {
  std::array<double, 2> b{0.0, 0.0};
  for (int c = 0; c < 3; ++c) {
    b[0] += basis_(c, 0) * od[c];
    b[1] += basis_(c, 1) * od[c];
  }
  h[0] = std::max(h[0], 0.0);
  h[1] = std::max(h[1], 0.0);
  bool prev0 = h[0] > 0.0, prev1 = h[1] > 0.0;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    const double old0 = h[0], old1 = h[1];
    h[0] = std::max(0.0, (b[0] - lambda_ - g01_ * h[1]) / g00_);
    h[1] = std::max(0.0, (b[1] - lambda_ - g01_ * h[0]) / g11_);
    const bool on0 = h[0] > 0.0, on1 = h[1] > 0.0;
    if (on0 == prev0 && on1 == prev1) {
      std::array<double, 2> exact;
      if (try_support(b, on0, on1, exact)) return exact;
    }
    prev0 = on0;
    prev1 = on1;
    const double scale = 1.0 + std::abs(h[0]) + std::abs(h[1]);
    if (std::abs(h[0] - old0) + std::abs(h[1] - old1) <= 1e-15 * scale) break;
  }
  return h;
}

double DensityCoder::objective(const double* od, const std::array<double, 2>& h) const noexcept {
  double residual = 0.0;
  for (int c = 0; c < 3; ++c) {
    const double r = od[c] - basis_(c, 0) * h[0] - basis_(c, 1) * h[1];
    residual += r * r;
  }
  return 0.5 * residual + lambda_ * (std::abs(h[0]) + std::abs(h[1]));
}

StainDensityBlock code_densities(const ODBlock& od, const StainBasis& basis, double lambda) {
  const DensityCoder coder(basis, lambda);
  StainDensityBlock out(od.width, od.height);
  const std::int64_t n = od.pixel_count();
  for (std::int64_t i = 0; i < n; ++i) {
    const auto h = coder.code(od.data.data() + i * 3);
    out.data[i * 2] = h[0];
    out.data[i * 2 + 1] = h[1];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stain ordering

OrderedBasis order_stains(const StainBasis& basis) {
  const double key0 = basis(0, 0) - basis(2, 0);
  const double key1 = basis(0, 1) - basis(2, 1);
  OrderedBasis out{basis, {0, 1}};
  if (key1 > key0) {
    out.basis = StainBasis::from_columns(basis.column(1), basis.column(0));
    out.permutation = {1, 0};
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sparse NMF

void validate(const SnmfConfig& config) {
  if (!(config.lambda >= 0.0) || !std::isfinite(config.lambda)) {
    throw Error(ErrorCode::invalid_argument, "lambda must be finite and >= 0");
  }
  if (config.max_outer_iters < 1) throw Error(ErrorCode::invalid_argument, "max_outer_iters must be >= 1");
  if (!(config.rel_tol > 0.0)) throw Error(ErrorCode::invalid_argument, "rel_tol must be > 0");
}

double snmf_objective(std::span<const double> od, std::span<const double> densities, const StainBasis& basis,
                      double lambda) {
  const std::size_t m = od.size() / 3;
  long double residual = 0.0L;
  long double l1 = 0.0L;
  for (std::size_t i = 0; i < m; ++i) {
    const double h0 = densities[i * 2], h1 = densities[i * 2 + 1];
    for (int c = 0; c < 3; ++c) {
      const double r = od[i * 3 + c] - basis(c, 0) * h0 - basis(c, 1) * h1;
      residual += static_cast<long double>(r) * r;
    }
    l1 += static_cast<long double>(std::abs(h0)) + std::abs(h1);
  }
  return static_cast<double>(residual + static_cast<long double>(lambda) * l1);
}

namespace {

StainBasis initial_basis(std::uint64_t seed) {
  Rng rng(seed);
  Vec3 h = unit(kReferenceHematoxylin);
  Vec3 e = unit(kReferenceEosin);
  for (auto& v : h) v += rng.uniform(0.0, 0.05);
  for (auto& v : e) v += rng.uniform(0.0, 0.05);
  return StainBasis::from_columns(unit(h), unit(e));
}

// H-step. The coder minimizes 1/2||v - Wh||^2 + mu|h|, so mu = lambda / 2
// minimizes the unhalved objective.
void update_densities(std::span<const double> od, std::vector<double>& h, const StainBasis& basis, double lambda) {
  const DensityCoder coder(basis, lambda / 2.0);
  const std::size_t m = od.size() / 3;
  for (std::size_t i = 0; i < m; ++i) {
    const auto coded = coder.code(od.data() + i * 3, {h[i * 2], h[i * 2 + 1]});
    h[i * 2] = coded[0];
    h[i * 2 + 1] = coded[1];
  }
}

// W-step: each column in turn is replaced by the exact minimizer of the
// objective over {w >= 0, ||w|| = 1} with everything else fixed. Returns the
// per-stain squared density mass (diagonal of H H^T).
std::array<double, 2> update_basis(std::span<const double> od, const std::vector<double>& h, StainBasis& basis) {
  const std::size_t m = od.size() / 3;
  std::array<std::array<long double, 2>, 3> vht{};
  std::array<std::array<long double, 2>, 2> hht{};
  for (std::size_t i = 0; i < m; ++i) {
    const long double h0 = h[i * 2], h1 = h[i * 2 + 1];
    for (int c = 0; c < 3; ++c) {
      vht[c][0] += od[i * 3 + c] * h0;
      vht[c][1] += od[i * 3 + c] * h1;
    }
    hht[0][0] += h0 * h0;
    hht[0][1] += h0 * h1;
    hht[1][1] += h1 * h1;
  }
  hht[1][0] = hht[0][1];
  for (int j = 0; j < 2; ++j) {
    if (hht[j][j] <= 0.0L) continue;  // unused stain: objective does not depend on this column
    const int k = 1 - j;
    Vec3 g;
    for (int c = 0; c < 3; ++c) {
      g[c] = static_cast<double>(vht[c][j] - static_cast<long double>(basis(c, k)) * hht[k][j]);
    }
    Vec3 positive{std::max(g[0], 0.0), std::max(g[1], 0.0), std::max(g[2], 0.0)};
    const double norm = std::sqrt(positive[0] * positive[0] + positive[1] * positive[1] + positive[2] * positive[2]);
    if (norm > 0.0) {
      basis.set_column(j, {positive[0] / norm, positive[1] / norm, positive[2] / norm});
    } else {
      const auto best = std::max_element(g.begin(), g.end()) - g.begin();
      Vec3 e{0.0, 0.0, 0.0};
      e[best] = 1.0;
      basis.set_column(j, e);
    }
  }
  return {static_cast<double>(hht[0][0]), static_cast<double>(hht[1][1])};
}

}  // namespace

BasisFit fit_basis_detailed(std::span<const double> od, const SnmfConfig& config, const SnmfObserver& observer) {
  validate(config);
  if (od.size() % 3 != 0) throw Error(ErrorCode::invalid_argument, "OD sample must hold 3 values per pixel");
  const std::size_t m = od.size() / 3;
  if (m < kMinFitPixels) {
    throw Error(ErrorCode::insufficient_pixels,
                "insufficient pixels for basis estimation (" + std::to_string(m) + " < " +
                    std::to_string(kMinFitPixels) + ")");
  }
  BasisFit fit;
  if (m < kRecommendedFitPixels) {
    fit.warnings.push_back("only " + std::to_string(m) + " pixels for basis estimation; at least " +
                           std::to_string(kRecommendedFitPixels) + " recommended");
  }

  StainBasis basis = initial_basis(config.seed);
  std::vector<double> h(m * 2, 0.0);
  update_densities(od, h, basis, config.lambda);
  double previous = snmf_objective(od, h, basis, config.lambda);
  fit.objective_trace.push_back(previous);

  StainBasis best_basis = basis;
  double best_objective = previous;
  std::array<double, 2> mass{0.0, 0.0};

  for (int iter = 1; iter <= config.max_outer_iters; ++iter) {
    if (iter > 1) update_densities(od, h, basis, config.lambda);
    mass = update_basis(od, h, basis);
    const double current = snmf_objective(od, h, basis, config.lambda);
    fit.objective_trace.push_back(current);
    fit.iterations = iter;
    if (observer) observer(iter, basis, current);
    if (current <= best_objective) {
      best_objective = current;
      best_basis = basis;
    }
    const double scale = std::max(std::abs(previous), std::numeric_limits<double>::min());
    if (std::abs(previous - current) <= config.rel_tol * scale) {
      fit.converged = true;
      break;
    }
    previous = current;
  }

  if (!fit.converged) {
    std::ostringstream msg;
    msg << "sparse NMF did not converge within " << config.max_outer_iters
        << " iterations; returning the best iterate (possible degenerate stain)";
    fit.warnings.push_back(msg.str());
  }
  const double total_mass = mass[0] + mass[1];
  std::array<bool, 2> unused{};
  for (int j = 0; j < 2; ++j) {
    if (total_mass <= 0.0 || mass[j] <= 1e-6 * total_mass) {
      unused[j] = true;
      fit.warnings.push_back("stain column " + std::to_string(j) +
                             " is (nearly) unused; input may contain a single stain");
    }
  }

  const auto ordered = order_stains(best_basis);
  fit.basis = ordered.basis;
  fit.permutation = ordered.permutation;
  for (int k = 0; k < 2; ++k) fit.unused[k] = unused[ordered.permutation[k]];
  return fit;
}

StainBasis fit_basis(std::span<const double> od, const SnmfConfig& config) {
  return fit_basis_detailed(od, config).basis;
}

}  // namespace spcn
