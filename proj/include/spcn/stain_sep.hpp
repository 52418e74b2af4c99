#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "spcn/buffer_tracker.hpp"
#include "spcn/optics.hpp"

namespace spcn {

using Vec3 = std::array<double, 3>;

// 3x2 non-negative stain color basis. Rows are (red, green, blue) optical
// density components, columns are stains; after ordering column 0 is
// hematoxylin and column 1 eosin.
struct StainBasis {
  std::array<std::array<double, 2>, 3> w{};

  double operator()(int channel, int stain) const noexcept { return w[channel][stain]; }
  double& operator()(int channel, int stain) noexcept { return w[channel][stain]; }

  Vec3 column(int stain) const noexcept { return {w[0][stain], w[1][stain], w[2][stain]}; }
  void set_column(int stain, const Vec3& v) noexcept {
    for (int c = 0; c < 3; ++c) w[c][stain] = v[c];
  }

  static StainBasis from_columns(const Vec3& first, const Vec3& second) noexcept {
    StainBasis b;
    b.set_column(0, first);
    b.set_column(1, second);
    return b;
  }

  friend bool operator==(const StainBasis&, const StainBasis&) = default;
};

// Throws Error{invalid_argument} on negative entries or columns whose L2 norm
// differs from 1 by more than 1e-9.
void validate(const StainBasis& basis);

// Commonly used H&E optical density directions (not unit length as written).
inline constexpr Vec3 kReferenceHematoxylin{0.650, 0.704, 0.286};
inline constexpr Vec3 kReferenceEosin{0.072, 0.990, 0.105};

Vec3 unit(const Vec3& v);
StainBasis reference_basis();

// Angle between two vectors in degrees.
double angle_degrees(const Vec3& a, const Vec3& b);

using DensityStorage = std::vector<double, TrackingAllocator<double, 2>>;

// Non-negative stain densities, two per pixel, interleaved (stain 0, stain 1).
struct StainDensityBlock {
  std::int64_t width = 0;
  std::int64_t height = 0;
  DensityStorage data;

  StainDensityBlock() = default;
  StainDensityBlock(std::int64_t w, std::int64_t h) : width(w), height(h), data(static_cast<std::size_t>(w * h * 2)) {}

  std::int64_t pixel_count() const noexcept { return width * height; }
  double operator()(int stain, std::int64_t pixel) const noexcept { return data[pixel * 2 + stain]; }
};

// Per-pixel non-negative lasso:
//   min_h 1/2 ||v - W h||^2 + lambda ||h||_1   s.t. h >= 0
// by cyclic coordinate descent with exact soft-threshold updates. Once the
// support stops changing, the stationary point on that support is solved in
// closed form and accepted if it satisfies the optimality conditions.
class DensityCoder {
 public:
  DensityCoder(const StainBasis& basis, double lambda);

  std::array<double, 2> code(const double* od) const noexcept { return code(od, {0.0, 0.0}); }
  std::array<double, 2> code(const double* od, std::array<double, 2> warm) const noexcept;

  // 1/2 ||v - W h||^2 + lambda ||h||_1.
  double objective(const double* od, const std::array<double, 2>& h) const noexcept;

  const StainBasis& basis() const noexcept { return basis_; }
  double lambda() const noexcept { return lambda_; }

 private:
  bool try_support(const std::array<double, 2>& b, bool use0, bool use1, std::array<double, 2>& h) const noexcept;

  StainBasis basis_;
  double lambda_;
  double g00_, g01_, g11_;
};

StainDensityBlock code_densities(const ODBlock& od, const StainBasis& basis, double lambda);

struct OrderedBasis {
  StainBasis basis;
  // permutation[k] is the input column placed at output column k.
  std::array<int, 2> permutation{0, 1};
};

// Places the column with the larger (red - blue) component first. An exact
// tie keeps the input order.
OrderedBasis order_stains(const StainBasis& basis);

struct SnmfConfig {
  double lambda = 0.1;
  int max_outer_iters = 200;
  double rel_tol = 1e-6;
  std::uint64_t seed = 0;
};

void validate(const SnmfConfig& config);

struct BasisFit {
  StainBasis basis;  // ordered
  std::array<int, 2> permutation{0, 1};
  // Objective ||V - WH||_F^2 + lambda * sum(H) after the initial coding and
  // after every outer iteration.
  std::vector<double> objective_trace;
  int iterations = 0;
  bool converged = false;
  // Per ordered column: the sparse codes put (almost) no mass on it.
  std::array<bool, 2> unused{false, false};
  Warnings warnings;
};

// Called after every outer iteration with the (unordered) iterate.
using SnmfObserver = std::function<void(int iteration, const StainBasis& basis, double objective)>;

inline constexpr std::size_t kMinFitPixels = 10;
inline constexpr std::size_t kRecommendedFitPixels = 1000;

// Sparse NMF V ~= W H over an interleaved 3 x M OD sample by alternating
// minimization. Throws Error{insufficient_pixels} for M < 10.
BasisFit fit_basis_detailed(std::span<const double> od, const SnmfConfig& config,
                            const SnmfObserver& observer = {});

StainBasis fit_basis(std::span<const double> od, const SnmfConfig& config);

// ||V - W H||_F^2 + lambda * sum(H) for interleaved V (3/pixel) and H (2/pixel).
double snmf_objective(std::span<const double> od, std::span<const double> densities, const StainBasis& basis,
                      double lambda);

}  // namespace spcn
