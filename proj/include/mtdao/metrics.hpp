// SPDX-License-Identifier: Apache-2.0
//
// Round-level measurements over worker states: relative change, cross-worker
// variance, pseudo-gradients, the four cosine panels, and a Gaussian plug-in
// mutual-information estimate between round-start and round-end momenta.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "mtdao/random.hpp"
#include "mtdao/sync.hpp"
#include "mtdao/types.hpp"

namespace mtdao {

/// ||s_end - s_start|| / ||s_start||. Throws on a zero-norm start.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar relative_change(const Eigen::MatrixBase<DerivedA>& s_start,
                                          const Eigen::MatrixBase<DerivedB>& s_end) {
  require_same_size(s_start, s_end, "relative_change");
  const auto denom = s_start.norm();
  if (!(denom > 0)) throw Error("undefined relative change");
  return (s_end - s_start).norm() / denom;
}

/// (1/M) sum_m ||s_m - mean||^2
template <typename Scalar>
Scalar cross_worker_variance(std::span<const Vector<Scalar>> states) {
  if (states.empty()) throw Error("cross_worker_variance: no workers");
  const Vector<Scalar> mean = average_state(states);
  Scalar acc(0);
  for (const auto& s : states) acc += (s - mean).squaredNorm();
  return acc / Scalar(static_cast<double>(states.size()));
}

/// x_end - x_start
template <typename DerivedA, typename DerivedB>
typename DerivedA::PlainObject pseudo_gradient(const Eigen::MatrixBase<DerivedA>& x_start,
                                               const Eigen::MatrixBase<DerivedB>& x_end) {
  require_same_size(x_start, x_end, "pseudo_gradient");
  return x_end - x_start;
}

/// Empty when either side has zero norm.
template <typename DerivedA, typename DerivedB>
std::optional<typename DerivedA::Scalar> cosine_similarity(const Eigen::MatrixBase<DerivedA>& a,
                                                           const Eigen::MatrixBase<DerivedB>& b) {
  require_same_size(a, b, "cosine_similarity");
  const auto na = a.norm();
  const auto nb = b.norm();
  if (!(na > 0) || !(nb > 0)) return std::nullopt;
  return std::clamp(a.dot(b) / (na * nb), typename DerivedA::Scalar(-1), typename DerivedA::Scalar(1));
}

enum class PanelAggregation { Mean, Median };

/// Per-worker states at the two ends of one communication round, captured before
/// the round-end synchronization.
struct RoundSnapshot {
  std::int64_t round = 0;
  std::vector<ParamVector> x_start, x_end;
  std::vector<ParamVector> u_start, u_end;
  /// Outer Nesterov buffer when that baseline is in use; otherwise the global
  /// momentum is the worker mean of u_end.
  std::optional<ParamVector> outer_momentum;
};

using Panels = std::array<std::optional<double>, 4>;

/// Cosine similarities of
///   (1) local pseudo-gradient vs global momentum,
///   (2) local pseudo-gradient vs local momentum,
///   (3) local vs global pseudo-gradient,
///   (4) local vs global momentum,
/// each aggregated over workers. Pseudo-gradients enter in descent orientation
/// (x_start - x_end) so they point the same way as the momenta and the outer buffer.
Panels cosine_panels(const RoundSnapshot& snapshot, PanelAggregation aggregation = PanelAggregation::Mean);

/// -0.5 ln(1 - r^2) cap: r^2 is clamped to 1 - 1e-12.
inline constexpr double kMaxCorrelationSquared = 1.0 - 1e-12;

/// Mean over sampled coordinates of the Gaussian MI -0.5 ln(1 - r^2), where r is the
/// Pearson correlation of the M worker values of that coordinate at round start
/// and round end. Coordinates with zero variance on either side are skipped; empty
/// when none remain. Throws when fewer than 3 workers are given.
std::optional<double> mi_estimate(std::span<const ParamVector> u_start, std::span<const ParamVector> u_end,
                                  std::size_t n_coords, std::uint64_t seed = 0);

}  // namespace mtdao
