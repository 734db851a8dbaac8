// SPDX-License-Identifier: Apache-2.0
#include "mtdao/metrics.hpp"

#include <numeric>

namespace mtdao {

namespace {

std::optional<double> aggregate(std::vector<double> values, PanelAggregation how) {
  if (values.empty()) return std::nullopt;
  if (how == PanelAggregation::Mean)
    return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  if (values.size() % 2 == 1) return values[mid];
  const double upper = values[mid];
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

// Empty if any worker's pair is degenerate.
template <typename F>
std::optional<double> over_workers(std::size_t m, PanelAggregation how, F&& cosine_for) {
  std::vector<double> values;
  values.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    auto c = cosine_for(i);
    if (!c) return std::nullopt;
    values.push_back(*c);
  }
  return aggregate(std::move(values), how);
}

}  // namespace

Panels cosine_panels(const RoundSnapshot& s, PanelAggregation how) {
  const std::size_t m = s.x_start.size();
  if (m == 0 || s.x_end.size() != m || s.u_start.size() != m || s.u_end.size() != m)
    throw Error("cosine_panels: snapshot is missing per-worker states");

  std::vector<ParamVector> local_pg(m);
  for (std::size_t i = 0; i < m; ++i) local_pg[i] = s.x_start[i] - s.x_end[i];
  const ParamVector global_pg = average_state<double>(local_pg);
  const ParamVector global_mom =
      s.outer_momentum ? *s.outer_momentum : average_state<double>(std::span<const ParamVector>(s.u_end));

  Panels panels;
  panels[0] = over_workers(m, how, [&](std::size_t i) { return cosine_similarity(local_pg[i], global_mom); });
  panels[1] = over_workers(m, how, [&](std::size_t i) { return cosine_similarity(local_pg[i], s.u_end[i]); });
  panels[2] = over_workers(m, how, [&](std::size_t i) { return cosine_similarity(local_pg[i], global_pg); });
  panels[3] = over_workers(m, how, [&](std::size_t i) { return cosine_similarity(s.u_end[i], global_mom); });
  return panels;
}

std::optional<double> mi_estimate(std::span<const ParamVector> u_start, std::span<const ParamVector> u_end,
                                  std::size_t n_coords, std::uint64_t seed) {
  const std::size_t m = u_start.size();
  if (m < 3 || u_end.size() != m) throw Error("insufficient samples");
  const auto d = static_cast<std::size_t>(u_start.front().size());
  for (std::size_t i = 0; i < m; ++i) {
    if (static_cast<std::size_t>(u_start[i].size()) != d || static_cast<std::size_t>(u_end[i].size()) != d)
      throw Error("mi_estimate: dimension mismatch");
  }

  std::vector<std::size_t> coords(d);
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (n_coords > 0 && n_coords < d) {
    SplitMix64 rng(hash_combine(seed, 0x3141));
    // Partial Fisher-Yates: the first n_coords entries become a uniform sample.
    for (std::size_t i = 0; i < n_coords; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, d - 1);
      std::swap(coords[i], coords[pick(rng)]);
    }
    coords.resize(n_coords);
    std::sort(coords.begin(), coords.end());
  }

  const double inv_m = 1.0 / static_cast<double>(m);
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t c : coords) {
    const auto k = static_cast<Eigen::Index>(c);
    // Shift by the first worker so identical values give exactly zero spread.
    const double a0 = u_start[0](k), b0 = u_end[0](k);
    double mean_a = 0.0, mean_b = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      mean_a += u_start[i](k) - a0;
      mean_b += u_end[i](k) - b0;
    }
    mean_a *= inv_m;
    mean_b *= inv_m;
    double saa = 0.0, sbb = 0.0, sab = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double a = u_start[i](k) - a0 - mean_a;
      const double b = u_end[i](k) - b0 - mean_b;
      saa += a * a;
      sbb += b * b;
      sab += a * b;
    }
    if (!(saa > 0.0) || !(sbb > 0.0)) continue;
    const double r2 = std::min(sab * sab / (saa * sbb), kMaxCorrelationSquared);
    total += -0.5 * std::log1p(-r2);
    ++used;
  }
  if (used == 0) return std::nullopt;
  return total / static_cast<double>(used);
}

}  // namespace mtdao
