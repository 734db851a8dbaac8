// SPDX-License-Identifier: Apache-2.0
#include "mtdao/lr_schedule.hpp"

#include <cmath>
#include <string>

namespace mtdao {

LRSchedule LRSchedule::constant(double eta) {
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw Error("learning rate must be finite and non-negative");
  LRSchedule s;
  s.kind_ = Kind::Constant;
  s.peak_ = eta;
  return s;
}

LRSchedule LRSchedule::wsd(double peak, Step warmup, Step total, Step cooldown) {
  if (!(peak >= 0.0) || !std::isfinite(peak)) throw Error("wsd: peak must be finite and non-negative");
  if (total <= 0) throw Error("wsd: total steps must be positive");
  if (warmup < 0 || cooldown < 0) throw Error("wsd: warmup and cooldown must be non-negative");
  if (warmup + cooldown > total) throw Error("wsd: warmup + cooldown exceeds total steps");
  LRSchedule s;
  s.kind_ = Kind::WSD;
  s.peak_ = peak;
  s.warmup_ = warmup;
  s.total_ = total;
  s.cooldown_ = cooldown;
  return s;
}

double LRSchedule::at(Step t) const {
  if (t < 0) throw Error("lr_at: negative step " + std::to_string(t));
  if (kind_ == Kind::Constant) return peak_;
  if (t >= total_) throw Error("lr_at: step " + std::to_string(t) + " outside schedule of " + std::to_string(total_));
  if (t < warmup_) return peak_ * static_cast<double>(t) / static_cast<double>(warmup_);
  const Step cool_start = total_ - cooldown_;
  if (t < cool_start) return peak_;
  const double frac = static_cast<double>(t - cool_start) / static_cast<double>(cooldown_);
  return peak_ * (1.0 - std::sqrt(frac));
}

}  // namespace mtdao
