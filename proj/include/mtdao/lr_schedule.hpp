// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "mtdao/types.hpp"

namespace mtdao {

/// Learning-rate schedule: constant, or warmup-stable-decay with a linear warmup
/// from 0 and a 1-sqrt cooldown over the final `cooldown` steps.
class LRSchedule {
 public:
  enum class Kind { Constant, WSD };

  static LRSchedule constant(double eta);
  static LRSchedule wsd(double peak, Step warmup, Step total, Step cooldown);

  Kind kind() const { return kind_; }
  double peak() const { return peak_; }
  Step warmup() const { return warmup_; }
  Step total() const { return total_; }
  Step cooldown() const { return cooldown_; }

  /// Learning rate at 0-based step t. Throws when t is outside [0, total).
  double at(Step t) const;

 private:
  Kind kind_ = Kind::Constant;
  double peak_ = 0.0;
  Step warmup_ = 0;
  Step total_ = 0;
  Step cooldown_ = 0;
};

inline double lr_at(const LRSchedule& schedule, Step t) { return schedule.at(t); }

}  // namespace mtdao
