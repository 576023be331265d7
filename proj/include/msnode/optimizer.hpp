#pragma once

#include <vector>

#include "msnode/types.hpp"

namespace msnode {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Vec m;
  Vec v;
  Index t = 0;

  explicit AdamState(Index size = 0) : m(Vec::Zero(size)), v(Vec::Zero(size)) {}
};

// One bias-corrected Adam step on theta along the descent direction of g.
// The shooting trainer passes g = -Δ, so the update moves along the
// condensed step.
void adam_update(Vec& theta, const Vec& g, AdamState& state, double lr,
                 const AdamOptions& opt = {});

// Learning rate that halves whenever the loss fails to improve by a relative
// `min_improvement` over `patience` epochs, never going below `floor`.
// It also halves when the loss stays above `regress_factor` times the best
// value seen for `regress_patience` consecutive epochs, after which the loss
// at that epoch becomes the new reference. regress_factor = 0 (the default)
// turns this off; patience = 0 with regress_factor = 0 keeps the rate constant.
struct LrScheduleOptions {
  double initial = 0.01;
  double factor = 0.5;
  Index patience = 100;
  double min_improvement = 0.01;
  double floor = 1e-4;
  double regress_factor = 0.0;
  Index regress_patience = 5;
};

class LrSchedule {
 public:
  explicit LrSchedule(LrScheduleOptions opt = {});

  // Rate to use for epoch `epoch` (0-based), given the loss observed before it.
  double step(Index epoch, double loss);
  double current() const { return lr_; }
  // Rate that was in force at a past epoch.
  double lr_at(Index epoch) const;
  const std::vector<Index>& decay_epochs() const { return decays_; }
  const LrScheduleOptions& options() const { return opt_; }

 private:
  LrScheduleOptions opt_;
  double lr_;
  double best_;
  Index last_improvement_ = 0;
  Index regress_count_ = 0;
  std::vector<Index> decays_;
};

}  // namespace msnode
