#include "msnode/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace msnode {

void adam_update(Vec& theta, const Vec& g, AdamState& state, double lr, const AdamOptions& opt) {
  require_length(g.size(), theta.size(), "adam_update gradient");
  if (state.m.size() != theta.size()) state = AdamState(theta.size());
  if (!g.allFinite()) throw NonFiniteError("adam_update: non-finite gradient");
  ++state.t;
  state.m = opt.beta1 * state.m + (1.0 - opt.beta1) * g;
  state.v = opt.beta2 * state.v + (1.0 - opt.beta2) * g.cwiseAbs2();
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.t));
  theta.array() -= lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + opt.eps);
}

LrSchedule::LrSchedule(LrScheduleOptions opt)
    : opt_(opt), lr_(opt.initial), best_(std::numeric_limits<double>::infinity()) {
  if (!(opt_.initial > 0.0)) throw std::invalid_argument("LrSchedule: initial rate must be positive");
  if (!(opt_.factor > 0.0 && opt_.factor < 1.0)) {
    throw std::invalid_argument("LrSchedule: factor must lie in (0, 1)");
  }
  if (opt_.patience < 0) throw std::invalid_argument("LrSchedule: negative patience");
  if (opt_.regress_factor < 0.0 || (opt_.regress_factor > 0.0 && opt_.regress_factor <= 1.0)) {
    throw std::invalid_argument("LrSchedule: regress_factor must be 0 or above 1");
  }
}

double LrSchedule::step(Index epoch, double loss) {
  auto decay = [&] {
    const double next = std::max(lr_ * opt_.factor, opt_.floor);
    if (next < lr_) {
      lr_ = next;
      decays_.push_back(epoch);
    }
    regress_count_ = 0;
    last_improvement_ = epoch;
  };
  const bool regressed = opt_.regress_factor > 0.0 && loss > opt_.regress_factor * best_;
  regress_count_ = regressed ? regress_count_ + 1 : 0;
  if (loss < best_ * (1.0 - opt_.min_improvement) || !std::isfinite(best_)) {
    best_ = loss;
    last_improvement_ = epoch;
  } else if (regressed && regress_count_ >= std::max<Index>(opt_.regress_patience, 1)) {
    decay();
    best_ = loss;
  } else if (opt_.patience > 0 && epoch - last_improvement_ >= opt_.patience) {
    decay();
    best_ = std::min(best_, loss);
  }
  return lr_;
}

double LrSchedule::lr_at(Index epoch) const {
  double lr = opt_.initial;
  for (Index e : decays_) {
    if (e > epoch) break;
    lr = std::max(lr * opt_.factor, opt_.floor);
  }
  return lr;
}

}  // namespace msnode
