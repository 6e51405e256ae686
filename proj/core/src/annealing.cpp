#include "cnce/annealing.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cnce {

ScheduleKind parse_schedule_kind(const std::string& name) {
  if (name == "constant") return ScheduleKind::constant;
  if (name == "linear") return ScheduleKind::linear;
  if (name == "step") return ScheduleKind::step;
  if (name == "adaptive_validation") return ScheduleKind::adaptive_validation;
  if (name == "adaptive_loss") return ScheduleKind::adaptive_loss;
  throw std::invalid_argument("unknown schedule kind '" + name + "'");
}

std::string to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::constant: return "constant";
    case ScheduleKind::linear: return "linear";
    case ScheduleKind::step: return "step";
    case ScheduleKind::adaptive_validation: return "adaptive_validation";
    case ScheduleKind::adaptive_loss: return "adaptive_loss";
  }
  return "constant";
}

void Schedule::validate(double omega_upper, std::size_t candidates) const {
  if (!(omega_min >= 0.0 && omega_min <= omega_max && omega_upper <= 1.0))
    throw std::invalid_argument("Schedule: need 0 <= omega_min <= omega_max and omega_upper <= 1");
  if (adaptive() && !(delta > 0.0)) throw std::invalid_argument("Schedule: adaptive delta must be positive");
  const double reach = max_reachable();
  if (!(reach >= 0.0 && reach < omega_upper))
    throw std::invalid_argument("Schedule: omega must stay below omega_upper");
  const auto n = static_cast<double>(candidates);
  if (candidates > 0 && std::floor(reach * n) >= std::floor(omega_upper * n))
    throw std::invalid_argument("Schedule: omega_max leaves an empty ring slice for " + std::to_string(candidates) +
                                " candidates");
}

double Schedule::max_reachable() const {
  double hi = start_omega;
  switch (kind) {
    case ScheduleKind::constant: break;
    case ScheduleKind::linear: hi = std::max(hi, end_omega); break;
    case ScheduleKind::step:
      for (const auto& [epoch, omega] : breakpoints) hi = std::max(hi, omega);
      break;
    case ScheduleKind::adaptive_validation:
    case ScheduleKind::adaptive_loss: hi = omega_max; break;
  }
  return std::clamp(hi, omega_min, omega_max);
}

namespace {

double clamp(const Schedule& s, double v) { return std::clamp(v, s.omega_min, s.omega_max); }

double scheduled(const Schedule& s, std::size_t epoch) {
  switch (s.kind) {
    case ScheduleKind::constant: return s.start_omega;
    case ScheduleKind::linear: {
      if (s.horizon_epochs == 0 || epoch >= s.horizon_epochs) return s.end_omega;
      const double t = static_cast<double>(epoch) / static_cast<double>(s.horizon_epochs);
      return s.start_omega + (s.end_omega - s.start_omega) * t;
    }
    case ScheduleKind::step: {
      double v = s.start_omega;
      for (const auto& [at, omega] : s.breakpoints)
        if (at <= epoch) v = omega;
      return v;
    }
    default: return s.start_omega;
  }
}

}  // namespace

Annealer::Annealer(Schedule schedule) : schedule_(std::move(schedule)), current_(clamp(schedule_, schedule_.start_omega)) {}

double Annealer::omega(std::size_t epoch) const {
  if (schedule_.adaptive()) return current_;
  return clamp(schedule_, scheduled(schedule_, epoch));
}

double Annealer::adaptive_update(const FeedbackSignal& signal) {
  if (!schedule_.adaptive()) throw std::logic_error("adaptive_update: schedule '" + to_string(schedule_.kind) + "' is not adaptive");
  if (!history_.empty() && signal.index <= history_.back().index)
    throw std::invalid_argument("adaptive_update: signal indices must increase");
  const bool improved = history_.empty() || signal.value > history_.back().value;
  current_ = clamp(schedule_, current_ + (improved ? schedule_.delta : -schedule_.delta));
  history_.push_back(signal);
  return current_;
}

double omega_at(const Schedule& schedule, std::size_t epoch, std::span<const FeedbackSignal> history) {
  Annealer a(schedule);
  if (schedule.adaptive())
    for (const auto& s : history) a.adaptive_update(s);
  return a.omega(epoch);
}

}  // namespace cnce
