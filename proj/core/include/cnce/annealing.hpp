#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace cnce {

enum class ScheduleKind { constant, linear, step, adaptive_validation, adaptive_loss };

ScheduleKind parse_schedule_kind(const std::string& name);
std::string to_string(ScheduleKind kind);

/// Policy for the ring's lower threshold over training. Larger values mean
/// a smaller support and harder negatives.
struct Schedule {
  ScheduleKind kind = ScheduleKind::constant;
  double start_omega = 0.0;
  double end_omega = 0.0;
  std::size_t horizon_epochs = 100;
  /// (epoch, omega) pairs for `step`; the last breakpoint at or before the
  /// current epoch wins, start_omega before the first one.
  std::vector<std::pair<std::size_t, double>> breakpoints;
  double delta = 0.05;
  double omega_min = 0.0;
  double omega_max = 1.0;

  /// Largest omega the schedule can emit.
  double max_reachable() const;
  bool adaptive() const { return kind == ScheduleKind::adaptive_validation || kind == ScheduleKind::adaptive_loss; }

  /// Checks bounds and that no emitted value can empty a ring slice with
  /// upper threshold `omega_upper` over `candidates` entries.
  void validate(double omega_upper, std::size_t candidates) const;
};

struct FeedbackSignal {
  enum class Kind { validation_accuracy, negative_training_loss };
  Kind kind = Kind::validation_accuracy;
  double value = 0.0;
  std::size_t index = 0;  // epoch or step; strictly increasing
};

/// Stateful view of a schedule. Non-adaptive kinds are a pure function of
/// the epoch; adaptive kinds step omega by +delta when the signal improves on
/// the previous one (the first signal counts as an improvement) and by
/// -delta otherwise.
class Annealer {
 public:
  explicit Annealer(Schedule schedule);

  double omega(std::size_t epoch) const;
  /// Throws std::logic_error for non-adaptive schedules and
  /// std::invalid_argument for non-increasing signal indices.
  double adaptive_update(const FeedbackSignal& signal);

  const Schedule& schedule() const { return schedule_; }
  const std::vector<FeedbackSignal>& history() const { return history_; }

 private:
  Schedule schedule_;
  double current_;
  std::vector<FeedbackSignal> history_;
};

/// omega at `epoch`. For adaptive schedules the history is replayed from
/// start_omega; an empty history yields start_omega.
double omega_at(const Schedule& schedule, std::size_t epoch, std::span<const FeedbackSignal> history = {});

}  // namespace cnce
