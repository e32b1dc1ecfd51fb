#pragma once

#include <cstddef>
#include <vector>

namespace hcanet {

/// Records the discrete choices made by piecewise operations (activation sides, |x| signs,
/// bilinear cells) and replays them on later evaluations. Replaying pins every branch, so the
/// evaluated function becomes smooth in its inputs and agrees with the original at the point
/// where the choices were recorded. Used by finite-difference gradient checks; idle otherwise.
class BranchTape {
 public:
  enum class Mode { kOff, kRecord, kReplay };

  /// The active tape of this thread, or nullptr.
  static BranchTape* active() noexcept;

  /// Returns `natural` when idle or recording (recording it), the recorded choice when replaying.
  long choose(long natural);

  Mode mode() const noexcept { return mode_; }
  std::size_t size() const noexcept { return choices_.size(); }
  std::size_t consumed() const noexcept { return cursor_; }

  /// RAII activation: installs `tape` for this thread in `mode` and restores the previous one.
  class Scope {
   public:
    Scope(BranchTape& tape, Mode mode);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    BranchTape* previous_;
  };

 private:
  Mode mode_ = Mode::kOff;
  std::vector<long> choices_;
  std::size_t cursor_ = 0;
};

/// Shorthand for `BranchTape::active()->choose(natural)` that is a no-op without a tape.
inline long pinned_branch(long natural) {
  BranchTape* tape = BranchTape::active();
  return tape ? tape->choose(natural) : natural;
}

}  // namespace hcanet
