#include "hcanet/branch_tape.hpp"

#include "hcanet/errors.hpp"

namespace hcanet {

namespace {
thread_local BranchTape* g_active = nullptr;
}

BranchTape* BranchTape::active() noexcept { return g_active; }

long BranchTape::choose(long natural) {
  switch (mode_) {
    case Mode::kOff:
      return natural;
    case Mode::kRecord:
      choices_.push_back(natural);
      return natural;
    case Mode::kReplay:
      if (cursor_ >= choices_.size()) {
        throw ArgumentError("BranchTape: replay asked for more choices than were recorded");
      }
      return choices_[cursor_++];
  }
  return natural;
}

BranchTape::Scope::Scope(BranchTape& tape, Mode mode) : previous_(g_active) {
  if (mode == Mode::kRecord) tape.choices_.clear();
  tape.mode_ = mode;
  tape.cursor_ = 0;
  g_active = &tape;
}

BranchTape::Scope::~Scope() {
  g_active->mode_ = Mode::kOff;
  g_active = previous_;
}

}  // namespace hcanet
