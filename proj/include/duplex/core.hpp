#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace duplex {

/// Session-clock time in integer milliseconds.
using Millis = std::int64_t;

/// Raised when a caller breaks a documented precondition.
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

enum class DialogueState { Listen, Speak };

enum class Action { Continue, Switch };

/// kl / l2s / ks / s2l.
enum class TransitionKind { KeepListen, ListenToSpeak, KeepSpeak, SpeakToListen };

/// Complete/Incomplete are Listen-state labels, Backchannel/Interruption are
/// Speak-state labels.
enum class UtteranceLabel { Complete, Incomplete, Backchannel, Interruption };

struct Step {
    DialogueState state;
    TransitionKind kind;

    bool operator==(const Step&) const = default;
};

/// Continue keeps the state, Switch flips it.
Step apply_action(DialogueState state, Action action) noexcept;

bool label_valid_for(DialogueState state, UtteranceLabel label) noexcept;

/// Throws ContractViolation when the label belongs to the other state.
Action label_to_action(DialogueState state, UtteranceLabel label);

DialogueState source_state(TransitionKind kind) noexcept;
DialogueState target_state(TransitionKind kind) noexcept;

std::string_view to_string(DialogueState state) noexcept;
std::string_view to_string(Action action) noexcept;
std::string_view to_string(UtteranceLabel label) noexcept;
/// Short code ("kl", "l2s", "ks", "s2l").
std::string_view to_string(TransitionKind kind) noexcept;

std::optional<DialogueState> parse_state(std::string_view text) noexcept;
std::optional<Action> parse_action(std::string_view text) noexcept;
/// Case-insensitive.
std::optional<UtteranceLabel> parse_label(std::string_view text) noexcept;
std::optional<TransitionKind> parse_transition(std::string_view text) noexcept;

struct TimedTransition {
    Millis at = 0;
    TransitionKind kind = TransitionKind::KeepListen;

    bool operator==(const TimedTransition&) const = default;
};

/// One listen phase, optionally followed by one speak phase. A unit is closed
/// by s2l, which opens the next one.
struct DialogueUnit {
    std::int64_t unit_index = 0;
    Millis started_at = 0;
    std::vector<TimedTransition> transitions;

    DialogueState state() const noexcept;
    bool closed() const noexcept;

    bool operator==(const DialogueUnit&) const = default;
};

/// The ordered list of units for one session. Only the last unit is open.
class Dialogue {
public:
    explicit Dialogue(Millis started_at = 0);

    /// Appends the transition to the current unit; s2l closes the unit and
    /// opens the next one in Listen at `now`. Throws ContractViolation for a
    /// transition that does not start from the current state, or when time
    /// runs backwards.
    void advance(Millis now, TransitionKind kind);

    DialogueState state() const noexcept { return units_.back().state(); }
    const DialogueUnit& current() const noexcept { return units_.back(); }
    std::span<const DialogueUnit> units() const noexcept { return units_; }
    std::int64_t unit_index() const noexcept { return units_.back().unit_index; }

    bool operator==(const Dialogue&) const = default;

private:
    std::vector<DialogueUnit> units_;
};

/// Value-returning form of Dialogue::advance.
Dialogue advance(Dialogue dialogue, Millis now, TransitionKind kind);

}  // namespace duplex
