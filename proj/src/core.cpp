#include "duplex/core.hpp"

#include <algorithm>
#include <cctype>
#include <string>

namespace duplex {

Step apply_action(DialogueState state, Action action) noexcept {
    if (state == DialogueState::Listen) {
        return action == Action::Continue
                   ? Step{DialogueState::Listen, TransitionKind::KeepListen}
                   : Step{DialogueState::Speak, TransitionKind::ListenToSpeak};
    }
    return action == Action::Continue
               ? Step{DialogueState::Speak, TransitionKind::KeepSpeak}
               : Step{DialogueState::Listen, TransitionKind::SpeakToListen};
}

bool label_valid_for(DialogueState state, UtteranceLabel label) noexcept {
    switch (label) {
        case UtteranceLabel::Complete:
        case UtteranceLabel::Incomplete:
            return state == DialogueState::Listen;
        case UtteranceLabel::Backchannel:
        case UtteranceLabel::Interruption:
            return state == DialogueState::Speak;
    }
    return false;
}

Action label_to_action(DialogueState state, UtteranceLabel label) {
    if (!label_valid_for(state, label)) {
        throw ContractViolation(std::string("label ") + std::string(to_string(label)) +
                                " is not valid in state " + std::string(to_string(state)));
    }
    switch (label) {
        case UtteranceLabel::Complete:
        case UtteranceLabel::Interruption:
            return Action::Switch;
        case UtteranceLabel::Incomplete:
        case UtteranceLabel::Backchannel:
            return Action::Continue;
    }
    return Action::Continue;
}

DialogueState source_state(TransitionKind kind) noexcept {
    return kind == TransitionKind::KeepListen || kind == TransitionKind::ListenToSpeak
               ? DialogueState::Listen
               : DialogueState::Speak;
}

DialogueState target_state(TransitionKind kind) noexcept {
    return kind == TransitionKind::KeepListen || kind == TransitionKind::SpeakToListen
               ? DialogueState::Listen
               : DialogueState::Speak;
}

std::string_view to_string(DialogueState state) noexcept {
    return state == DialogueState::Listen ? "listen" : "speak";
}

std::string_view to_string(Action action) noexcept {
    return action == Action::Continue ? "continue" : "switch";
}

std::string_view to_string(UtteranceLabel label) noexcept {
    switch (label) {
        case UtteranceLabel::Complete: return "complete";
        case UtteranceLabel::Incomplete: return "incomplete";
        case UtteranceLabel::Backchannel: return "backchannel";
        case UtteranceLabel::Interruption: return "interruption";
    }
    return "?";
}

std::string_view to_string(TransitionKind kind) noexcept {
    switch (kind) {
        case TransitionKind::KeepListen: return "kl";
        case TransitionKind::ListenToSpeak: return "l2s";
        case TransitionKind::KeepSpeak: return "ks";
        case TransitionKind::SpeakToListen: return "s2l";
    }
    return "?";
}

namespace {

std::string lowered(std::string_view text) {
    std::string out(text);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

}  // namespace

std::optional<DialogueState> parse_state(std::string_view text) noexcept {
    const auto t = lowered(text);
    if (t == "listen") return DialogueState::Listen;
    if (t == "speak") return DialogueState::Speak;
    return std::nullopt;
}

std::optional<Action> parse_action(std::string_view text) noexcept {
    const auto t = lowered(text);
    if (t == "continue") return Action::Continue;
    if (t == "switch") return Action::Switch;
    return std::nullopt;
}

std::optional<UtteranceLabel> parse_label(std::string_view text) noexcept {
    const auto t = lowered(text);
    if (t == "complete") return UtteranceLabel::Complete;
    if (t == "incomplete") return UtteranceLabel::Incomplete;
    if (t == "backchannel") return UtteranceLabel::Backchannel;
    if (t == "interruption") return UtteranceLabel::Interruption;
    return std::nullopt;
}

std::optional<TransitionKind> parse_transition(std::string_view text) noexcept {
    const auto t = lowered(text);
    if (t == "kl") return TransitionKind::KeepListen;
    if (t == "l2s") return TransitionKind::ListenToSpeak;
    if (t == "ks") return TransitionKind::KeepSpeak;
    if (t == "s2l") return TransitionKind::SpeakToListen;
    return std::nullopt;
}

DialogueState DialogueUnit::state() const noexcept {
    DialogueState state = DialogueState::Listen;
    for (const auto& t : transitions) state = target_state(t.kind);
    return state;
}

bool DialogueUnit::closed() const noexcept {
    return !transitions.empty() && transitions.back().kind == TransitionKind::SpeakToListen;
}

Dialogue::Dialogue(Millis started_at) {
    units_.push_back(DialogueUnit{0, started_at, {}});
}

void Dialogue::advance(Millis now, TransitionKind kind) {
    auto& unit = units_.back();
    if (source_state(kind) != unit.state()) {
        throw ContractViolation("transition " + std::string(to_string(kind)) + " is illegal in state " +
                                std::string(to_string(unit.state())) + " (unit " +
                                std::to_string(unit.unit_index) + ")");
    }
    const Millis last = unit.transitions.empty() ? unit.started_at : unit.transitions.back().at;
    if (now < last) {
        throw ContractViolation("transition at t=" + std::to_string(now) +
                                " precedes the previous one at t=" + std::to_string(last));
    }
    unit.transitions.push_back({now, kind});
    if (kind == TransitionKind::SpeakToListen) {
        units_.push_back(DialogueUnit{unit.unit_index + 1, now, {}});
    }
}

Dialogue advance(Dialogue dialogue, Millis now, TransitionKind kind) {
    dialogue.advance(now, kind);
    return dialogue;
}

}  // namespace duplex
