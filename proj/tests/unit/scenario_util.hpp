#pragma once

#include <string>
#include <vector>

#include "duplex/harness.hpp"

namespace testutil {

inline duplex::ScenarioEvent ev(duplex::Millis t, duplex::Millis d, duplex::TruthLabel label, std::string reply = {}) {
    using duplex::Expected;
    using duplex::TruthLabel;
    Expected e = Expected::Respond;
    switch (label) {
        case TruthLabel::Complete: e = Expected::Respond; break;
        case TruthLabel::Incomplete: e = Expected::Wait; break;
        case TruthLabel::Backchannel: e = Expected::ContinueSpeaking; break;
        case TruthLabel::Interruption: e = Expected::CancelAndListen; break;
        case TruthLabel::NonTarget: e = Expected::Ignore; break;
    }
    return duplex::ScenarioEvent{t, d, label, e, "words", std::move(reply)};
}

inline duplex::ScenarioScript script(std::vector<duplex::ScenarioEvent> events, std::string name = "test") {
    duplex::ScenarioScript s;
    s.name = std::move(name);
    s.events = std::move(events);
    return s;
}

template <class T>
std::vector<std::pair<duplex::Millis, T>> records(const duplex::SessionTrace& trace) {
    std::vector<std::pair<duplex::Millis, T>> out;
    for (const auto& e : trace.events) {
        if (const auto* r = std::get_if<T>(&e.record)) out.emplace_back(e.t, *r);
    }
    return out;
}

inline std::vector<std::string> transition_codes(const duplex::SessionTrace& trace) {
    std::vector<std::string> out;
    for (const auto& [t, r] : records<duplex::trace::Transition>(trace)) out.emplace_back(duplex::to_string(r.kind));
    return out;
}

}  // namespace testutil
