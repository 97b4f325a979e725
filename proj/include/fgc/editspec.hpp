#pragma once

#include <string>

namespace fgc {

// One temporally localized editing instruction. Wire grammar:
// "action: label: start: end", e.g. "insert: clap: 2.0: 2.5".
struct EditSpec {
    enum class Action { insert, remove };
    Action action = Action::insert;
    std::string label;
    double start = 0.0;
    double end = 0.0;
};

// Throws std::invalid_argument with a grammar hint on malformed input.
EditSpec parse_edit_spec(const std::string& text);
std::string format_edit_spec(const EditSpec& spec);

}  // namespace fgc
