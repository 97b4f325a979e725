#include "fgc/editspec.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace fgc {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t");
    size_t b = s.find_last_not_of(" \t");
    if (a == std::string::npos) return "";
    return s.substr(a, b - a + 1);
}

[[noreturn]] void fail(const std::string& text, const std::string& why) {
    throw std::invalid_argument("cannot parse edit spec \"" + text + "\": " + why +
                                " (expected \"action: label: start: end\", e.g. "
                                "\"insert: clap: 2.0: 2.5\")");
}

}  // namespace

EditSpec parse_edit_spec(const std::string& text) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : text) {
        if (c == ':') {
            parts.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    parts.push_back(trim(cur));
    if (parts.size() != 4) fail(text, "need 4 colon-separated fields, got " +
                                          std::to_string(parts.size()));
    EditSpec spec;
    if (parts[0] == "insert") {
        spec.action = EditSpec::Action::insert;
    } else if (parts[0] == "remove") {
        spec.action = EditSpec::Action::remove;
    } else {
        fail(text, "action must be insert or remove, got \"" + parts[0] + "\"");
    }
    if (parts[1].empty()) fail(text, "empty label");
    spec.label = parts[1];
    try {
        size_t used = 0;
        spec.start = std::stod(parts[2], &used);
        if (used != parts[2].size()) fail(text, "bad start time \"" + parts[2] + "\"");
        spec.end = std::stod(parts[3], &used);
        if (used != parts[3].size()) fail(text, "bad end time \"" + parts[3] + "\"");
    } catch (const std::invalid_argument&) {
        fail(text, "times must be numbers");
    }
    if (!std::isfinite(spec.start) || !std::isfinite(spec.end)) fail(text, "non-finite time");
    if (spec.start < 0.0) fail(text, "start must be >= 0");
    if (!(spec.start < spec.end)) fail(text, "start must be < end");
    return spec;
}

std::string format_edit_spec(const EditSpec& spec) {
    std::ostringstream os;
    os.precision(17);
    os << (spec.action == EditSpec::Action::insert ? "insert" : "remove") << ": " << spec.label
       << ": " << spec.start << ": " << spec.end;
    return os.str();
}

}  // namespace fgc
