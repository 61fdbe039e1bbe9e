#pragma once

#include "mortcast/errors.hpp"

#include <string>
#include <string_view>

namespace mortcast {

enum class Sex { Female, Male };

inline char sex_code(Sex s) { return s == Sex::Female ? 'F' : 'M'; }

inline std::string sex_name(Sex s) { return s == Sex::Female ? "Female" : "Male"; }

inline Sex sex_from_code(std::string_view code) {
    if (code == "F" || code == "f" || code == "Female" || code == "female") return Sex::Female;
    if (code == "M" || code == "m" || code == "Male" || code == "male") return Sex::Male;
    throw ConfigInvalid("unknown sex code: " + std::string(code));
}

/// Contiguous range of integer age labels. When open_upper is set the top
/// label aggregates everyone aged `upper` or older (e.g. 100+).
struct AgeRange {
    int lower = 0;
    int upper = 0;
    bool open_upper = false;
};

/// 60..100+ evaluation and partial-fit range.
inline AgeRange retiree_range() { return AgeRange{60, 100, true}; }

/// 0..100+ full-fit range.
inline AgeRange full_range() { return AgeRange{0, 100, true}; }

} // namespace mortcast
