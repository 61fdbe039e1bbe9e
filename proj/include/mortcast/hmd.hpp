#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <utility>

#include "mortcast/surface.hpp"
#include "mortcast/types.hpp"

namespace mortcast {

enum class HmdKind { Rates, Deaths, Exposures };

/// Values keyed by (age, year) for a single sex, as read from one HMD-style
/// 1x1 table.  Missing entries ('.') are stored as NaN.
using HmdTable = std::map<std::pair<int, int>, double>;

/// Parses an HMD 1x1 table: a free-form header block followed by
/// whitespace-separated columns `Year Age Female Male Total`.  The body
/// starts at the first line whose first token is an integer.  The age
/// token "110+" maps to 110.  Throws MalformedRow, EmptyInput, or
/// InconsistentYears (duplicate (age, year) cell).
HmdTable parse_hmd_table(std::istream& text, HmdKind kind, Sex sex);
HmdTable parse_hmd_table(std::string_view text, HmdKind kind, Sex sex);

/// Assembles a surface covering start_year..last available year.  Ages and
/// years of all supplied tables must agree cell-for-cell (GridMismatch).
/// Wherever deaths and exposures are both present with exposure > 0 the
/// rate is recomputed as deaths/exposures, so the rate/count consistency
/// invariant holds exactly regardless of rounding in the rate file.
MortalitySurface build_surface(const HmdTable& rates, const HmdTable* deaths,
                               const HmdTable* exposures, std::string country, Sex sex,
                               int start_year);

/// Collapses all ages >= top into one open age group.  With counts present
/// the open rate is the ratio of summed deaths to summed exposures; with
/// rates only it is the unweighted mean of the finite rates in the block.
MortalitySurface aggregate_open_age(const MortalitySurface& surface, int top);

/// Restricts the surface to the requested age range; years are untouched.
/// Requesting an open upper group is valid only when the surface's own top
/// age is that open group.
MortalitySurface truncate_ages(const MortalitySurface& surface, const AgeRange& range);

/// Repairs rates so that every cell is strictly positive and <= 1: missing
/// or non-positive cells are geometrically interpolated across ages within
/// the same year from the originally valid cells (boundary cells copy the
/// nearest valid neighbor), then anything above 1 is clamped to 1.  Every
/// change is appended to the repair log.  Idempotent.
MortalitySurface clean_rates(const MortalitySurface& surface);

/// CSV serialization: one `# country=... sex=. start=.... open=.` metadata
/// line, a header `age,year,rate[,deaths,exposures]`, then one row per
/// cell.  Rates round-trip bit-exactly.
std::string serialize_surface(const MortalitySurface& surface);
MortalitySurface parse_surface(std::string_view text);

} // namespace mortcast
