#pragma once

#include "mortcast/errors.hpp"
#include "mortcast/model.hpp"
#include "mortcast/surface.hpp"

namespace mortcast::detail {

/// Shared entry validation for all fitters: enough data to identify period
/// and age effects, and strictly positive finite rates (i.e. a cleaned
/// surface).
void validate_fit_surface(const MortalitySurface& surface);

/// Mean of the age labels (xbar), used by the Plat period bases.
double mean_age_of(const std::vector<int>& ages);

} // namespace mortcast::detail
