#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "mortcast/errors.hpp"
#include "mortcast/types.hpp"

namespace mortcast {

/// Record of one repaired cell in a rate surface.
struct RateRepair {
    int age = 0;
    int year = 0;
    double old_value = 0.0;
    double new_value = 0.0;
};

/// Age-by-year grid of central death rates for one country and sex, with
/// optional death and exposure counts on the same grid.  Rows are ages
/// (ascending, contiguous), columns are calendar years (ascending,
/// contiguous).  `open_top` marks the last age group as open-ended
/// (e.g. 100+).
struct MortalitySurface {
    std::string country;
    Sex sex = Sex::Female;
    std::vector<int> ages;
    bool open_top = false;
    std::vector<int> years;
    Eigen::MatrixXd rates;
    std::optional<Eigen::MatrixXd> deaths;
    std::optional<Eigen::MatrixXd> exposures;
    std::vector<RateRepair> repairs;

    int n_ages() const { return static_cast<int>(ages.size()); }
    int n_years() const { return static_cast<int>(years.size()); }

    bool has_counts() const { return deaths.has_value() && exposures.has_value(); }

    int age_index(int age) const {
        if (ages.empty() || age < ages.front() || age > ages.back())
            throw RangeOutOfBounds("age " + std::to_string(age) + " not on surface");
        return age - ages.front();
    }

    int year_index(int year) const {
        if (years.empty() || year < years.front() || year > years.back())
            throw RangeOutOfBounds("year " + std::to_string(year) + " not on surface");
        return year - years.front();
    }
};

} // namespace mortcast
