#pragma once

#include <stdexcept>
#include <string>

namespace mortcast {

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// hmd_data
struct MalformedRow final : Error { using Error::Error; };
struct EmptyInput final : Error { using Error::Error; };
struct InconsistentYears final : Error { using Error::Error; };
struct GridMismatch final : Error { using Error::Error; };
struct NoYearsAfterStart final : Error { using Error::Error; };
struct TopOutOfRange final : Error { using Error::Error; };
struct RangeOutOfBounds final : Error { using Error::Error; };
struct UnrepairableColumn final : Error { using Error::Error; };

// models
struct MissingCounts final : Error { using Error::Error; };
struct DegenerateSurface final : Error { using Error::Error; };
struct NonFiniteObjective final : Error { using Error::Error; };

// forecasting
struct TooShort final : Error { using Error::Error; };
struct NotConverged final : Error { using Error::Error; };
struct BadDims final : Error { using Error::Error; };

// evaluation
struct DimMismatch final : Error { using Error::Error; };
struct ZeroActual final : Error { using Error::Error; };
struct InvertedBounds final : Error { using Error::Error; };

// cli_report
struct IncompleteGrid final : Error { using Error::Error; };
struct MissingData final : Error { using Error::Error; };
struct ConfigInvalid final : Error { using Error::Error; };
struct BadTruth final : Error { using Error::Error; };
struct IoError final : Error { using Error::Error; };

} // namespace mortcast
