#pragma once

#include <stdexcept>

namespace sparseft {

// One exception type per documented failure mode so callers can catch by contract.
struct ShapeMismatch : std::runtime_error { using std::runtime_error::runtime_error; };
struct InvalidTarget : std::runtime_error { using std::runtime_error::runtime_error; };
struct NotScalar : std::runtime_error { using std::runtime_error::runtime_error; };
struct NonFiniteEvaluation : std::runtime_error { using std::runtime_error::runtime_error; };
struct InvalidSpec : std::runtime_error { using std::runtime_error::runtime_error; };
struct DimMismatch : std::runtime_error { using std::runtime_error::runtime_error; };
struct ZeroBudget : std::runtime_error { using std::runtime_error::runtime_error; };
struct BudgetExceedsDim : std::runtime_error { using std::runtime_error::runtime_error; };
struct EmptyData : std::runtime_error { using std::runtime_error::runtime_error; };
struct NonPositiveCurvature : std::runtime_error { using std::runtime_error::runtime_error; };
struct TooLarge : std::runtime_error { using std::runtime_error::runtime_error; };
struct StateCorrupt : std::runtime_error { using std::runtime_error::runtime_error; };
struct Diverged : std::runtime_error { using std::runtime_error::runtime_error; };
struct InvalidFraction : std::runtime_error { using std::runtime_error::runtime_error; };
struct LengthMismatch : std::runtime_error { using std::runtime_error::runtime_error; };
struct TooShort : std::runtime_error { using std::runtime_error::runtime_error; };
struct NoData : std::runtime_error { using std::runtime_error::runtime_error; };
struct NotSymmetric : std::runtime_error { using std::runtime_error::runtime_error; };

}  // namespace sparseft
