#pragma once

#include <stdexcept>
#include <string>

namespace minlab {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct PoleProximity : Error {
    using Error::Error;
};
struct DegenerateInput : Error {
    using Error::Error;
};
struct NotAPole : Error {
    using Error::Error;
};
struct NonConvergent : Error {
    using Error::Error;
};
struct PeriodFailure : Error {
    using Error::Error;
};
struct JorgeMeeksViolation : Error {
    using Error::Error;
};
struct InconsistentPoleOrders : Error {
    using Error::Error;
};
struct TooFewEnds : Error {
    using Error::Error;
};
struct QuadratureFailure : Error {
    using Error::Error;
};
struct BudgetExceeded : Error {
    using Error::Error;
};
struct RTooSmall : Error {
    using Error::Error;
};
struct SingularMass : Error {
    using Error::Error;
};
struct FactorizationFailure : Error {
    using Error::Error;
};
struct AmbiguousCount : Error {
    using Error::Error;
};
struct MeshMismatch : Error {
    using Error::Error;
};

}  // namespace minlab
