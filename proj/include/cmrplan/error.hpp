#pragma once

#include <stdexcept>
#include <string>

namespace cmrplan {

// All domain failures derive from Error; the CLI maps them to exit code 1.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class BoundsError : public Error { using Error::Error; };
class PreconditionError : public Error { using Error::Error; };
class ParameterError : public Error { using Error::Error; };
class FormatError : public Error { using Error::Error; };
class InvariantError : public Error { using Error::Error; };
class SchemaError : public Error { using Error::Error; };
class DegenerateInputError : public Error { using Error::Error; };
class ConvergenceError : public Error { using Error::Error; };
class AnatomyNotFound : public Error { using Error::Error; };
class FitError : public Error { using Error::Error; };
class TrainingError : public Error { using Error::Error; };

} // namespace cmrplan
