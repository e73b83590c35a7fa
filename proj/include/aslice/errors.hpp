#pragma once

#include <stdexcept>
#include <string>

namespace aslice {

// All library failures derive from Error so callers can catch one type.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input files or payloads (missing file, size mismatch, NaN, duplicate ids).
class DataError : public Error {
public:
    using Error::Error;
};

// Invalid configuration values.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Feature dimension of a model does not match the matrix it is applied to.
class DimensionMismatch : public Error {
public:
    using Error::Error;
};

// Binary training data that contains only one class.
class DegenerateLabels : public Error {
public:
    using Error::Error;
};

// Training diverged (non-finite loss).
class TrainingDiverged : public Error {
public:
    using Error::Error;
};

// A probability row that is negative or does not sum to one.
class MalformedDistribution : public Error {
public:
    using Error::Error;
};

// Oracle could not answer, or answers do not match the pending batch.
class OracleError : public Error {
public:
    using Error::Error;
};

class NotFound : public Error {
public:
    using Error::Error;
};

class Conflict : public Error {
public:
    using Error::Error;
};

}  // namespace aslice
