#ifndef TIMBRE_ERRORS_HPP
#define TIMBRE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace timbre {

/// Shape or extent mismatch. The message names the offending axis or layer.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Index outside a valid range (class labels, tensor coordinates).
class IndexError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

/// Invalid configuration value (negative rate, empty strategy set, ...).
class ParameterError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// An object was used in the wrong lifecycle state (backward before forward).
class StateError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// NaN or Inf appeared where finite values are required.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Audio or checkpoint file could not be decoded.
class IngestError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Manifest or sampling problem (missing class, leakage between splits).
class DatasetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace timbre

#endif
