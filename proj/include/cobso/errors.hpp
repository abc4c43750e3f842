#pragma once

#include <stdexcept>
#include <string>

namespace cobso {

/// Input file could not be tokenized (bad field count, unreadable number, ...).
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

/// Input tokenized fine but violates the documented schema (missing column,
/// non-finite coordinate, unknown enum value, ...).
struct SchemaError : std::runtime_error {
    explicit SchemaError(const std::string& what) : std::runtime_error(what) {}
};

/// An operation was called outside its contract (shape mismatch, empty
/// input, incompatible rates, ...).
struct ContractError : std::invalid_argument {
    explicit ContractError(const std::string& what) : std::invalid_argument(what) {}
};

/// A numeric computation produced a non-finite intermediate.
struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace cobso
