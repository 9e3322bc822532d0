#pragma once

#include <stdexcept>
#include <string>

namespace seqcls {

/// Shape disagreement between tensors, or between data and a model config.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A call that violates an operation's contract (non-scalar backward root,
/// mismatched normalization record, empty dataset, ...).
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Malformed input file; message carries file and line context.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Scenario variables do not match the expected schema.
class SchemaError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad or inconsistent run configuration.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace seqcls
