#pragma once

#include <stdexcept>
#include <string>

namespace tabdistill {

/// Bad configuration or schema; surfaced by the CLI as a usage error (exit 2).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input does not conform to the dataset schema.
class SchemaError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class EncoderError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A persisted artifact (model dump, manifest) is malformed.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace tabdistill
