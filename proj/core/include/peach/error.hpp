#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace peach {

// Base of every error the engine raises. The CLI maps these to exit code 1.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class FormatError : public Error {
public:
    using Error::Error;
};

class SchemaError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class InternalError : public Error {
public:
    using Error::Error;
};

class MissingResourceError : public Error {
public:
    using Error::Error;
};

class EmptyNodeError : public Error {
public:
    using Error::Error;
};

class IncompleteArtifactError : public Error {
public:
    using Error::Error;
};

class ValueError : public Error {
public:
    using Error::Error;

    // Offending cell of a matrix input.
    ValueError(const std::string& what, std::size_t row, std::size_t column)
        : Error(what + " at row " + std::to_string(row) + ", column " + std::to_string(column)),
          row_(row), column_(column), located_(true) {}

    bool has_location() const noexcept { return located_; }
    std::size_t row() const noexcept { return row_; }
    std::size_t column() const noexcept { return column_; }

private:
    std::size_t row_ = 0;
    std::size_t column_ = 0;
    bool located_ = false;
};

class AlignmentError : public Error {
public:
    explicit AlignmentError(const std::string& what) : Error(what) {}
    AlignmentError(const std::string& what, std::size_t row)
        : Error(what + " at row " + std::to_string(row)), row_(row), located_(true) {}

    bool has_row() const noexcept { return located_; }
    std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_ = 0;
    bool located_ = false;
};

}  // namespace peach
