#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace vplidar {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input files (KITTI bin/label/calib, scene JSON, map files).
class FormatError : public Error {
public:
    using Error::Error;
};

// Invalid parameters or option combinations.
class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Detector provider failures (built-in or external process).
class DetectorError : public Error {
public:
    using Error::Error;
};

// Raised when an IOU filter finds no overlapping prediction.
class NoMatchError : public Error {
public:
    using Error::Error;
};

class IndexOutOfRange : public Error {
public:
    IndexOutOfRange(const std::string& what, std::int64_t raw_row, std::int64_t raw_col)
        : Error(what), raw_row_(raw_row), raw_col_(raw_col) {}

    std::int64_t raw_row() const noexcept { return raw_row_; }
    std::int64_t raw_col() const noexcept { return raw_col_; }

private:
    std::int64_t raw_row_;
    std::int64_t raw_col_;
};

}  // namespace vplidar
