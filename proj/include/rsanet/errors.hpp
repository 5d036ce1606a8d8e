#pragma once

#include <stdexcept>
#include <string>

namespace rsanet {

// Error taxonomy. The CLI maps these onto exit codes:
//   ConfigError -> 1, Shape/Value/Format/Data -> 2, NumericError -> 3.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
    using Error::Error;
};

struct ValueError : Error {
    using Error::Error;
};

struct FormatError : Error {
    using Error::Error;
};

struct DataError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct NumericError : Error {
    using Error::Error;
};

}  // namespace rsanet
