#pragma once

#include <stdexcept>
#include <string>

namespace fundus {

// Exit-code mapping at the CLI boundary: ConfigError -> 1, DataError -> 2,
// VerifyError -> 3. Engine shape errors (std::invalid_argument) surface as
// runtime errors (2) unless a command knows better.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct VerifyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace fundus
