#pragma once

#include <stdexcept>
#include <string>

namespace musiqa {

// Base of every exception thrown by the library. Module headers derive
// their own types carrying a kind tag so callers can branch without
// string matching.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace musiqa
