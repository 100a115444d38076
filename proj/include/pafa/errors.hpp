#pragma once

#include <stdexcept>
#include <string>

namespace pafa {

// Error taxonomy shared by the library and the CLI exit codes:
// data/parse/io problems map to exit 2, numeric failures to exit 3.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace pafa
