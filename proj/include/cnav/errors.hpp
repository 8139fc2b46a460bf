#pragma once

#include <stdexcept>
#include <string>

namespace cnav {

// Bad configuration or malformed input. The CLI maps this to exit code 2.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A required dataset, checkpoint or buffer file is absent. Exit code 3.
class MissingArtifactError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Read/write failure or corrupt file. Exit code 4.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cnav
