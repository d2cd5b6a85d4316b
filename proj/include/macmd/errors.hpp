#pragma once

#include <stdexcept>
#include <string>

namespace macmd {

/// Problems with input data or dataset files (CLI exit code 3).
struct DataError : std::runtime_error {
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Problems reading or writing checkpoints (CLI exit code 4).
struct CheckpointError : std::runtime_error {
    explicit CheckpointError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace macmd
