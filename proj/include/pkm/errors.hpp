#pragma once

#include <stdexcept>
#include <string>

namespace pkm {

// Invalid configuration or dimension mismatch detected before any work is done.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// File / serialization failure. Messages carry the byte offset where known.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace pkm
