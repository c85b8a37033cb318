#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace pemuta {

/// Base of every error the pipeline raises. `name()` is the stable, typed
/// identifier printed by the CLI (e.g. "MalformedRecord").
class Error : public std::runtime_error {
 public:
  Error(std::string name, const std::string& message)
      : std::runtime_error(message), name_(std::move(name)) {}

  [[nodiscard]] const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

}  // namespace pemuta
