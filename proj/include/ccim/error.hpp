#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace ccim {

// Domain error carrying a stable machine-parseable category tag. The CLI maps
// these to exit code 1 and prints "error: [<category>] <message>" on one line.
class Error : public std::runtime_error {
public:
  Error(std::string category, const std::string& msg)
      : std::runtime_error("[" + category + "] " + msg),
        category_(std::move(category)) {}

  const std::string& category() const { return category_; }

private:
  std::string category_;
};

inline Error schema_error(const std::string& msg) { return Error("schema", msg); }
inline Error validation_error(const std::string& msg) { return Error("validation", msg); }
inline Error duplication_error(const std::string& msg) { return Error("duplicate", msg); }
inline Error format_error(const std::string& msg) { return Error("format", msg); }
inline Error corruption_error(const std::string& msg) { return Error("corruption", msg); }
inline Error argument_error(const std::string& msg) { return Error("argument", msg); }
inline Error shape_error(const std::string& msg) { return Error("shape", msg); }
inline Error numeric_error(const std::string& msg) { return Error("numeric", msg); }
inline Error encoder_error(const std::string& msg) { return Error("encoder", msg); }
inline Error config_error(const std::string& msg) { return Error("config", msg); }
inline Error conditioning_error(const std::string& msg) { return Error("conditioning", msg); }
inline Error metric_error(const std::string& msg) { return Error("metric", msg); }
inline Error io_error(const std::string& msg) { return Error("io", msg); }
inline Error divergence_error(const std::string& msg) { return Error("divergence", msg); }

}  // namespace ccim
