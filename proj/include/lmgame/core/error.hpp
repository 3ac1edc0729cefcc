#pragma once

#include <stdexcept>
#include <string>

namespace lmgame {

// Broad failure categories. The CLI maps each to a distinct exit code.
enum class ErrorKind {
  config,       // bad configuration or arguments
  data,         // malformed or inconsistent input data
  not_found,    // unknown id (session, question set, predictor)
  validation,   // a request that breaks a contract (bad guess, p outside the allowed set)
  transport,    // remote predictor unreachable or replied with garbage
  end_of_set,   // no more rounds in a question set
  runtime,      // anything else
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return "config";
    case ErrorKind::data: return "data";
    case ErrorKind::not_found: return "not_found";
    case ErrorKind::validation: return "validation";
    case ErrorKind::transport: return "transport";
    case ErrorKind::end_of_set: return "end_of_set";
    case ErrorKind::runtime: return "runtime";
  }
  return "runtime";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace lmgame
