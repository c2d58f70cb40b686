#pragma once

#include <stdexcept>
#include <string>

namespace bn {

enum class ErrorCode {
  invalid_argument,
  io,
  bad_magic,
  bad_version,
  truncated,
  bad_task,
  generation_failed,
  diverged,
  digest_mismatch,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string msg)
      : std::runtime_error(std::move(msg)), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& msg) {
  throw Error(code, msg);
}

}  // namespace bn
