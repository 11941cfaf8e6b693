#pragma once

#include <stdexcept>
#include <string>

namespace tau {

// Error families map 1:1 onto CLI exit codes (see tools/tau.cpp and README).
enum class ErrorFamily {
    config        = 2,  // bad option, mismatched matcher/utility, invalid spec
    parse         = 3,  // unreadable or malformed input document
    validate      = 4,  // sizing, masking, length, decode, capacity violations
    train         = 5,  // divergence and trainer aborts
    eval          = 6,  // evaluation preconditions (empty sets, digest mismatch)
    contamination = 7,  // trigger surface found where it must not be
    io            = 8,  // filesystem failures
    internal      = 9,
};

class Error : public std::runtime_error {
  public:
    Error(ErrorFamily family, const std::string& msg)
        : std::runtime_error(msg), family_(family) {}
    ErrorFamily family() const noexcept { return family_; }
    int exit_code() const noexcept { return static_cast<int>(family_); }

  private:
    ErrorFamily family_;
};

[[noreturn]] inline void throw_config(const std::string& msg) { throw Error(ErrorFamily::config, msg); }
[[noreturn]] inline void throw_parse(const std::string& msg) { throw Error(ErrorFamily::parse, msg); }
[[noreturn]] inline void throw_validate(const std::string& msg) { throw Error(ErrorFamily::validate, msg); }
[[noreturn]] inline void throw_train(const std::string& msg) { throw Error(ErrorFamily::train, msg); }
[[noreturn]] inline void throw_eval(const std::string& msg) { throw Error(ErrorFamily::eval, msg); }
[[noreturn]] inline void throw_contamination(const std::string& msg) { throw Error(ErrorFamily::contamination, msg); }
[[noreturn]] inline void throw_io(const std::string& msg) { throw Error(ErrorFamily::io, msg); }

}  // namespace tau
