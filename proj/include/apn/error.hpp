#ifndef APN_ERROR_HPP
#define APN_ERROR_HPP

#include <stdexcept>
#include <string>

namespace apn {

// Error kinds map to CLI exit codes: usage -> 1, data/io -> 2, numeric -> 3.
enum class ErrKind { usage, data, io, numeric };

class Error : public std::runtime_error {
 public:
  Error(ErrKind kind, std::string code, const std::string& msg)
      : std::runtime_error(code + ": " + msg), kind_(kind), code_(std::move(code)) {}

  ErrKind kind() const { return kind_; }
  // Short machine-checkable tag, e.g. "bad-magic", "dim-mismatch".
  const std::string& code() const { return code_; }

 private:
  ErrKind kind_;
  std::string code_;
};

inline void check(bool cond, ErrKind kind, const std::string& code, const std::string& msg) {
  if (!cond) throw Error(kind, code, msg);
}

}  // namespace apn

#endif
