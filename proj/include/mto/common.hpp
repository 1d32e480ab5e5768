#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace mto {

// Process exit codes double as error categories so the CLI can map any
// failure to the right status without inspecting message text.
enum class ErrorKind : int {
  Config = 2,   // bad user input: files, flags, parameter ranges
  Numeric = 3,  // solver / floating-point trouble: singular systems, NaNs
  Io = 4,       // filesystem and serialization failures
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }
  int exit_code() const { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail_config(const std::string& msg);
[[noreturn]] void fail_numeric(const std::string& msg);
[[noreturn]] void fail_io(const std::string& msg);

inline void require(bool cond, ErrorKind kind, const std::string& msg) {
  if (!cond) throw Error(kind, msg);
}

// Counter-based generator with a fixed bit-to-double mapping so streams are
// reproducible across platforms and independent of std::distribution quirks.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed == 0 ? 0x9e3779b97f4a7c15ull : seed) {}

  std::uint64_t next_u64();
  double uniform01();                      // [0, 1)
  double uniform(double lo, double hi);    // [lo, hi)
  double normal();                         // standard Gaussian, Box-Muller
  int uniform_int(int lo, int hi);         // inclusive bounds

  // Independent child stream, stable under any parallel schedule.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t index);

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Runs fn(i) for i in [0, n). `workers <= 1` stays on the calling thread.
// Work is split into contiguous chunks; fn must only touch slot i.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

int hardware_workers();

std::string format_double(double v);  // shortest round-trip decimal

}  // namespace mto
