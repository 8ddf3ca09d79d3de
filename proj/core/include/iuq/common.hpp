#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>

namespace iuq {

/// Malformed or inconsistent configuration (CLI exit code 2).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Unreadable, unparseable or contradictory input data (CLI exit code 3).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Linear algebra or optimization failure (CLI exit code 5).
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Writes a warning line to stderr. Non-fatal conditions only.
void log_warn(const std::string& msg);

/// Worker cap used by parallel sections when the caller does not pass one.
/// 0 is never returned; defaults to the hardware concurrency.
unsigned default_thread_count();
void set_default_thread_count(unsigned n);

/// Runs fn(i) for i in [0, n). fn must be safe to call concurrently for
/// distinct i. Order of execution is unspecified; exceptions from workers
/// are rethrown on the calling thread.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn,
                  unsigned max_threads = 0);

}  // namespace iuq
