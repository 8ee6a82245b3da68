#pragma once

#include <stdexcept>
#include <string>

namespace ftlab {

// Base class for every error raised by the library. Callers that only care
// about "something in ftlab failed" can catch this one.
class error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class invalid_argument : public error {
 public:
  using error::error;
};

class dimension_mismatch : public invalid_argument {
 public:
  using invalid_argument::invalid_argument;
};

// Rows of a data matrix are not linearly independent.
class rank_deficient_error : public error {
 public:
  using error::error;
};

class non_convergence_error : public error {
 public:
  using error::error;
};

class divergence_error : public error {
 public:
  using error::error;
};

// ||P_par theta_S|| == 0, so the infinite-depth ratio is undefined.
class degenerate_source_error : public error {
 public:
  using error::error;
};

class no_root_error : public error {
 public:
  using error::error;
};

class singular_gram_error : public error {
 public:
  using error::error;
};

class pretraining_error : public error {
 public:
  using error::error;
};

class parse_error : public error {
 public:
  using error::error;
};

class io_error : public error {
 public:
  using error::error;
};

}  // namespace ftlab
