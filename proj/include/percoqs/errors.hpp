#pragma once

#include <stdexcept>
#include <string>

namespace percoqs {

// Argument outside the mathematical domain of an operation (bad label,
// point outside a box, coincident corners, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Caller violated a documented precondition (undefined flag, resolution
// beyond the sampled depth, too few trials, ...).
class PreconditionError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// A configured resource cap (node budget, rejection budget, enumeration
// budget) would be exceeded. Never silently truncated.
class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace percoqs
