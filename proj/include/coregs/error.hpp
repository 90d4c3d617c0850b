// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace coregs {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Precondition or argument violation.
class InvalidInput : public Error {
public:
    explicit InvalidInput(const std::string& what) : Error("invalid input: " + what) {}
};

/// The requested point-of-interest class is absent (no views or no splats).
class PoiNotFound : public Error {
public:
    explicit PoiNotFound(long class_id, const std::string& where)
        : Error("poi not found: class " + std::to_string(class_id) + " " + where),
          class_id_(class_id) {}
    long class_id() const noexcept { return class_id_; }

private:
    long class_id_;
};

/// Malformed file on disk (PLY, PNG, camera JSON).
class FormatError : public Error {
public:
    explicit FormatError(const std::string& what) : Error("format error: " + what) {}
};

}  // namespace coregs
