#pragma once

#include <stdexcept>
#include <string>

namespace promptcodec {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad arguments or data fed to an operation (shape/rate/length mismatch).
struct InvalidInput : Error {
    using Error::Error;
};

// A config object violates its invariants.
struct InvalidConfig : Error {
    using Error::Error;
};

// A serialized stream or checkpoint failed validation.
struct CorruptStream : Error {
    using Error::Error;
};

// A required prompt embedding is unavailable.
struct MissingPrompt : Error {
    using Error::Error;
};

// A non-finite value surfaced where finiteness is contractual.
struct NumericalError : Error {
    using Error::Error;
};

// Filesystem / OS level failure.
struct IoError : Error {
    using Error::Error;
};

}  // namespace promptcodec
