#pragma once

#include <stdexcept>
#include <string>

namespace vibraforge {

// Root of every error the library raises. `is_parse_error()` separates
// malformed-input / I/O failures (CLI exit 2) from contract violations (exit 1).
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
    virtual bool is_parse_error() const noexcept { return false; }
};

#define VIBRAFORGE_DEFINE_ERROR(Name, Base) \
    class Name : public Base {              \
    public:                                 \
        using Base::Base;                   \
    };

VIBRAFORGE_DEFINE_ERROR(RangeError, Error)
VIBRAFORGE_DEFINE_ERROR(ParityError, Error)
VIBRAFORGE_DEFINE_ERROR(TruncationError, Error)
VIBRAFORGE_DEFINE_ERROR(TopologyError, Error)
VIBRAFORGE_DEFINE_ERROR(PacketOverflowError, Error)
VIBRAFORGE_DEFINE_ERROR(EmptyInputError, Error)
VIBRAFORGE_DEFINE_ERROR(BelowThresholdError, Error)
VIBRAFORGE_DEFINE_ERROR(NormalizationError, Error)
VIBRAFORGE_DEFINE_ERROR(AliasingError, Error)
VIBRAFORGE_DEFINE_ERROR(ValidationError, Error)
VIBRAFORGE_DEFINE_ERROR(CapacityError, ValidationError)
VIBRAFORGE_DEFINE_ERROR(OverlapError, ValidationError)
VIBRAFORGE_DEFINE_ERROR(TransportError, Error)

#undef VIBRAFORGE_DEFINE_ERROR

// Malformed file or document. `offset` is a byte offset or 1-based line
// number depending on the format; -1 when not applicable.
class ParseError : public Error {
public:
    explicit ParseError(const std::string& what, long long offset = -1)
        : Error(offset >= 0 ? what + " (at " + std::to_string(offset) + ")" : what),
          offset_(offset) {}
    bool is_parse_error() const noexcept override { return true; }
    long long offset() const noexcept { return offset_; }

private:
    long long offset_;
};

class IoError : public Error {
public:
    using Error::Error;
    bool is_parse_error() const noexcept override { return true; }
};

}  // namespace vibraforge
