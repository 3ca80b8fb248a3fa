#pragma once

#include <stdexcept>
#include <string>

namespace kcb {

// Broad failure classes; the CLI maps these onto process exit codes.
enum class ErrorKind {
    usage,      // bad flags or configuration
    data,       // malformed input data or files
    numerical,  // NaN/Inf, failed gradient check
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

#define KCB_DEFINE_ERROR(Name, Kind)                                      \
    class Name : public Error {                                           \
    public:                                                               \
        explicit Name(const std::string& what)                            \
            : Error(ErrorKind::Kind, std::string(#Name ": ") + what) {}   \
    };

KCB_DEFINE_ERROR(EmptyInput, data)
KCB_DEFINE_ERROR(ShapeError, data)
KCB_DEFINE_ERROR(IndexError, data)
KCB_DEFINE_ERROR(VocabError, data)
KCB_DEFINE_ERROR(LengthError, data)
KCB_DEFINE_ERROR(EmptyAfterFilter, data)
KCB_DEFINE_ERROR(QueryUnscorable, data)
KCB_DEFINE_ERROR(FormatError, data)
KCB_DEFINE_ERROR(CorruptIndexError, data)
KCB_DEFINE_ERROR(ConfigError, usage)
KCB_DEFINE_ERROR(NumericalError, numerical)

#undef KCB_DEFINE_ERROR

}  // namespace kcb
