#pragma once

#include <stdexcept>
#include <string>

namespace rwl {

// Every error carries the module that raised it so the CLI can print
// "[module] message" without guessing.
class Error : public std::runtime_error {
public:
    Error(std::string module, const std::string& what)
        : std::runtime_error(what), module_(std::move(module)) {}

    const std::string& module() const noexcept { return module_; }

private:
    std::string module_;
};

#define RWL_DEFINE_ERROR(Name)                                            \
    class Name : public Error {                                           \
    public:                                                               \
        using Error::Error;                                               \
    };

RWL_DEFINE_ERROR(FormatError)        // malformed or missing input file
RWL_DEFINE_ERROR(ConsistencyError)   // well-formed input that contradicts itself
RWL_DEFINE_ERROR(PreconditionError)  // caller violated an operation precondition
RWL_DEFINE_ERROR(InputError)         // invalid argument values (shape, finiteness)
RWL_DEFINE_ERROR(CapacityError)      // problem too large for the requested method
RWL_DEFINE_ERROR(DomainError)        // operation undefined for these arguments
RWL_DEFINE_ERROR(ContractError)      // internal inputs produced by another stage disagree
RWL_DEFINE_ERROR(NormalizationError)

#undef RWL_DEFINE_ERROR

}  // namespace rwl
