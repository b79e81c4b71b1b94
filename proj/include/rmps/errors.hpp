#pragma once

#include <stdexcept>
#include <string>

namespace rmps {

// Error taxonomy. Each class maps to one machine-readable code used by the CLI.
struct Error : std::runtime_error {
    Error(std::string code, const std::string& what)
        : std::runtime_error(code + ": " + what), code(std::move(code)) {}
    std::string code;
};

struct InvalidInput : Error {
    explicit InvalidInput(const std::string& what) : Error("InvalidInput", what) {}
};

struct DimMismatch : Error {
    explicit DimMismatch(const std::string& what) : Error("DimMismatch", what) {}
};

// A transfer map (or one of its compositions) annihilated a state, so the
// projective action has no well-defined output.
struct KernelMeetsStates : Error {
    explicit KernelMeetsStates(const std::string& what) : Error("KernelMeetsStates", what) {}
};

struct NoConvergence : Error {
    explicit NoConvergence(const std::string& what) : Error("NoConvergence", what) {}
};

struct SingularGauge : Error {
    explicit SingularGauge(const std::string& what) : Error("SingularGauge", what) {}
};

struct DegenerateChain : Error {
    explicit DegenerateChain(const std::string& what) : Error("DegenerateChain", what) {}
};

struct RegimeMismatch : Error {
    explicit RegimeMismatch(const std::string& what) : Error("RegimeMismatch", what) {}
};

struct MissingProfile : Error {
    explicit MissingProfile(const std::string& what) : Error("MissingProfile", what) {}
};

struct ConfigError : Error {
    // `pointer` is a JSON pointer to the offending config node.
    ConfigError(const std::string& pointer, const std::string& what)
        : Error("ConfigError", pointer + ": " + what), pointer(pointer) {}
    std::string pointer;
};

}  // namespace rmps
