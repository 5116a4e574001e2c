#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace cflsim {

/// Invalid experiment or operation parameters. Carries every violation found,
/// not just the first.
class ConfigError : public std::invalid_argument {
public:
    explicit ConfigError(const std::string& what)
        : std::invalid_argument(what), violations_{what} {}

    explicit ConfigError(std::vector<std::string> violations)
        : std::invalid_argument(join(violations)), violations_(std::move(violations)) {}

    const std::vector<std::string>& violations() const noexcept { return violations_; }

private:
    static std::string join(const std::vector<std::string>& v) {
        std::string out;
        for (const auto& s : v) {
            if (!out.empty()) out += "; ";
            out += s;
        }
        return out;
    }

    std::vector<std::string> violations_;
};

class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// The quadratic has no minimizer (linear term outside the range of A).
class UnboundedError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// A partition draw ran out of items.
class PoolExhaustedError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace cflsim
