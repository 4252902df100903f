#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace otsa {

// Error taxonomy mirrored by the CLI exit codes:
// parameter_error -> 2, io_error/format_error -> 3, numerical_error -> 4.
struct parameter_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed file content; `field` names the offending header field or token.
struct format_error : std::runtime_error {
    std::string field;
    format_error(std::string field_name, const std::string& what)
        : std::runtime_error(what), field(std::move(field_name)) {}
};

struct numerical_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Derives a child seed from a root seed and a label (FNV-1a over the label
// bytes mixed with the root). All randomness in the toolkit flows from one
// root seed expanded through fixed labels, so reruns are reproducible and
// independent of scheduling.
inline std::uint64_t derive_seed(std::uint64_t root, const std::string& label) {
    std::uint64_t h = 14695981039346656037ull;
    auto mix = [&h](std::uint64_t byte) {
        h ^= byte;
        h *= 1099511628211ull;
    };
    for (int i = 0; i < 8; ++i) mix((root >> (8 * i)) & 0xffu);
    for (unsigned char c : label) mix(c);
    // splitmix64 finalizer
    h += 0x9e3779b97f4a7c15ull;
    h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ull;
    h = (h ^ (h >> 27)) * 0x94d049bb133111ebull;
    return h ^ (h >> 31);
}

}  // namespace otsa
