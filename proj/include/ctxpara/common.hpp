#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ctxpara {

class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Input record does not conform to its schema. Carries the 1-based line or row.
class IngestionError : public Error {
  public:
    IngestionError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const { return line_; }

  private:
    std::size_t line_;
};

class LengthError : public Error {
  public:
    using Error::Error;
};

/// Raised when an optimization loop produces a non-finite loss or diverges.
class TrainingError : public Error {
  public:
    using Error::Error;
};

class ValidationError : public Error {
  public:
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Randomness. All stochastic code takes an Rng explicitly; there is no global
// generator. The engine is xoshiro256** and the conversions below avoid the
// implementation-defined std distributions, so a seed yields the same stream
// on every toolchain.

std::uint64_t fnv1a64(std::string_view text);
std::uint64_t splitmix64(std::uint64_t x);

/// Seed for a named operation, derived from a base seed.
std::uint64_t derive_seed(std::uint64_t base, std::string_view name);

class Rng {
  public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();
    /// Uniform in [0, 1).
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t uniform_index(std::uint64_t n);
    double normal();

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = uniform_index(i);
            std::swap(items[i - 1], items[j]);
        }
    }

  private:
    std::uint64_t state_[4];
};

// ---------------------------------------------------------------------------
// Text helpers. Case folding is ASCII-only; bytes >= 0x80 are treated as
// word characters so UTF-8 text passes through intact.

std::string trim(std::string_view text);
std::string collapse_whitespace(std::string_view text);
std::string ascii_lower(std::string_view text);
bool is_valid_utf8(std::string_view text);
bool is_punctuation_only(std::string_view token);

/// Splits on whitespace and detaches every ASCII punctuation character into
/// its own token. Apostrophes between word characters stay inside the word.
std::vector<std::string> word_punct_split(std::string_view text);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

// ---------------------------------------------------------------------------
// Files.

std::vector<std::string> read_lines(const std::filesystem::path& path);
std::string read_file(const std::filesystem::path& path);
/// Writes through a sibling temp file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// Code version baked in at build time.
std::string code_version();

inline bool is_finite(double x) { return std::isfinite(x); }

}  // namespace ctxpara
