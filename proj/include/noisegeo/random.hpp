#pragma once

#include <cstdint>
#include <optional>

#include "noisegeo/tensor.hpp"

namespace noisegeo {

/// Counter-based random stream.
///
/// Every draw is a pure function of (stream key, counter), so a stream can be
/// replayed from its seed and child streams can be derived in any order
/// without touching the parent's state. The key of a child is a hash of the
/// parent key and the child's label.
class RandomSource {
public:
    explicit RandomSource(std::uint64_t seed = 0, std::uint64_t label = 0);

    [[nodiscard]] RandomSource child(std::uint64_t label) const;

    [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }
    [[nodiscard]] std::uint64_t key() const noexcept { return key_; }

    std::uint64_t next_u64();
    /// Uniform in the open interval (0, 1).
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);
    /// Standard normal draw (Box-Muller, unclipped).
    double normal();

    /// Tensor of i.i.d. standard normal entries.
    Tensor gaussian(const Shape& shape);
    Tensor uniform_tensor(const Shape& shape, double lo, double hi);

private:
    std::uint64_t seed_;
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    std::optional<double> spare_;
};

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x) noexcept;

}  // namespace noisegeo
