#include "noisegeo/random.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace noisegeo {

namespace {
constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
constexpr std::uint64_t kLabelSalt = 0xd1b54a32d192ed03ULL;
}  // namespace

std::uint64_t mix64(std::uint64_t x) noexcept {
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

RandomSource::RandomSource(std::uint64_t seed, std::uint64_t label)
    : seed_(seed), key_(mix64(mix64(seed + kGolden) ^ mix64((label + 1) * kLabelSalt))) {}

RandomSource RandomSource::child(std::uint64_t label) const {
    RandomSource c(seed_);
    c.key_ = mix64(key_ ^ mix64((label + 1) * kLabelSalt + kGolden));
    return c;
}

std::uint64_t RandomSource::next_u64() {
    ++counter_;
    return mix64(key_ + counter_ * kGolden);
}

double RandomSource::uniform() {
    // 53 random bits, shifted by half an ulp so 0 is never produced.
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

std::uint64_t RandomSource::below(std::uint64_t n) {
    if (n == 0) throw Error("below: empty range");
    return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n;
}

double RandomSource::normal() {
    if (spare_) {
        const double v = *spare_;
        spare_.reset();
        return v;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    return radius * std::cos(angle);
}

Tensor RandomSource::gaussian(const Shape& shape) {
    if (shape.empty() || shape_size(shape) == 0 || std::find(shape.begin(), shape.end(), 0u) != shape.end())
        throw ShapeError("gaussian: zero-sized shape " + to_string(shape));
    Tensor t(shape);
    for (double& v : t.data()) v = normal();
    return t;
}

Tensor RandomSource::uniform_tensor(const Shape& shape, double lo, double hi) {
    Tensor t(shape);
    for (double& v : t.data()) v = uniform(lo, hi);
    return t;
}

}  // namespace noisegeo
