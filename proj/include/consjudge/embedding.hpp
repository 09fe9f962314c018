#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace consjudge {

struct EmbeddingVector {
    std::vector<double> values;

    std::size_t dim() const noexcept { return values.size(); }
    double norm() const noexcept;

    bool operator==(const EmbeddingVector&) const = default;
};

/// Normalized dot product, clamped to [-1, 1]. Throws kDimensionMismatch on
/// differing lengths and kDegenerateEmbedding on a zero vector.
double cosine(std::span<const double> a, std::span<const double> b);

}  // namespace consjudge
