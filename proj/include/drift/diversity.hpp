#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace drift {

using Vec = std::vector<double>;

/// Pluggable embedding in front of every diversity computation. identity
/// passes samples through, random_projection applies a fixed seeded Gaussian
/// map, external_table substitutes precomputed embeddings by row index
/// (offline use, where the "samples" are just row handles).
class Encoder {
public:
    enum class Kind { identity, random_projection, external_table };

    static Encoder identity();
    static Encoder random_projection(int input_dim, int output_dim, uint64_t seed);
    static Encoder external_table(std::vector<Vec> table);

    Vec encode(const Vec& x, int row_index = -1) const;
    std::vector<Vec> encode_all(const std::vector<Vec>& xs) const;

    Kind kind() const { return kind_; }

private:
    Encoder() = default;
    Kind kind_ = Kind::identity;
    int input_dim_ = 0;
    int output_dim_ = 0;
    uint64_t seed_ = 0;
    std::vector<double> projection_;  // output_dim x input_dim, row-major
    std::vector<Vec> table_;
};

/// G x G squared Euclidean embedding distances plus the per-sample row means
/// excluding the diagonal (the intra-group diversity of each sample).
struct DiversityMatrix {
    int n = 0;
    std::vector<double> pairwise;    // n*n, symmetric, zero diagonal
    std::vector<double> per_sample;  // length n

    double at(int i, int j) const { return pairwise[static_cast<size_t>(i) * n + j]; }
};

DiversityMatrix pairwise_diversity(const std::vector<Vec>& samples, const Encoder& encoder);

/// Mean over prompt buckets of (2/(G(G-1))) * sum_{i<j} ||E(o_i)-E(o_j)||^2.
/// Every bucket must share the same G >= 2.
double set_diversity(const std::vector<std::vector<Vec>>& samples_per_prompt,
                     const Encoder& encoder);

/// Same formula behind the second encoder slot.
double clip_style_diversity(const std::vector<std::vector<Vec>>& samples_per_prompt,
                            const Encoder& second_encoder);

/// kNN-hypersphere coverage: a reference point is covered when it falls in
/// the closed ball around some generated point whose radius is that point's
/// distance to its k-th nearest neighbor within the generated set.
double generalized_recall(const std::vector<Vec>& reference_set,
                          const std::vector<Vec>& generated_set, int k);

enum class VendiKernel { rbf, linear, identity_test };

/// Effective number of distinct modes: exp of the Shannon entropy of the
/// normalized kernel eigenvalues. Eigenvalues are clamped at zero before
/// normalization to absorb numerical negatives.
double vendi_score(const std::vector<Vec>& samples, const Encoder& encoder,
                   double kernel_bandwidth, VendiKernel kernel = VendiKernel::rbf);

/// Bandwidth heuristic: median pairwise embedding distance (not squared).
double median_pairwise_distance(const std::vector<Vec>& samples, const Encoder& encoder);

}  // namespace drift
