#include "drift/diversity.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

#include "drift/rng.hpp"

namespace drift {

namespace {

double squared_distance(const Vec& a, const Vec& b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

void check_finite(const Vec& v) {
    for (double x : v)
        if (!std::isfinite(x)) throw std::invalid_argument("non-finite embedding");
}

}  // namespace

Encoder Encoder::identity() {
    Encoder e;
    e.kind_ = Kind::identity;
    return e;
}

Encoder Encoder::random_projection(int input_dim, int output_dim, uint64_t seed) {
    if (input_dim < 1 || output_dim < 1)
        throw std::invalid_argument("projection dims must be positive");
    Encoder e;
    e.kind_ = Kind::random_projection;
    e.input_dim_ = input_dim;
    e.output_dim_ = output_dim;
    e.seed_ = seed;
    e.projection_.resize(static_cast<size_t>(output_dim) * input_dim);
    Rng rng(stream_key({seed, 0x70726f6aULL}));  // "proj"
    const double scale = 1.0 / std::sqrt(static_cast<double>(output_dim));
    for (double& w : e.projection_) w = scale * rng.normal();
    return e;
}

Encoder Encoder::external_table(std::vector<Vec> table) {
    Encoder e;
    e.kind_ = Kind::external_table;
    e.table_ = std::move(table);
    return e;
}

Vec Encoder::encode(const Vec& x, int row_index) const {
    switch (kind_) {
        case Kind::identity:
            return x;
        case Kind::random_projection: {
            if (static_cast<int>(x.size()) != input_dim_)
                throw std::invalid_argument("projection input dim mismatch");
            Vec out(output_dim_, 0.0);
            for (int i = 0; i < output_dim_; ++i) {
                double acc = 0.0;
                for (int j = 0; j < input_dim_; ++j)
                    acc += projection_[static_cast<size_t>(i) * input_dim_ + j] * x[j];
                out[i] = acc;
            }
            return out;
        }
        case Kind::external_table:
            if (row_index < 0 || row_index >= static_cast<int>(table_.size()))
                throw std::out_of_range("external_table row index out of range");
            return table_[row_index];
    }
    throw std::logic_error("unknown encoder kind");
}

std::vector<Vec> Encoder::encode_all(const std::vector<Vec>& xs) const {
    std::vector<Vec> out;
    out.reserve(xs.size());
    for (size_t i = 0; i < xs.size(); ++i) out.push_back(encode(xs[i], static_cast<int>(i)));
    return out;
}

DiversityMatrix pairwise_diversity(const std::vector<Vec>& samples, const Encoder& encoder) {
    const int n = static_cast<int>(samples.size());
    if (n < 2) throw std::invalid_argument("pairwise_diversity needs at least 2 samples");
    const std::vector<Vec> emb = encoder.encode_all(samples);
    for (const Vec& e : emb) check_finite(e);

    DiversityMatrix m;
    m.n = n;
    m.pairwise.assign(static_cast<size_t>(n) * n, 0.0);
    m.per_sample.assign(n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const double d = squared_distance(emb[i], emb[j]);
            m.pairwise[static_cast<size_t>(i) * n + j] = d;
            m.pairwise[static_cast<size_t>(j) * n + i] = d;
        }
    for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int j = 0; j < n; ++j)
            if (j != i) acc += m.at(i, j);
        m.per_sample[i] = acc / (n - 1);
    }
    return m;
}

double set_diversity(const std::vector<std::vector<Vec>>& samples_per_prompt,
                     const Encoder& encoder) {
    if (samples_per_prompt.empty()) throw std::invalid_argument("no prompt buckets");
    const size_t g = samples_per_prompt.front().size();
    if (g < 2) throw std::invalid_argument("each bucket needs G >= 2 samples");
    double total = 0.0;
    for (const auto& bucket : samples_per_prompt) {
        if (bucket.size() != g) throw std::invalid_argument("ragged prompt buckets");
        const std::vector<Vec> emb = encoder.encode_all(bucket);
        double acc = 0.0;
        for (size_t i = 0; i < g; ++i)
            for (size_t j = i + 1; j < g; ++j) acc += squared_distance(emb[i], emb[j]);
        total += 2.0 * acc / (static_cast<double>(g) * (g - 1));
    }
    return total / static_cast<double>(samples_per_prompt.size());
}

double clip_style_diversity(const std::vector<std::vector<Vec>>& samples_per_prompt,
                            const Encoder& second_encoder) {
    return set_diversity(samples_per_prompt, second_encoder);
}

double generalized_recall(const std::vector<Vec>& reference_set,
                          const std::vector<Vec>& generated_set, int k) {
    const int n_ref = static_cast<int>(reference_set.size());
    const int n_gen = static_cast<int>(generated_set.size());
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    if (n_ref <= k || n_gen <= k)
        throw std::invalid_argument("both sets must be larger than k");

    // Radius of each generated point: squared distance to its k-th nearest
    // neighbor among the other generated points.
    std::vector<double> radius_sq(n_gen);
    std::vector<double> row(n_gen - 1);
    for (int j = 0; j < n_gen; ++j) {
        int idx = 0;
        for (int l = 0; l < n_gen; ++l)
            if (l != j) row[idx++] = squared_distance(generated_set[j], generated_set[l]);
        std::nth_element(row.begin(), row.begin() + (k - 1), row.end());
        radius_sq[j] = row[k - 1];
    }

    int covered = 0;
    for (int i = 0; i < n_ref; ++i) {
        for (int j = 0; j < n_gen; ++j) {
            // Closed ball: boundary counts as inside.
            if (squared_distance(reference_set[i], generated_set[j]) <= radius_sq[j]) {
                ++covered;
                break;
            }
        }
    }
    return static_cast<double>(covered) / n_ref;
}

double vendi_score(const std::vector<Vec>& samples, const Encoder& encoder,
                   double kernel_bandwidth, VendiKernel kernel) {
    const int n = static_cast<int>(samples.size());
    if (n < 1) throw std::invalid_argument("vendi_score needs at least one sample");
    if (kernel == VendiKernel::rbf && !(kernel_bandwidth > 0.0))
        throw std::invalid_argument("rbf bandwidth must be positive");
    const std::vector<Vec> emb = encoder.encode_all(samples);
    for (const Vec& e : emb) check_finite(e);

    Eigen::MatrixXd kmat(n, n);
    switch (kernel) {
        case VendiKernel::rbf: {
            const double inv = 1.0 / (2.0 * kernel_bandwidth * kernel_bandwidth);
            for (int i = 0; i < n; ++i) {
                kmat(i, i) = 1.0;
                for (int j = i + 1; j < n; ++j) {
                    const double v = std::exp(-squared_distance(emb[i], emb[j]) * inv);
                    kmat(i, j) = v;
                    kmat(j, i) = v;
                }
            }
            break;
        }
        case VendiKernel::linear: {
            for (int i = 0; i < n; ++i)
                for (int j = i; j < n; ++j) {
                    double dot = 0.0;
                    for (size_t l = 0; l < emb[i].size(); ++l) dot += emb[i][l] * emb[j][l];
                    kmat(i, j) = dot;
                    kmat(j, i) = dot;
                }
            break;
        }
        case VendiKernel::identity_test:
            kmat = Eigen::MatrixXd::Identity(n, n);
            break;
    }
    kmat /= static_cast<double>(n);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(kmat, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success)
        throw std::runtime_error("kernel eigendecomposition failed");

    double lambda_sum = 0.0;
    std::vector<double> lambdas(n);
    for (int i = 0; i < n; ++i) {
        lambdas[i] = std::max(0.0, solver.eigenvalues()(i));
        lambda_sum += lambdas[i];
    }
    if (lambda_sum <= 0.0) throw std::runtime_error("kernel matrix has zero trace");

    double entropy = 0.0;
    for (double l : lambdas) {
        const double p = l / lambda_sum;
        if (p > 0.0) entropy -= p * std::log(p);
    }
    return std::exp(entropy);
}

double median_pairwise_distance(const std::vector<Vec>& samples, const Encoder& encoder) {
    const int n = static_cast<int>(samples.size());
    if (n < 2) throw std::invalid_argument("need at least two samples");
    const std::vector<Vec> emb = encoder.encode_all(samples);
    std::vector<double> dists;
    dists.reserve(static_cast<size_t>(n) * (n - 1) / 2);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            dists.push_back(std::sqrt(squared_distance(emb[i], emb[j])));
    std::nth_element(dists.begin(), dists.begin() + dists.size() / 2, dists.end());
    return dists[dists.size() / 2];
}

}  // namespace drift
