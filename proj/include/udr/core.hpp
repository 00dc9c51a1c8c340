#pragma once

// Domain types shared by every module: factor specifications, latent
// responses, model sets and score tables. Construction validates; all
// types are plain values and immutable once built.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

namespace udr {

class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dense row-major matrix.
template <typename T>
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, T fill = T{})
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<T> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw ValidationError("matrix data size does not match shape");
        }
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return data_.empty(); }

    T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::vector<T> col(std::size_t c) const {
        std::vector<T> out(rows_);
        for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
        return out;
    }

    const std::vector<T>& data() const noexcept { return data_; }
    std::vector<T>& data() noexcept { return data_; }

    Matrix transposed() const {
        Matrix out(cols_, rows_);
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t c = 0; c < cols_; ++c) out(c, r) = (*this)(r, c);
        return out;
    }

    /// Rows picked by index, in the given order.
    Matrix select_rows(std::span<const std::size_t> idx) const {
        Matrix out(idx.size(), cols_);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            auto src = row(idx[i]);
            std::copy(src.begin(), src.end(), out.row(i).begin());
        }
        return out;
    }

    Matrix select_cols(std::span<const std::size_t> idx) const {
        Matrix out(rows_, idx.size());
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t j = 0; j < idx.size(); ++j) out(r, j) = (*this)(r, idx[j]);
        return out;
    }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

using MatrixD = Matrix<double>;
using MatrixI = Matrix<std::int32_t>;

struct Factor {
    std::string name;
    int cardinality = 2;
    bool circular = false;

    friend bool operator==(const Factor&, const Factor&) = default;
};

/// Ground-truth generative factor space.
class FactorSpec {
public:
    FactorSpec() = default;
    explicit FactorSpec(std::vector<Factor> factors) : factors_(std::move(factors)) { validate(); }

    std::size_t size() const noexcept { return factors_.size(); }
    const Factor& operator[](std::size_t k) const { return factors_.at(k); }
    const std::vector<Factor>& factors() const noexcept { return factors_; }

    std::vector<int> cardinalities() const {
        std::vector<int> out;
        out.reserve(factors_.size());
        for (const auto& f : factors_) out.push_back(f.cardinality);
        return out;
    }

    /// Product of cardinalities; nullopt if it overflows 64 bits.
    std::optional<std::uint64_t> product() const {
        std::uint64_t p = 1;
        for (const auto& f : factors_) {
            auto c = static_cast<std::uint64_t>(f.cardinality);
            if (p > std::numeric_limits<std::uint64_t>::max() / c) return std::nullopt;
            p *= c;
        }
        return p;
    }

    /// Mixed-radix index of a factor assignment (last factor varies fastest).
    std::uint64_t flat_index(std::span<const std::int32_t> values) const {
        std::uint64_t idx = 0;
        for (std::size_t k = 0; k < factors_.size(); ++k) {
            idx = idx * static_cast<std::uint64_t>(factors_[k].cardinality) +
                  static_cast<std::uint64_t>(values[k]);
        }
        return idx;
    }

    friend bool operator==(const FactorSpec&, const FactorSpec&) = default;

private:
    void validate() const {
        if (factors_.empty()) throw ValidationError("factor spec needs at least one factor");
        std::set<std::string> names;
        for (const auto& f : factors_) {
            if (f.cardinality < 2) {
                throw ValidationError("factor '" + f.name + "' has cardinality < 2");
            }
            if (!names.insert(f.name).second) {
                throw ValidationError("duplicate factor name '" + f.name + "'");
            }
        }
    }

    std::vector<Factor> factors_;
};

/// Factor assignments for an ordered sample set.
class FactorGrid {
public:
    FactorGrid() = default;
    FactorGrid(FactorSpec spec, MatrixI assignments)
        : spec_(std::move(spec)), assignments_(std::move(assignments)) {
        if (assignments_.cols() != spec_.size()) {
            throw ValidationError("factor grid has " + std::to_string(assignments_.cols()) +
                                  " columns but spec has " + std::to_string(spec_.size()) +
                                  " factors");
        }
        for (std::size_t n = 0; n < assignments_.rows(); ++n) {
            for (std::size_t k = 0; k < spec_.size(); ++k) {
                auto v = assignments_(n, k);
                if (v < 0 || v >= spec_[k].cardinality) {
                    throw ValidationError("factor value out of range in row " + std::to_string(n) +
                                          ", factor '" + spec_[k].name + "'");
                }
            }
        }
    }

    const FactorSpec& spec() const noexcept { return spec_; }
    const MatrixI& assignments() const noexcept { return assignments_; }
    std::size_t size() const noexcept { return assignments_.rows(); }
    std::size_t num_factors() const noexcept { return spec_.size(); }

    friend bool operator==(const FactorGrid&, const FactorGrid&) = default;

private:
    FactorSpec spec_;
    MatrixI assignments_;
};

/// Mean posterior responses of one model over an ordered sample set, plus
/// the dataset-averaged per-dimension KL divergence from the prior.
class LatentResponse {
public:
    LatentResponse() = default;
    LatentResponse(MatrixD values, std::vector<double> kl, std::vector<std::int64_t> sample_ids = {})
        : values_(std::move(values)), kl_(std::move(kl)), sample_ids_(std::move(sample_ids)) {
        if (sample_ids_.empty()) {
            sample_ids_.resize(values_.rows());
            for (std::size_t i = 0; i < sample_ids_.size(); ++i)
                sample_ids_[i] = static_cast<std::int64_t>(i);
        }
        validate();
    }

    std::size_t num_samples() const noexcept { return values_.rows(); }
    std::size_t num_latents() const noexcept { return values_.cols(); }
    const MatrixD& values() const noexcept { return values_; }
    const std::vector<double>& kl() const noexcept { return kl_; }
    const std::vector<std::int64_t>& sample_ids() const noexcept { return sample_ids_; }

    friend bool operator==(const LatentResponse&, const LatentResponse&) = default;

private:
    void validate() const {
        if (values_.rows() < 2) throw ValidationError("latent response needs N >= 2 samples");
        if (values_.cols() < 1) throw ValidationError("latent response needs L >= 1 latents");
        if (kl_.size() != values_.cols()) {
            throw ValidationError("kl vector has length " + std::to_string(kl_.size()) +
                                  " but response has L = " + std::to_string(values_.cols()));
        }
        if (sample_ids_.size() != values_.rows()) {
            throw ValidationError("sample_ids length does not match N");
        }
        for (double v : values_.data()) {
            if (!std::isfinite(v)) throw ValidationError("non-finite latent value");
        }
        for (double k : kl_) {
            if (!std::isfinite(k) || k < 0.0) throw ValidationError("kl entries must be finite and >= 0");
        }
        for (std::size_t i = 1; i < sample_ids_.size(); ++i) {
            if (sample_ids_[i] <= sample_ids_[i - 1]) {
                throw ValidationError("sample_ids must be strictly increasing");
            }
        }
    }

    MatrixD values_;
    std::vector<double> kl_;
    std::vector<std::int64_t> sample_ids_;
};

/// Free-form string metadata (encoder configs, quality labels).
using Metadata = std::map<std::string, std::string>;

struct ModelRecord {
    std::string model_id;
    int hyper_index = 0;
    int seed_index = 0;
    LatentResponse response;
    Metadata metadata;

    friend bool operator==(const ModelRecord&, const ModelRecord&) = default;
};

/// A population of models over one shared ordered sample set.
class ModelSet {
public:
    ModelSet() = default;
    ModelSet(std::vector<ModelRecord> records, std::optional<FactorGrid> grid = std::nullopt,
             Metadata metadata = {})
        : records_(std::move(records)), grid_(std::move(grid)), metadata_(std::move(metadata)) {
        validate();
    }

    const std::vector<ModelRecord>& records() const noexcept { return records_; }
    const ModelRecord& operator[](std::size_t i) const { return records_.at(i); }
    std::size_t size() const noexcept { return records_.size(); }
    bool empty() const noexcept { return records_.empty(); }
    const std::optional<FactorGrid>& factor_grid() const noexcept { return grid_; }
    const Metadata& metadata() const noexcept { return metadata_; }

    std::size_t num_samples() const { return records_.empty() ? 0 : records_[0].response.num_samples(); }
    std::size_t num_latents() const { return records_.empty() ? 0 : records_[0].response.num_latents(); }

    /// Number of distinct hyper indices (max index + 1).
    int num_hypers() const {
        int h = 0;
        for (const auto& r : records_) h = std::max(h, r.hyper_index + 1);
        return h;
    }

    std::optional<std::size_t> find(const std::string& model_id) const {
        for (std::size_t i = 0; i < records_.size(); ++i)
            if (records_[i].model_id == model_id) return i;
        return std::nullopt;
    }

    friend bool operator==(const ModelSet&, const ModelSet&) = default;

private:
    void validate() const {
        std::set<std::pair<int, int>> slots;
        std::set<std::string> ids;
        for (const auto& r : records_) {
            if (r.hyper_index < 0 || r.seed_index < 0) {
                throw ValidationError("negative hyper/seed index for model '" + r.model_id + "'");
            }
            if (!slots.insert({r.hyper_index, r.seed_index}).second) {
                throw ValidationError("duplicate (hyper_index, seed_index) = (" +
                                      std::to_string(r.hyper_index) + ", " +
                                      std::to_string(r.seed_index) + ")");
            }
            if (!ids.insert(r.model_id).second) {
                throw ValidationError("duplicate model_id '" + r.model_id + "'");
            }
        }
        if (records_.empty()) {
            if (grid_) throw ValidationError("factor grid given for an empty model set");
            return;
        }
        const auto& first = records_.front().response;
        for (const auto& r : records_) {
            if (r.response.num_samples() != first.num_samples() ||
                r.response.num_latents() != first.num_latents()) {
                throw ValidationError("dimension mismatch: model '" + r.model_id +
                                      "' differs in N or L from the first record");
            }
            if (r.response.sample_ids() != first.sample_ids()) {
                throw ValidationError("sample ordering of model '" + r.model_id +
                                      "' differs from the first record");
            }
        }
        if (grid_ && grid_->size() != first.num_samples()) {
            throw ValidationError("factor grid has " + std::to_string(grid_->size()) +
                                  " rows but models have N = " + std::to_string(first.num_samples()));
        }
    }

    std::vector<ModelRecord> records_;
    std::optional<FactorGrid> grid_;
    Metadata metadata_;
};

struct ScoreRow {
    std::string model_id;
    int hyper_index = 0;
    int seed_index = 0;
    std::string metric;
    double score = 0.0;
    int d = 0;

    friend bool operator==(const ScoreRow&, const ScoreRow&) = default;
};

/// Per-model scores for any number of metrics.
class ScoreTable {
public:
    ScoreTable() = default;
    explicit ScoreTable(std::vector<ScoreRow> rows) {
        for (auto& r : rows) add(std::move(r));
    }

    void add(ScoreRow row) {
        if (!std::isfinite(row.score) || row.score < 0.0 || row.score > 1.0) {
            throw ValidationError("score for '" + row.model_id + "' / " + row.metric +
                                  " outside [0, 1]");
        }
        if (row.d < 0) throw ValidationError("informative count d must be >= 0");
        rows_.push_back(std::move(row));
    }

    const std::vector<ScoreRow>& rows() const noexcept { return rows_; }
    std::size_t size() const noexcept { return rows_.size(); }

    std::vector<std::string> metrics() const {
        std::vector<std::string> out;
        for (const auto& r : rows_)
            if (std::find(out.begin(), out.end(), r.metric) == out.end()) out.push_back(r.metric);
        return out;
    }

    /// model_id -> score for one metric.
    std::map<std::string, double> slice(const std::string& metric) const {
        std::map<std::string, double> out;
        for (const auto& r : rows_)
            if (r.metric == metric) out[r.model_id] = r.score;
        return out;
    }

    /// Replaces every row of the metrics present in `other`.
    void merge(const ScoreTable& other) {
        auto incoming = other.metrics();
        std::erase_if(rows_, [&](const ScoreRow& r) {
            return std::find(incoming.begin(), incoming.end(), r.metric) != incoming.end();
        });
        for (const auto& r : other.rows_) rows_.push_back(r);
        sort();
    }

    /// Canonical order: metric, hyper, seed, model id.
    void sort() {
        std::stable_sort(rows_.begin(), rows_.end(), [](const ScoreRow& a, const ScoreRow& b) {
            return std::tie(a.metric, a.hyper_index, a.seed_index, a.model_id) <
                   std::tie(b.metric, b.hyper_index, b.seed_index, b.model_id);
        });
    }

    friend bool operator==(const ScoreTable&, const ScoreTable&) = default;

private:
    std::vector<ScoreRow> rows_;
};

}  // namespace udr
