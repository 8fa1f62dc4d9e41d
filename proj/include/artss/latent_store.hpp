#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace artss::latent {

// Lower bound applied to every uncertainty scalar on ingest. sigma <= 0 is an
// error; 0 < sigma < kSigmaFloor is clamped up.
inline constexpr double kSigmaFloor = 1e-6;

// Embedding coordinates of one sample. Entries are finite and the norm is
// strictly positive, so cosine similarity is always defined.
class LatentVector {
public:
    explicit LatentVector(std::vector<double> values);

    std::span<const double> values() const noexcept { return values_; }
    std::size_t dim() const noexcept { return values_.size(); }
    double norm() const noexcept { return norm_; }
    double operator[](std::size_t i) const { return values_[i]; }

    friend bool operator==(const LatentVector& a, const LatentVector& b) {
        return a.values_ == b.values_;
    }

private:
    std::vector<double> values_;
    double norm_ = 0.0;
};

enum class Pool { Labeled, Unlabeled };

struct SampleRecord {
    std::string id;
    LatentVector z;
    double sigma;
    Pool pool = Pool::Labeled;
};

// Validates an uncertainty value for sample `id`: throws NonPositiveSigma for
// sigma <= 0, MalformedRow for NaN/Inf, returns max(sigma, kSigmaFloor).
double ingest_sigma(double sigma, const std::string& id);

// A homogeneous-dimension collection with unique ids. Immutable once handed
// to readers; all queries are const.
class SampleSet {
public:
    SampleSet() = default;
    explicit SampleSet(std::size_t dimension) : dimension_(dimension) {}

    // Throws DimensionMismatch, DuplicateId, NonPositiveSigma. Sigma below
    // the floor is clamped.
    void add(SampleRecord record);

    std::size_t size() const noexcept { return records_.size(); }
    bool empty() const noexcept { return records_.empty(); }
    std::size_t dimension() const noexcept { return dimension_; }

    const SampleRecord& operator[](std::size_t i) const { return records_[i]; }
    const std::vector<SampleRecord>& records() const noexcept { return records_; }
    auto begin() const { return records_.begin(); }
    auto end() const { return records_.end(); }

    std::optional<std::size_t> index_of(const std::string& id) const;
    bool contains(const std::string& id) const { return index_of(id).has_value(); }

private:
    std::vector<SampleRecord> records_;
    std::unordered_map<std::string, std::size_t> index_;
    std::size_t dimension_ = 0;
};

enum class Format { Csv, Jsonl };

std::optional<Format> parse_format(const std::string& name);
const char* to_string(Format format);

// CSV: `id,z_1,...,z_d,sigma` per row, optional header row starting with `id`.
// JSONL: one `{"id":..,"z":[..],"sigma":..}` object per line.
// Errors: MalformedRow(line), DimensionMismatch(line), NonPositiveSigma(id),
// ZeroVector(id), DuplicateId(id), Io.
SampleSet read_samples(std::istream& in, Format format, Pool pool = Pool::Labeled);
SampleSet load_samples(const std::filesystem::path& path, Format format,
                       Pool pool = Pool::Labeled);

// Writers use shortest round-trip number formatting, so load -> save -> load
// reproduces both the values and the file bytes.
void write_samples(std::ostream& out, const SampleSet& set, Format format);
void save_samples(const std::filesystem::path& path, const SampleSet& set, Format format);

// <a,b> / (|a||b|) clamped to [-1, 1]. Throws DimensionMismatch.
double cosine_similarity(const LatentVector& a, const LatentVector& b);

struct Neighbor {
    std::string id;
    double similarity;
    std::size_t index;  // position in the searched SampleSet
};

// Exact k-NN by cosine similarity: the min(m, available) records with the
// highest similarity, descending, ties broken by ascending id. `exclude_id`
// removes one record (the query itself) from consideration.
// Throws EmptyPool, InvalidArgument (m == 0), DimensionMismatch.
std::vector<Neighbor> nearest_neighbors(const LatentVector& query, const SampleSet& pool,
                                        std::size_t m,
                                        const std::optional<std::string>& exclude_id = std::nullopt);

// Shortest decimal representation that parses back to the same double.
std::string format_double(double value);

}  // namespace artss::latent
