#include "artss/latent_store.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "artss/error.hpp"

namespace artss::latent {

LatentVector::LatentVector(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) fail(ErrorCode::DimensionMismatch, "latent vector has dimension 0");
    double sq = 0.0;
    for (double v : values_) {
        if (!std::isfinite(v)) fail(ErrorCode::MalformedRow, "non-finite latent entry");
        sq += v * v;
    }
    norm_ = std::sqrt(sq);
    if (!(norm_ > 0.0)) fail(ErrorCode::ZeroVector, "latent vector has zero norm");
}

double ingest_sigma(double sigma, const std::string& id) {
    if (std::isnan(sigma) || std::isinf(sigma)) {
        fail(ErrorCode::MalformedRow, "non-finite sigma for id '" + id + "'");
    }
    if (sigma <= 0.0) fail(ErrorCode::NonPositiveSigma, "id '" + id + "'");
    return std::max(sigma, kSigmaFloor);
}

void SampleSet::add(SampleRecord record) {
    if (records_.empty() && dimension_ == 0) dimension_ = record.z.dim();
    if (record.z.dim() != dimension_) {
        fail(ErrorCode::DimensionMismatch, "id '" + record.id + "' has dimension " +
                                               std::to_string(record.z.dim()) + ", expected " +
                                               std::to_string(dimension_));
    }
    if (index_.count(record.id) != 0) fail(ErrorCode::DuplicateId, "id '" + record.id + "'");
    record.sigma = ingest_sigma(record.sigma, record.id);
    index_.emplace(record.id, records_.size());
    records_.push_back(std::move(record));
}

std::optional<std::size_t> SampleSet::index_of(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::optional<Format> parse_format(const std::string& name) {
    if (name == "csv") return Format::Csv;
    if (name == "jsonl") return Format::Jsonl;
    return std::nullopt;
}

const char* to_string(Format format) { return format == Format::Csv ? "csv" : "jsonl"; }

std::string format_double(double value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, ptr);
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(trim(line.substr(start)));
            break;
        }
        out.push_back(trim(line.substr(start, pos - start)));
        start = pos + 1;
    }
    return out;
}

std::optional<double> parse_number(std::string_view field) {
    if (field.empty()) return std::nullopt;
    if (field.front() == '+') field.remove_prefix(1);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc() || ptr != field.data() + field.size()) return std::nullopt;
    if (!std::isfinite(value)) return std::nullopt;
    return value;
}

SampleRecord make_record(std::size_t line, std::string id, std::vector<double> z, double sigma,
                         Pool pool) {
    if (id.empty()) fail(ErrorCode::MalformedRow, line_detail(line, "empty id"));
    double s = ingest_sigma(sigma, id);
    std::optional<LatentVector> vec;
    try {
        vec.emplace(std::move(z));
    } catch (const Error& e) {
        if (e.code() == ErrorCode::ZeroVector) fail(ErrorCode::ZeroVector, "id '" + id + "'");
        fail(e.code(), line_detail(line, e.what()));
    }
    return SampleRecord{std::move(id), std::move(*vec), s, pool};
}

void add_checked(SampleSet& set, SampleRecord record, std::size_t line) {
    if (!set.empty() && record.z.dim() != set.dimension()) {
        fail(ErrorCode::DimensionMismatch,
             line_detail(line, "dimension " + std::to_string(record.z.dim()) + ", expected " +
                                   std::to_string(set.dimension())));
    }
    set.add(std::move(record));
}

SampleSet read_csv(std::istream& in, Pool pool) {
    SampleSet set;
    std::string raw;
    std::size_t line = 0;
    bool seen_data = false;
    while (std::getline(in, raw)) {
        ++line;
        std::string_view text = trim(raw);
        if (text.empty()) continue;
        auto fields = split_commas(text);
        if (!seen_data && fields.front() == "id") continue;  // header row
        seen_data = true;
        if (fields.size() < 3) {
            fail(ErrorCode::MalformedRow, line_detail(line, "expected id, >=1 latent value, sigma"));
        }
        std::vector<double> z;
        z.reserve(fields.size() - 2);
        for (std::size_t i = 1; i + 1 < fields.size(); ++i) {
            auto v = parse_number(fields[i]);
            if (!v) fail(ErrorCode::MalformedRow, line_detail(line, "bad number '" + std::string(fields[i]) + "'"));
            z.push_back(*v);
        }
        if (!set.empty() && z.size() != set.dimension()) {
            fail(ErrorCode::DimensionMismatch,
                 line_detail(line, "dimension " + std::to_string(z.size()) + ", expected " +
                                       std::to_string(set.dimension())));
        }
        auto sigma = parse_number(fields.back());
        if (!sigma) fail(ErrorCode::MalformedRow, line_detail(line, "bad sigma '" + std::string(fields.back()) + "'"));
        add_checked(set, make_record(line, std::string(fields.front()), std::move(z), *sigma, pool), line);
    }
    if (in.bad()) fail(ErrorCode::Io, "read error");
    return set;
}

SampleSet read_jsonl(std::istream& in, Pool pool) {
    using nlohmann::json;
    SampleSet set;
    std::string raw;
    std::size_t line = 0;
    while (std::getline(in, raw)) {
        ++line;
        if (trim(raw).empty()) continue;
        json obj = json::parse(raw, nullptr, false);
        if (obj.is_discarded() || !obj.is_object()) {
            fail(ErrorCode::MalformedRow, line_detail(line, "not a JSON object"));
        }
        auto id = obj.find("id");
        auto z = obj.find("z");
        auto sigma = obj.find("sigma");
        if (id == obj.end() || !id->is_string() || z == obj.end() || !z->is_array() ||
            sigma == obj.end() || !sigma->is_number()) {
            fail(ErrorCode::MalformedRow, line_detail(line, "need string id, array z, number sigma"));
        }
        std::vector<double> values;
        values.reserve(z->size());
        for (const auto& v : *z) {
            if (!v.is_number()) fail(ErrorCode::MalformedRow, line_detail(line, "non-numeric z entry"));
            values.push_back(v.get<double>());
        }
        if (!set.empty() && values.size() != set.dimension()) {
            fail(ErrorCode::DimensionMismatch,
                 line_detail(line, "dimension " + std::to_string(values.size()) + ", expected " +
                                       std::to_string(set.dimension())));
        }
        add_checked(set,
                    make_record(line, id->get<std::string>(), std::move(values),
                                sigma->get<double>(), pool),
                    line);
    }
    if (in.bad()) fail(ErrorCode::Io, "read error");
    return set;
}

}  // namespace

SampleSet read_samples(std::istream& in, Format format, Pool pool) {
    return format == Format::Csv ? read_csv(in, pool) : read_jsonl(in, pool);
}

SampleSet load_samples(const std::filesystem::path& path, Format format, Pool pool) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::Io, "cannot open '" + path.string() + "'");
    return read_samples(in, format, pool);
}

void write_samples(std::ostream& out, const SampleSet& set, Format format) {
    if (format == Format::Csv) {
        out << "id";
        for (std::size_t j = 0; j < set.dimension(); ++j) out << ",z_" << (j + 1);
        out << ",sigma\n";
        for (const auto& r : set) {
            out << r.id;
            for (double v : r.z.values()) out << ',' << format_double(v);
            out << ',' << format_double(r.sigma) << '\n';
        }
    } else {
        for (const auto& r : set) {
            nlohmann::ordered_json obj;
            obj["id"] = r.id;
            obj["z"] = std::vector<double>(r.z.values().begin(), r.z.values().end());
            obj["sigma"] = r.sigma;
            out << obj.dump() << '\n';
        }
    }
}

void save_samples(const std::filesystem::path& path, const SampleSet& set, Format format) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::Io, "cannot write '" + path.string() + "'");
    write_samples(out, set, format);
    if (!out) fail(ErrorCode::Io, "write failed for '" + path.string() + "'");
}

double cosine_similarity(const LatentVector& a, const LatentVector& b) {
    if (a.dim() != b.dim()) {
        fail(ErrorCode::DimensionMismatch,
             "cosine of dimensions " + std::to_string(a.dim()) + " and " + std::to_string(b.dim()));
    }
    double dot = 0.0;
    for (std::size_t i = 0; i < a.dim(); ++i) dot += a[i] * b[i];
    return std::clamp(dot / (a.norm() * b.norm()), -1.0, 1.0);
}

std::vector<Neighbor> nearest_neighbors(const LatentVector& query, const SampleSet& pool,
                                        std::size_t m, const std::optional<std::string>& exclude_id) {
    if (pool.empty()) fail(ErrorCode::EmptyPool, "nearest-neighbor pool is empty");
    if (m == 0) fail(ErrorCode::InvalidArgument, "neighbor count must be >= 1");
    if (query.dim() != pool.dimension()) {
        fail(ErrorCode::DimensionMismatch, "query dimension " + std::to_string(query.dim()) +
                                               ", pool dimension " + std::to_string(pool.dimension()));
    }
    std::vector<Neighbor> all;
    all.reserve(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) {
        const auto& rec = pool[i];
        if (exclude_id && rec.id == *exclude_id) continue;
        all.push_back(Neighbor{rec.id, cosine_similarity(query, rec.z), i});
    }
    const std::size_t k = std::min(m, all.size());
    auto better = [](const Neighbor& a, const Neighbor& b) {
        if (a.similarity != b.similarity) return a.similarity > b.similarity;
        return a.id < b.id;
    };
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), better);
    all.resize(k);
    return all;
}

}  // namespace artss::latent
