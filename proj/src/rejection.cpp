#include "artss/rejection.hpp"

#include <algorithm>
#include <ostream>

#include "artss/error.hpp"

namespace artss::rejection {

double ThresholdState::mean_psi() const {
    if (labeled_psi.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& [id, psi] : labeled_psi) sum += psi;
    return sum / static_cast<double>(labeled_psi.size());
}

SimilarityIndex similarity_index(const LatentVector& query, const SampleSet& labeled,
                                 std::size_t m_nn, const std::optional<std::string>& exclude_id) {
    auto neighbors = latent::nearest_neighbors(query, labeled, m_nn, exclude_id);
    if (neighbors.empty()) fail(ErrorCode::EmptyPool, "no labeled neighbor besides the query itself");
    double sum = 0.0;
    for (const auto& n : neighbors) sum += n.similarity;
    const double psi = std::clamp(sum / static_cast<double>(neighbors.size()), -1.0, 1.0);
    return SimilarityIndex{psi, neighbors.size()};
}

SimilarityIndex similarity_index(const SampleRecord& sample, const SampleSet& labeled,
                                 std::size_t m_nn) {
    std::optional<std::string> exclude;
    if (sample.pool == latent::Pool::Labeled && labeled.contains(sample.id)) exclude = sample.id;
    return similarity_index(sample.z, labeled, m_nn, exclude);
}

ThresholdState compute_threshold(const SampleSet& labeled, std::size_t m_nn, int epoch) {
    if (labeled.size() < 2) {
        fail(ErrorCode::PoolTooSmall,
             "threshold needs >= 2 labeled samples, got " + std::to_string(labeled.size()));
    }
    if (m_nn == 0) fail(ErrorCode::InvalidArgument, "m_nn must be >= 1");
    ThresholdState state;
    state.m_nn = std::min(m_nn, labeled.size() - 1);
    state.epoch = epoch;
    for (const auto& rec : labeled) {
        auto idx = similarity_index(rec.z, labeled, state.m_nn, rec.id);
        state.labeled_psi.emplace(rec.id, idx.psi);
        state.labeled_sigma.emplace(rec.id, rec.sigma);
    }
    double sum = 0.0;
    auto sigma_it = state.labeled_sigma.begin();
    for (const auto& [id, psi] : state.labeled_psi) {
        sum += psi / sigma_it->second;
        ++sigma_it;
    }
    state.threshold = sum / static_cast<double>(state.labeled_psi.size());
    return state;
}

RejectionDecision should_reject(double psi_u, double sigma_u, const ThresholdState& state,
                                std::string id) {
    RejectionDecision d;
    d.id = std::move(id);
    d.psi = psi_u;
    d.sigma = sigma_u;
    d.score = psi_u / sigma_u;
    d.threshold = state.threshold;
    d.accepted = d.score >= state.threshold;
    d.epoch = state.epoch;
    return d;
}

FilterResult filter_with_state(const SampleSet& unlabeled, const SampleSet& labeled,
                               const ThresholdState& state) {
    if (!unlabeled.empty() && unlabeled.dimension() != labeled.dimension()) {
        fail(ErrorCode::DimensionMismatch,
             "unlabeled dimension " + std::to_string(unlabeled.dimension()) +
                 " vs labeled dimension " + std::to_string(labeled.dimension()));
    }
    FilterResult out{SampleSet(labeled.dimension()), SampleSet(labeled.dimension()), state, {}};
    out.decisions.reserve(unlabeled.size());
    for (const auto& rec : unlabeled) {
        auto idx = similarity_index(rec.z, labeled, state.m_nn);
        auto decision = should_reject(idx.psi, rec.sigma, state, rec.id);
        (decision.accepted ? out.accepted : out.rejected).add(rec);
        out.decisions.push_back(std::move(decision));
    }
    return out;
}

FilterResult filter_unlabeled(const SampleSet& unlabeled, const SampleSet& labeled,
                              std::size_t m_nn, int epoch) {
    return filter_with_state(unlabeled, labeled, compute_threshold(labeled, m_nn, epoch));
}

void write_decisions_header(std::ostream& out) {
    out << "id,psi,sigma,score,threshold,accepted,epoch\n";
}

void write_decision_row(std::ostream& out, const RejectionDecision& d) {
    using latent::format_double;
    out << d.id << ',' << format_double(d.psi) << ',' << format_double(d.sigma) << ','
        << format_double(d.score) << ',' << format_double(d.threshold) << ','
        << (d.accepted ? 1 : 0) << ',' << d.epoch << '\n';
}

void write_decisions_csv(std::ostream& out, std::span<const RejectionDecision> decisions) {
    write_decisions_header(out);
    for (const auto& d : decisions) write_decision_row(out, d);
}

nlohmann::ordered_json threshold_to_json(const ThresholdState& state) {
    nlohmann::ordered_json j;
    j["threshold"] = state.threshold;
    j["m_nn"] = state.m_nn;
    j["epoch"] = state.epoch;
    j["n_labeled"] = state.labeled_count();
    j["mean_psi"] = state.mean_psi();
    auto labeled = nlohmann::ordered_json::array();
    auto sigma_it = state.labeled_sigma.begin();
    for (const auto& [id, psi] : state.labeled_psi) {
        labeled.push_back({{"id", id}, {"psi", psi}, {"sigma", sigma_it->second}});
        ++sigma_it;
    }
    j["labeled"] = std::move(labeled);
    return j;
}

}  // namespace artss::rejection
