#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "artss/latent_store.hpp"

namespace artss::rejection {

using latent::LatentVector;
using latent::SampleRecord;
using latent::SampleSet;

inline constexpr std::size_t kDefaultNeighbors = 8;

// Mean cosine similarity of a latent to its nearest labeled latents.
struct SimilarityIndex {
    double psi = 0.0;
    std::size_t m_used = 0;
};

// Labeled-pool statistics frozen for one epoch.
//   threshold = (1 / N_l) * sum_i psi_i / sigma_i
// over the stored maps. m_nn is the neighbor count after clamping to N_l - 1.
struct ThresholdState {
    double threshold = 0.0;
    std::size_t m_nn = 0;
    std::map<std::string, double> labeled_psi;
    std::map<std::string, double> labeled_sigma;
    int epoch = 0;

    std::size_t labeled_count() const { return labeled_psi.size(); }
    // Unweighted mean of the labeled psi values (the psi-only gate).
    double mean_psi() const;
};

struct RejectionDecision {
    std::string id;
    double psi = 0.0;
    double sigma = 1.0;
    double score = 0.0;  // psi / sigma
    double threshold = 0.0;
    bool accepted = false;  // score >= threshold
    int epoch = 0;
};

struct FilterResult {
    SampleSet accepted;  // the kept subset of the unlabeled pool
    SampleSet rejected;
    ThresholdState state;
    std::vector<RejectionDecision> decisions;  // one per unlabeled record, input order
};

// psi of `query` against `labeled`, averaging over min(m_nn, available)
// neighbors; `exclude_id` drops the query's own record from the pool.
// Throws EmptyPool when no neighbor is left, DimensionMismatch.
SimilarityIndex similarity_index(const LatentVector& query, const SampleSet& labeled,
                                 std::size_t m_nn,
                                 const std::optional<std::string>& exclude_id = std::nullopt);

// Record form: a Labeled record whose id is present in `labeled` is excluded
// from its own neighborhood.
SimilarityIndex similarity_index(const SampleRecord& sample, const SampleSet& labeled,
                                 std::size_t m_nn);

// psi for every labeled record (self excluded) and the sigma-weighted
// threshold. Throws PoolTooSmall when fewer than two labeled records exist,
// InvalidArgument for m_nn == 0.
ThresholdState compute_threshold(const SampleSet& labeled, std::size_t m_nn, int epoch);

// Rejects iff psi_u / sigma_u < state.threshold.
RejectionDecision should_reject(double psi_u, double sigma_u, const ThresholdState& state,
                                std::string id = {});

// Partition of `unlabeled` under one freshly computed threshold state.
FilterResult filter_unlabeled(const SampleSet& unlabeled, const SampleSet& labeled,
                              std::size_t m_nn, int epoch);

// Same partition under an existing (epoch-frozen) state.
FilterResult filter_with_state(const SampleSet& unlabeled, const SampleSet& labeled,
                               const ThresholdState& state);

// `id,psi,sigma,score,threshold,accepted,epoch`
void write_decisions_header(std::ostream& out);
void write_decision_row(std::ostream& out, const RejectionDecision& d);
void write_decisions_csv(std::ostream& out, std::span<const RejectionDecision> decisions);

nlohmann::ordered_json threshold_to_json(const ThresholdState& state);

}  // namespace artss::rejection
