#pragma once

#include "simpop/datamodel.hpp"

#include <cstdint>
#include <map>
#include <vector>

namespace simpop {

struct DesignSpec {
    int replicates = 2500;
    std::uint64_t master_seed = 0;
    // Extra out-of-scope slots per cluster id; drawing one leaves the
    // cluster unsampled in that replicate.
    std::map<std::int64_t, std::int64_t> out_of_scope_slots;

    void check() const;
};

struct SampleReplicate {
    int rep_index = 0;
    std::vector<UnitId> selected;          // ascending cluster order
    std::vector<std::size_t> rows;         // population rows of `selected`
    std::vector<std::int64_t> domain_size; // n_d by population domain code
};

// Clusters of a population in ascending id order, each with its in-scope
// rows sorted by unit id and its total slot count. Units flagged out of
// scope in the population count as out-of-scope slots.
class ClusterPlan {
  public:
    ClusterPlan(const ArtificialPopulation& pop, const DesignSpec& design);

    struct Cluster {
        std::int64_t id;
        std::vector<std::size_t> rows;
        std::int64_t slots;
    };

    const std::vector<Cluster>& clusters() const { return clusters_; }
    std::size_t domains() const { return domains_; }
    const std::vector<std::int32_t>& domain_codes() const { return domain_codes_; }
    const std::vector<UnitId>& unit_ids() const { return unit_ids_; }

    // Expected n_d: sum over clusters of (in-scope units of d) / slots.
    std::vector<double> expected_domain_size() const;

  private:
    std::vector<Cluster> clusters_;
    std::size_t domains_;
    std::vector<std::int32_t> domain_codes_;
    std::vector<UnitId> unit_ids_;
};

// One slot per cluster, uniform over in-scope units and out-of-scope slots,
// keyed by (seed, rep_index, cluster_id) so any replicate can be redrawn alone.
SampleReplicate draw_replicate(const ClusterPlan& plan, const DesignSpec& design, int rep_index);
SampleReplicate draw_replicate(const ArtificialPopulation& pop, const DesignSpec& design, int rep_index);

// Replicates 1..R.
std::vector<SampleReplicate> draw_replicates(const ClusterPlan& plan, const DesignSpec& design, int workers = 1);
std::vector<SampleReplicate> draw_replicates(const ArtificialPopulation& pop, const DesignSpec& design, int workers = 1);

std::string emit_replicates(const std::vector<SampleReplicate>& reps, const std::string& comment = {});
// Rebuilds replicates from `rep_index,unit_id` rows against a population.
std::vector<SampleReplicate> parse_replicates(const csv::Table& table, const ArtificialPopulation& pop);

}  // namespace simpop
