#include "simpop/sampler.hpp"

#include "simpop/parallel.hpp"
#include "simpop/rng.hpp"

#include <algorithm>
#include <unordered_map>

namespace simpop {

void DesignSpec::check() const {
    if (replicates < 1) throw ValidationError("design needs at least one replicate");
    for (const auto& [cluster, slots] : out_of_scope_slots) {
        if (slots < 0) throw ValidationError("negative out-of-scope slot count for cluster " + std::to_string(cluster));
    }
}

ClusterPlan::ClusterPlan(const ArtificialPopulation& pop, const DesignSpec& design)
  : domains_(pop.aux.domain.levels.size())
  , domain_codes_(pop.aux.domain.codes)
  , unit_ids_(pop.aux.unit_id) {
    design.check();
    std::map<std::int64_t, Cluster> by_id;
    for (std::size_t i = 0; i < pop.rows(); ++i) {
        auto& c = by_id.try_emplace(pop.aux.cluster_id[i], Cluster{pop.aux.cluster_id[i], {}, 0}).first->second;
        if (pop.aux.in_scope[i]) c.rows.push_back(i);
        ++c.slots;
    }
    for (const auto& [id, extra] : design.out_of_scope_slots) {
        auto it = by_id.find(id);
        if (it != by_id.end()) it->second.slots += extra;
    }
    clusters_.reserve(by_id.size());
    for (auto& [id, c] : by_id) {
        if (c.slots < 1) throw EmptyCluster(id);
        std::sort(c.rows.begin(), c.rows.end(), [&](std::size_t a, std::size_t b) { return unit_ids_[a] < unit_ids_[b]; });
        clusters_.push_back(std::move(c));
    }
}

std::vector<double> ClusterPlan::expected_domain_size() const {
    std::vector<double> out(domains_, 0.0);
    for (const auto& c : clusters_) {
        for (auto r : c.rows) out[static_cast<std::size_t>(domain_codes_[r])] += 1.0 / static_cast<double>(c.slots);
    }
    return out;
}

SampleReplicate draw_replicate(const ClusterPlan& plan, const DesignSpec& design, int rep_index) {
    if (rep_index < 1) throw ValidationError("replicate index must be at least 1");
    SampleReplicate rep;
    rep.rep_index = rep_index;
    rep.domain_size.assign(plan.domains(), 0);
    rep.rows.reserve(plan.clusters().size());
    for (const auto& c : plan.clusters()) {
        Stream rng(design.master_seed, StreamTag::sample, static_cast<std::uint64_t>(c.id), static_cast<std::uint32_t>(rep_index));
        const auto slot = rng.below(static_cast<std::uint64_t>(c.slots));
        if (slot >= c.rows.size()) continue;
        const std::size_t row = c.rows[slot];
        rep.rows.push_back(row);
        rep.selected.push_back(plan.unit_ids()[row]);
        ++rep.domain_size[static_cast<std::size_t>(plan.domain_codes()[row])];
    }
    return rep;
}

SampleReplicate draw_replicate(const ArtificialPopulation& pop, const DesignSpec& design, int rep_index) {
    return draw_replicate(ClusterPlan(pop, design), design, rep_index);
}

std::vector<SampleReplicate> draw_replicates(const ClusterPlan& plan, const DesignSpec& design, int workers) {
    design.check();
    std::vector<SampleReplicate> reps(static_cast<std::size_t>(design.replicates));
    parallel_for(reps.size(), workers, [&](std::size_t begin, std::size_t end) {
        for (std::size_t r = begin; r < end; ++r) reps[r] = draw_replicate(plan, design, static_cast<int>(r + 1));
    });
    return reps;
}

std::vector<SampleReplicate> draw_replicates(const ArtificialPopulation& pop, const DesignSpec& design, int workers) {
    return draw_replicates(ClusterPlan(pop, design), design, workers);
}

std::string emit_replicates(const std::vector<SampleReplicate>& reps, const std::string& comment) {
    std::string out;
    if (!comment.empty()) out += "# " + comment + "\n";
    out += "rep_index,unit_id\n";
    for (const auto& rep : reps) {
        const std::string prefix = std::to_string(rep.rep_index) + ",";
        for (auto id : rep.selected) {
            out += prefix;
            out += std::to_string(id);
            out += '\n';
        }
    }
    return out;
}

std::vector<SampleReplicate> parse_replicates(const csv::Table& table, const ArtificialPopulation& pop) {
    const auto c_rep = table.require("rep_index");
    const auto c_unit = table.require("unit_id");
    std::unordered_map<UnitId, std::size_t> row_of;
    row_of.reserve(pop.rows());
    for (std::size_t i = 0; i < pop.rows(); ++i) row_of.emplace(pop.aux.unit_id[i], i);

    std::map<int, SampleReplicate> reps;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto line = static_cast<std::int64_t>(r + 1);
        const auto rep_index = static_cast<int>(csv::parse_int(table.rows[r][c_rep], line, "rep_index"));
        const auto unit = csv::parse_int(table.rows[r][c_unit], line, "unit_id");
        auto it = row_of.find(unit);
        if (it == row_of.end()) throw ValidationError("replicate unit " + std::to_string(unit) + " not in population");
        auto& rep = reps[rep_index];
        if (rep.domain_size.empty()) {
            rep.rep_index = rep_index;
            rep.domain_size.assign(pop.aux.domain.levels.size(), 0);
        }
        rep.selected.push_back(unit);
        rep.rows.push_back(it->second);
        ++rep.domain_size[static_cast<std::size_t>(pop.aux.domain.codes[it->second])];
    }
    std::vector<SampleReplicate> out;
    out.reserve(reps.size());
    for (auto& [idx, rep] : reps) out.push_back(std::move(rep));
    return out;
}

}  // namespace simpop
