#pragma once

#include "simpop/datamodel.hpp"
#include "simpop/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace simpop {

template <typename Scalar>
struct Neighbor {
    UnitId donor_id;
    Scalar distance;

    friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

template <typename Scalar>
struct NeighborList {
    UnitId recipient = 0;
    std::vector<Neighbor<Scalar>> ranked;
};

namespace detail {

template <typename Scalar>
inline Scalar squared_distance(const Scalar* a, const Scalar* b, Eigen::Index dim) {
    Scalar sum = 0;
    for (Eigen::Index j = 0; j < dim; ++j) {
        const Scalar d = a[j] - b[j];
        sum += d * d;
    }
    return sum;
}

// Keeps the k best (squared distance, id) pairs in ascending order.
template <typename Scalar>
class BoundedList {
  public:
    explicit BoundedList(int k) : k_(static_cast<std::size_t>(k)) { items_.reserve(k_); }

    Scalar worst() const {
        return items_.size() < k_ ? std::numeric_limits<Scalar>::infinity() : items_.back().first;
    }

    void offer(Scalar d2, UnitId id) {
        if (items_.size() == k_) {
            const auto& w = items_.back();
            if (d2 > w.first || (d2 == w.first && id > w.second)) return;
        }
        if (items_.size() < k_) items_.emplace_back();
        // Shift larger entries up one slot; the last one falls off when full.
        std::size_t pos = items_.size() - 1;
        const std::pair<Scalar, UnitId> item{d2, id};
        while (pos > 0 && item < items_[pos - 1]) {
            items_[pos] = items_[pos - 1];
            --pos;
        }
        items_[pos] = item;
    }

    void emit(std::vector<Neighbor<Scalar>>& out) const {
        out.clear();
        for (const auto& [d2, id] : items_) out.push_back({id, std::sqrt(d2)});
    }

  private:
    std::size_t k_;
    std::vector<std::pair<Scalar, UnitId>> items_;
};

inline void check_k(std::size_t donors, int k) {
    if (k < 1 || static_cast<std::size_t>(k) > donors) throw TooFewDonors(donors, k);
}

}  // namespace detail

// Full distance scan plus sort; ties broken by ascending donor id. This is
// the reference the tree search is tested against.
template <typename Scalar>
void brute_force_knn(const RowMatrix<Scalar>& donors, std::span<const UnitId> ids, std::span<const Scalar> recipient,
                     int k, std::vector<Neighbor<Scalar>>& out) {
    detail::check_k(static_cast<std::size_t>(donors.rows()), k);
    if (static_cast<Eigen::Index>(recipient.size()) != donors.cols()) {
        throw DimensionMismatch("recipient has " + std::to_string(recipient.size()) + " coordinates, donors have " +
                                std::to_string(donors.cols()));
    }
    std::vector<std::pair<Scalar, UnitId>> all(static_cast<std::size_t>(donors.rows()));
    for (Eigen::Index i = 0; i < donors.rows(); ++i) {
        all[static_cast<std::size_t>(i)] = {detail::squared_distance(donors.row(i).data(), recipient.data(), donors.cols()),
                                            ids[static_cast<std::size_t>(i)]};
    }
    std::partial_sort(all.begin(), all.begin() + k, all.end());
    out.clear();
    for (int j = 0; j < k; ++j) out.push_back({all[static_cast<std::size_t>(j)].second, std::sqrt(all[static_cast<std::size_t>(j)].first)});
}

template <typename Scalar>
NeighborList<Scalar> brute_force_knn(const RowMatrix<Scalar>& donors, std::span<const UnitId> ids,
                                     std::span<const Scalar> recipient, int k) {
    NeighborList<Scalar> list;
    brute_force_knn(donors, ids, recipient, k, list.ranked);
    return list;
}

// Exact k-nearest-neighbour index over the donors of one stratum: a k-d
// tree with bucketed leaves, immutable after construction and safe to query
// from many threads at once.
template <typename Scalar>
class DonorIndex {
  public:
    DonorIndex(std::string stratum, RowMatrix<Scalar> points, std::vector<UnitId> ids, int k, int leaf_size = 32)
      : stratum_(std::move(stratum))
      , dim_(points.cols())
      , leaf_size_(std::clamp<Eigen::Index>(leaf_size, 1, kMaxLeaf)) {
        if (static_cast<std::size_t>(points.rows()) != ids.size()) {
            throw LengthMismatch("donor matrix has " + std::to_string(points.rows()) + " rows but " +
                                 std::to_string(ids.size()) + " ids");
        }
        detail::check_k(ids.size(), k);
        if (!points.allFinite()) throw Error("donor coordinates must be finite");
        if (dim_ > kMaxDim) throw DimensionMismatch("at most " + std::to_string(kMaxDim) + " matching variables");

        std::vector<Eigen::Index> order(ids.size());
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        nodes_.reserve(2 * ids.size() / static_cast<std::size_t>(leaf_size_) + 2);
        build(points, order, 0, static_cast<Eigen::Index>(order.size()));

        points_.resize(points.rows(), dim_);
        ids_.resize(ids.size());
        for (std::size_t i = 0; i < order.size(); ++i) {
            points_.row(static_cast<Eigen::Index>(i)) = points.row(order[i]);
            ids_[i] = ids[static_cast<std::size_t>(order[i])];
        }
    }

    const std::string& stratum() const { return stratum_; }
    std::size_t size() const { return ids_.size(); }
    Eigen::Index dim() const { return dim_; }

    void query(std::span<const Scalar> recipient, int k, std::vector<Neighbor<Scalar>>& out) const {
        detail::check_k(ids_.size(), k);
        if (static_cast<Eigen::Index>(recipient.size()) != dim_) {
            throw DimensionMismatch("recipient has " + std::to_string(recipient.size()) + " coordinates, index has " +
                                    std::to_string(dim_));
        }
        detail::BoundedList<Scalar> best(k);
        Scalar offsets[kMaxDim] = {};
        search(0, recipient.data(), offsets, Scalar(0), best);
        best.emit(out);
    }

    NeighborList<Scalar> query(std::span<const Scalar> recipient, int k) const {
        NeighborList<Scalar> list;
        query(recipient, k, list.ranked);
        return list;
    }

  private:
    static constexpr Eigen::Index kMaxDim = 64;
    static constexpr Eigen::Index kMaxLeaf = 256;
    // Lower bounds are accumulated incrementally, so allow a little rounding
    // slack before pruning; a pruned subtree must never hold a tie.
    static constexpr Scalar kPruneSlack = Scalar(1) + Scalar(64) * std::numeric_limits<Scalar>::epsilon();

    struct Node {
        Eigen::Index begin;
        Eigen::Index end;
        int left = -1;
        int right = -1;
        Eigen::Index axis = 0;
        Scalar split = 0;
    };

    int build(const RowMatrix<Scalar>& pts, std::vector<Eigen::Index>& order, Eigen::Index begin, Eigen::Index end) {
        const int id = static_cast<int>(nodes_.size());
        nodes_.push_back({begin, end});

        Eigen::Index axis = 0;
        Scalar widest = -1;
        for (Eigen::Index j = 0; j < dim_; ++j) {
            Scalar lo = std::numeric_limits<Scalar>::infinity();
            Scalar hi = -lo;
            for (Eigen::Index i = begin; i < end; ++i) {
                const Scalar v = pts(order[static_cast<std::size_t>(i)], j);
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            if (hi - lo > widest) {
                widest = hi - lo;
                axis = j;
            }
        }
        if (end - begin <= leaf_size_ || widest <= 0) return id;

        const Eigen::Index mid = begin + (end - begin) / 2;
        auto first = order.begin() + begin;
        std::nth_element(first, order.begin() + mid, order.begin() + end,
                         [&](Eigen::Index a, Eigen::Index b) { return pts(a, axis) < pts(b, axis); });
        const Scalar split = pts(order[static_cast<std::size_t>(mid)], axis);

        const int left = build(pts, order, begin, mid);
        const int right = build(pts, order, mid, end);
        auto& node = nodes_[static_cast<std::size_t>(id)];
        node.left = left;
        node.right = right;
        node.axis = axis;
        node.split = split;
        return id;
    }

    // Leaves are scanned a column at a time so the distance loop vectorizes;
    // each distance is still summed in dimension order, exactly as the brute
    // force does.
    void scan(const Node& node, const Scalar* q, detail::BoundedList<Scalar>& best) const {
        // A leaf of identical points can exceed the buffer.
        for (Eigen::Index b = node.begin; b < node.end; b += kMaxLeaf) scan(b, std::min(node.end, b + kMaxLeaf), q, best);
    }

    void scan(Eigen::Index begin, Eigen::Index end, const Scalar* q, detail::BoundedList<Scalar>& best) const {
        const Eigen::Index n = end - begin;
        Scalar d2[kMaxLeaf];
        std::fill(d2, d2 + n, Scalar(0));
        for (Eigen::Index j = 0; j < dim_; ++j) {
            const Scalar* col = points_.col(j).data() + begin;
            const Scalar qj = q[j];
            for (Eigen::Index i = 0; i < n; ++i) {
                const Scalar d = col[i] - qj;
                d2[i] += d * d;
            }
        }
        Scalar worst = best.worst();
        for (Eigen::Index i = 0; i < n; ++i) {
            if (d2[i] <= worst) {
                best.offer(d2[i], ids_[static_cast<std::size_t>(begin + i)]);
                worst = best.worst();
            }
        }
    }

    // Depth first, nearer child first; `bound` is the squared distance from q
    // to the node's cell, kept up to date through the per-axis offsets.
    void search(int node_id, const Scalar* q, Scalar* offsets, Scalar bound, detail::BoundedList<Scalar>& best) const {
        const Node& node = nodes_[static_cast<std::size_t>(node_id)];
        if (node.left < 0) {
            scan(node, q, best);
            return;
        }
        const Scalar diff = q[node.axis] - node.split;
        const int near = diff < 0 ? node.left : node.right;
        const int far = diff < 0 ? node.right : node.left;
        search(near, q, offsets, bound, best);
        const Scalar old = offsets[node.axis];
        const Scalar far_bound = bound - old * old + diff * diff;
        if (far_bound <= best.worst() * kPruneSlack) {
            offsets[node.axis] = diff;
            search(far, q, offsets, far_bound, best);
            offsets[node.axis] = old;
        }
    }

    std::string stratum_;
    Eigen::Index dim_;
    Eigen::Index leaf_size_;
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> points_;  // column-major, in leaf order
    std::vector<UnitId> ids_;
    std::vector<Node> nodes_;
};

}  // namespace simpop
