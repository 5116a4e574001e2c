#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "cflsim/rng.hpp"

namespace cflsim {

using ItemId = std::size_t;

/// Items grouped by class. `priors` are the class fractions at construction
/// and stay fixed while items are drawn out of `classes`.
struct LabeledPool {
    std::vector<std::vector<ItemId>> classes;
    std::vector<double> priors;

    /// One class per entry of `counts`; item ids are assigned consecutively.
    static LabeledPool from_counts(const std::vector<std::size_t>& counts);
    /// Groups `items` by `label_of[item]` into `num_classes` classes.
    static LabeledPool from_items(const std::vector<ItemId>& items, const std::vector<int>& label_of,
                                  int num_classes);

    std::size_t total() const;
};

/// subsets[client][round] is an ordered list of item ids.
struct PartitionManifest {
    std::vector<std::vector<std::vector<ItemId>>> subsets;
    double alpha = 0.0;
    double beta = 0.0;
    std::uint64_t seed = 0;
    std::size_t subset_size = 0;

    std::size_t clients() const { return subsets.size(); }
    /// A client's subsets concatenated in round order.
    std::vector<ItemId> sequence(std::size_t client) const;
};

/// Label-skewed split: per client theta ~ Dirichlet(alpha * priors); draw a class
/// from theta, take a uniform item of that class out of the pool. Emptied classes
/// are dropped from theta via renormalize. Every client gets exactly N items;
/// drawn items are removed from `pool`.
PartitionManifest dirichlet_split(LabeledPool& pool, std::size_t M, std::size_t N, double alpha,
                                  DerivedStream& rng);

/// Zeroes entry i and rescales the rest to sum to one, keeping their ratios.
std::vector<double> renormalize(const std::vector<double>& theta, std::size_t i);

/// Two-level split: N items to each of M clients with concentration alpha, then
/// each client's items into T round subsets of floor(N / T) items with
/// concentration beta. `label_of` maps item ids to classes.
PartitionManifest hierarchical_split(LabeledPool& pool, const std::vector<int>& label_of,
                                     std::size_t M, std::size_t T, std::size_t N, double alpha,
                                     double beta, DerivedStream& rng);

/// Window of `window` items starting at (t * step) mod |sequence|, wrapping to
/// the start. Consecutive rounds share max(0, window - step) items.
std::vector<ItemId> overlap_window(const std::vector<ItemId>& sequence, std::size_t window,
                                   std::size_t step, std::size_t t);

/// Text manifest: a header comment, then one line per subset
/// "<client> <round> <item> <item> ...".
void write_manifest(const PartitionManifest& manifest, std::ostream& out);
PartitionManifest read_manifest(std::istream& in);

}  // namespace cflsim
