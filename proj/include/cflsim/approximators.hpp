#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <vector>

#include "cflsim/objectives.hpp"
#include "cflsim/rng.hpp"
#include "cflsim/round_weights.hpp"

namespace cflsim {

/// Second-order surrogate of a past objective:
///   grad f~(w) = grad_at_anchor + hessian_at_anchor (w - anchor).
struct ApproxObjective {
    Vector anchor;
    Vector grad_at_anchor;
    Matrix hessian_at_anchor;
    int origin_round = 0;
};

ApproxObjective taylor_fit(const Objective& obj, const Vector& anchor, int origin_round = 0);

Vector approx_gradient(const ApproxObjective& approx, const Vector& w);

/// Adds a random symmetric matrix of spectral norm exactly eps to the Hessian.
ApproxObjective perturb_hessian(const ApproxObjective& approx, double eps, DerivedStream& rng);

/// |grad f(w) - grad f~(w)|_2.
double info_loss(const Objective& obj, const ApproxObjective& approx, const Vector& w);

/// records[tau][i] is the information loss of client i's approximation of round
/// tau. Returns 1/(tS) sum_i sum_tau records[tau][i].
double avg_info_loss(const std::vector<std::vector<double>>& records, int t, int S);

struct CoreSet {
    std::vector<std::size_t> indices;
    std::size_t capacity = 0;
};

/// min(m, n) distinct indices, uniform without replacement.
CoreSet select_core_set_naive(const SampleSet& samples, std::size_t m, DerivedStream& rng);

using FeatureFn = std::function<Vector(const Vector&)>;

/// Greedy herding: the k-th exemplar brings the running exemplar mean closest
/// to the full feature mean. Exemplars are distinct; ties go to the lowest index.
CoreSet select_core_set_icarl(const SampleSet& samples, std::size_t m, const FeatureFn& feature_fn = {});

SampleSet subset(const SampleSet& samples, const CoreSet& core);

using EnergyGrad = std::function<Vector(const Vector&)>;

/// n independent chains x <- x - eta grad E(x) + N(0, sigma^2 I), started
/// uniformly in [-1, 1]^d. Returns the final states; targets are left at zero
/// for the caller's labeling rule.
SampleSet mcmc_generate(const EnergyGrad& energy_grad, std::size_t n, double eta, double sigma,
                        int steps, int d, DerivedStream& rng);

/// One remembered past round. `truth` is the exact objective the approximation
/// stands in for; it is kept only to measure information loss.
struct HistoryEntry {
    ApproxObjective approx;
    std::optional<QuadraticObjective> truth;
};

/// Bounded FIFO of past-round approximations.
class HistoryBuffer {
public:
    static constexpr std::size_t kDefaultCapacity = 40;

    explicit HistoryBuffer(std::size_t capacity = kDefaultCapacity);

    void push(HistoryEntry entry);
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }
    std::size_t capacity() const noexcept { return capacity_; }
    const HistoryEntry& operator[](std::size_t i) const { return entries_[i]; }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

private:
    std::size_t capacity_;
    std::deque<HistoryEntry> entries_;
};

/// p_t * current_grad + sum_tau p_tau * approx_gradient(history[tau], w).
/// weights must have history.size() + 1 entries, current last.
Vector cfl_combined_gradient(const Vector& current_grad, const HistoryBuffer& history,
                             const RoundWeights& weights, const Vector& w);

}  // namespace cflsim
