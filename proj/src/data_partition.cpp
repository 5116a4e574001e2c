#include "cflsim/data_partition.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <string>

#include "cflsim/errors.hpp"

namespace cflsim {
namespace {

std::vector<double> sample_dirichlet(const std::vector<double>& priors, double alpha,
                                     DerivedStream& rng) {
    std::vector<double> theta(priors.size(), 0.0);
    for (int attempt = 0; attempt < 64; ++attempt) {
        double sum = 0.0;
        for (std::size_t k = 0; k < priors.size(); ++k) {
            if (priors[k] <= 0.0) {
                theta[k] = 0.0;
                continue;
            }
            std::gamma_distribution<double> g(alpha * priors[k], 1.0);
            theta[k] = g(rng);
            sum += theta[k];
        }
        if (sum > 0.0) {
            for (double& x : theta) x /= sum;
            return theta;
        }
    }
    // Every gamma draw underflowed: fall back to a point mass drawn from the priors.
    std::discrete_distribution<std::size_t> pick(priors.begin(), priors.end());
    std::fill(theta.begin(), theta.end(), 0.0);
    theta[pick(rng)] = 1.0;
    return theta;
}

std::vector<double> remaining_fractions(const LabeledPool& pool) {
    std::vector<double> f(pool.classes.size(), 0.0);
    const double total = static_cast<double>(pool.total());
    for (std::size_t k = 0; k < f.size(); ++k)
        f[k] = static_cast<double>(pool.classes[k].size()) / total;
    return f;
}

// Drops class k from theta; if theta has no mass left on other classes, restarts
// from the pool's remaining class fractions.
void drop_class(std::vector<double>& theta, std::size_t k, const LabeledPool& pool) {
    double rest = 0.0;
    for (std::size_t j = 0; j < theta.size(); ++j)
        if (j != k && !pool.classes[j].empty()) rest += theta[j];
    if (rest > 0.0) {
        theta = renormalize(theta, k);
    } else if (pool.total() > 0) {
        theta = remaining_fractions(pool);
    }
}

}  // namespace

LabeledPool LabeledPool::from_counts(const std::vector<std::size_t>& counts) {
    LabeledPool pool;
    ItemId next = 0;
    const std::size_t total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
    if (total == 0) throw ConfigError("LabeledPool: no items");
    for (std::size_t c : counts) {
        if (c == 0) throw ConfigError("LabeledPool: every class needs at least one item");
        std::vector<ItemId> ids(c);
        std::iota(ids.begin(), ids.end(), next);
        next += c;
        pool.classes.push_back(std::move(ids));
        pool.priors.push_back(static_cast<double>(c) / static_cast<double>(total));
    }
    return pool;
}

LabeledPool LabeledPool::from_items(const std::vector<ItemId>& items, const std::vector<int>& label_of,
                                    int num_classes) {
    LabeledPool pool;
    pool.classes.resize(static_cast<std::size_t>(num_classes));
    for (ItemId id : items) {
        if (id >= label_of.size()) throw ConfigError("LabeledPool: item id without a label");
        const int y = label_of[id];
        if (y < 0 || y >= num_classes) throw ConfigError("LabeledPool: label out of range");
        pool.classes[static_cast<std::size_t>(y)].push_back(id);
    }
    const double total = static_cast<double>(items.size());
    for (const auto& cls : pool.classes)
        pool.priors.push_back(total > 0.0 ? static_cast<double>(cls.size()) / total : 0.0);
    return pool;
}

std::size_t LabeledPool::total() const {
    std::size_t n = 0;
    for (const auto& c : classes) n += c.size();
    return n;
}

std::vector<ItemId> PartitionManifest::sequence(std::size_t client) const {
    std::vector<ItemId> seq;
    for (const auto& s : subsets.at(client)) seq.insert(seq.end(), s.begin(), s.end());
    return seq;
}

std::vector<double> renormalize(const std::vector<double>& theta, std::size_t i) {
    if (i >= theta.size()) throw ConfigError("renormalize: class index out of range");
    double rest = 0.0;
    for (std::size_t j = 0; j < theta.size(); ++j)
        if (j != i) rest += theta[j];
    if (!(rest > 0.0)) throw ConfigError("renormalize: all mass is on the removed class");
    if (theta[i] == 0.0 && std::abs(rest - 1.0) <= 1e-12) return theta;
    std::vector<double> out(theta.size(), 0.0);
    for (std::size_t j = 0; j < theta.size(); ++j)
        if (j != i) out[j] = theta[j] / rest;
    return out;
}

PartitionManifest dirichlet_split(LabeledPool& pool, std::size_t M, std::size_t N, double alpha,
                                  DerivedStream& rng) {
    if (!(alpha > 0.0)) throw ConfigError("dirichlet_split: alpha must be > 0");
    if (M * N > pool.total())
        throw PoolExhaustedError("dirichlet_split: " + std::to_string(M) + " x " + std::to_string(N) +
                                 " items requested from a pool of " + std::to_string(pool.total()));
    if (pool.priors.size() != pool.classes.size())
        throw ConfigError("dirichlet_split: priors and classes differ in length");

    PartitionManifest manifest;
    manifest.alpha = alpha;
    manifest.subset_size = N;
    manifest.subsets.resize(M);
    for (std::size_t m = 0; m < M; ++m) {
        std::vector<double> theta = sample_dirichlet(pool.priors, alpha, rng);
        for (std::size_t k = 0; k < theta.size(); ++k)
            if (pool.classes[k].empty() && theta[k] > 0.0) drop_class(theta, k, pool);

        std::vector<ItemId> drawn;
        drawn.reserve(N);
        while (drawn.size() < N) {
            std::discrete_distribution<std::size_t> pick_class(theta.begin(), theta.end());
            const std::size_t k = pick_class(rng);
            auto& cls = pool.classes[k];
            if (cls.empty()) {
                drop_class(theta, k, pool);
                continue;
            }
            std::uniform_int_distribution<std::size_t> pick_item(0, cls.size() - 1);
            const std::size_t j = pick_item(rng);
            drawn.push_back(cls[j]);
            cls[j] = cls.back();
            cls.pop_back();
            if (cls.empty()) drop_class(theta, k, pool);
        }
        manifest.subsets[m].push_back(std::move(drawn));
    }
    return manifest;
}

PartitionManifest hierarchical_split(LabeledPool& pool, const std::vector<int>& label_of,
                                     std::size_t M, std::size_t T, std::size_t N, double alpha,
                                     double beta, DerivedStream& rng) {
    if (M == 0 || T == 0) throw ConfigError("hierarchical_split: M and T must be >= 1");
    const std::size_t local = N / T;
    if (local == 0)
        throw ConfigError("hierarchical_split: " + std::to_string(N) + " items per client cannot fill " +
                          std::to_string(T) + " subsets");
    const PartitionManifest top = dirichlet_split(pool, M, N, alpha, rng);
    const int num_classes = static_cast<int>(pool.classes.size());

    PartitionManifest out;
    out.alpha = alpha;
    out.beta = beta;
    out.subset_size = local;
    out.subsets.resize(M);
    for (std::size_t i = 0; i < M; ++i) {
        LabeledPool client_pool = LabeledPool::from_items(top.subsets[i].front(), label_of, num_classes);
        PartitionManifest inner = dirichlet_split(client_pool, T, local, beta, rng);
        for (auto& s : inner.subsets) out.subsets[i].push_back(std::move(s.front()));
    }
    return out;
}

std::vector<ItemId> overlap_window(const std::vector<ItemId>& sequence, std::size_t window,
                                   std::size_t step, std::size_t t) {
    if (step == 0) throw ConfigError("overlap_window: step must be >= 1");
    if (window > sequence.size())
        throw ConfigError("overlap_window: window " + std::to_string(window) +
                          " exceeds sequence length " + std::to_string(sequence.size()));
    const std::size_t n = sequence.size();
    const std::size_t start = ((t % n) * (step % n)) % n;
    std::vector<ItemId> out;
    out.reserve(window);
    for (std::size_t j = 0; j < window; ++j) out.push_back(sequence[(start + j) % n]);
    return out;
}

void write_manifest(const PartitionManifest& manifest, std::ostream& out) {
    out << "# cflsim partition manifest v1\n";
    out << "# clients=" << manifest.clients() << " alpha=" << manifest.alpha
        << " beta=" << manifest.beta << " seed=" << manifest.seed
        << " subset_size=" << manifest.subset_size << '\n';
    for (std::size_t i = 0; i < manifest.subsets.size(); ++i) {
        for (std::size_t r = 0; r < manifest.subsets[i].size(); ++r) {
            out << i << ' ' << r;
            for (ItemId id : manifest.subsets[i][r]) out << ' ' << id;
            out << '\n';
        }
    }
}

PartitionManifest read_manifest(std::istream& in) {
    PartitionManifest m;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream hs(line.substr(1));
            std::string tok;
            while (hs >> tok) {
                const auto eq = tok.find('=');
                if (eq == std::string::npos) continue;
                const std::string key = tok.substr(0, eq);
                const std::string val = tok.substr(eq + 1);
                if (key == "alpha") m.alpha = std::stod(val);
                else if (key == "beta") m.beta = std::stod(val);
                else if (key == "seed") m.seed = std::stoull(val);
                else if (key == "subset_size") m.subset_size = std::stoull(val);
            }
            continue;
        }
        std::istringstream ls(line);
        std::size_t client = 0, round = 0;
        if (!(ls >> client >> round))
            throw ConfigError("manifest line " + std::to_string(lineno) + ": expected '<client> <round> ...'");
        if (m.subsets.size() <= client) m.subsets.resize(client + 1);
        auto& rounds = m.subsets[client];
        if (rounds.size() <= round) rounds.resize(round + 1);
        ItemId id = 0;
        while (ls >> id) rounds[round].push_back(id);
        if (!ls.eof()) throw ConfigError("manifest line " + std::to_string(lineno) + ": bad item id");
    }
    return m;
}

}  // namespace cflsim
