#pragma once

// Exact finite filtered probability space on a non-recombining tree.
// Time is discrete, t = 0..depth; the time-t sigma-field is generated by the
// path prefix of length t, so every F_t-measurable quantity is a function of
// the time-t node. All expectations are finite sums over leaves; this is the
// brute-force oracle the rest of the library is checked against.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "thintime/errors.hpp"

namespace thintime {

constexpr int kTimeInf = std::numeric_limits<int>::max();
constexpr std::size_t kLeafCap = 1u << 16;  // enumeration cap: 16 binary steps

struct TreeNode {
    std::size_t parent = 0;       // index within previous level
    std::size_t first_child = 0;  // index within next level
    std::size_t n_children = 0;
    std::size_t leaf_begin = 0;   // contiguous span of leaves through this node
    std::size_t leaf_end = 0;
    double prob = 0.0;            // unconditional probability (sum of leaf span)
    std::vector<double> branch_probs;
};

// Branching specification for one level: one entry shared by all nodes of the
// level, or one entry per node (lexicographic node order).
using LevelBranching = std::vector<std::vector<double>>;

class TreeModel {
  public:
    int depth() const { return static_cast<int>(levels_.size()) - 1; }
    std::size_t n_leaves() const { return levels_.back().size(); }
    std::size_t n_nodes(int t) const { return levels_[static_cast<std::size_t>(t)].size(); }
    const TreeNode& node(int t, std::size_t j) const { return levels_[static_cast<std::size_t>(t)][j]; }
    // Ancestor node index of a leaf at time t.
    std::size_t node_of(std::size_t leaf, int t) const { return leaf_to_node_[static_cast<std::size_t>(t)][leaf]; }
    double leaf_prob(std::size_t leaf) const { return leaf_probs_[leaf]; }
    const std::vector<double>& leaf_probs() const { return leaf_probs_; }

    friend TreeModel build_tree(const std::vector<LevelBranching>& spec);

  private:
    std::vector<std::vector<TreeNode>> levels_;
    std::vector<std::vector<std::size_t>> leaf_to_node_;  // [t][leaf]
    std::vector<double> leaf_probs_;
};

// Leaf-indexed random variable (F_depth-measurable).
struct RandomVariable {
    std::vector<double> values;
};

// Node-indexed process: one value per (time, node), plus a time-0 pre-value
// so that the left limit at 0 is representable (jump at 0 convention).
struct AdaptedProcess {
    std::vector<std::vector<double>> at;  // at[t][node]
    double pre0 = 0.0;

    double left_value(const TreeModel& tree, int t, std::size_t leaf) const {
        if (t == 0) return pre0;
        return at[static_cast<std::size_t>(t) - 1][tree.node_of(leaf, t - 1)];
    }
};

// (leaf, time)-indexed process; possibly non-adapted.
struct RawProcess {
    std::size_t n_leaves = 0;
    int n_times = 0;  // depth + 1
    std::vector<double> v;

    double& operator()(std::size_t leaf, int t) { return v[leaf * static_cast<std::size_t>(n_times) + static_cast<std::size_t>(t)]; }
    double operator()(std::size_t leaf, int t) const { return v[leaf * static_cast<std::size_t>(n_times) + static_cast<std::size_t>(t)]; }

    static RawProcess zeros(std::size_t n_leaves, int depth) {
        RawProcess p;
        p.n_leaves = n_leaves;
        p.n_times = depth + 1;
        p.v.assign(n_leaves * static_cast<std::size_t>(depth + 1), 0.0);
        return p;
    }
};

// Leaf-indexed random time with values in {0..depth} or kTimeInf.
struct StoppingTimeMap {
    std::vector<int> time;
};

inline TreeModel build_tree(const std::vector<LevelBranching>& spec) {
    if (spec.empty()) fail(ErrorKind::DepthZero, "tree depth must be >= 1");
    const int depth = static_cast<int>(spec.size());

    TreeModel tree;
    tree.levels_.resize(static_cast<std::size_t>(depth) + 1);
    tree.levels_[0].resize(1);

    for (int t = 0; t < depth; ++t) {
        auto& level = tree.levels_[static_cast<std::size_t>(t)];
        const LevelBranching& b = spec[static_cast<std::size_t>(t)];
        if (b.size() != 1 && b.size() != level.size())
            fail(ErrorKind::ShapeMismatch,
                 "level " + std::to_string(t) + " spec has " + std::to_string(b.size()) +
                     " entries for " + std::to_string(level.size()) + " nodes");
        std::size_t next_count = 0;
        for (std::size_t j = 0; j < level.size(); ++j) {
            const std::vector<double>& probs = b.size() == 1 ? b[0] : b[j];
            if (probs.size() < 2)
                fail(ErrorKind::ShapeMismatch, "every node needs at least 2 branches");
            double sum = 0.0;
            for (double p : probs) {
                if (!(p > 0.0)) fail(ErrorKind::NonPositiveProbability, "transition probability must be > 0");
                sum += p;
            }
            if (std::abs(sum - 1.0) > 1e-12)
                fail(ErrorKind::ProbabilitySumMismatch,
                     "transition probabilities at level " + std::to_string(t) + " sum to " + std::to_string(sum));
            level[j].branch_probs = probs;
            level[j].first_child = next_count;
            level[j].n_children = probs.size();
            next_count += probs.size();
        }
        if (next_count > kLeafCap) fail(ErrorKind::ShapeMismatch, "leaf count exceeds enumeration cap");
        auto& next = tree.levels_[static_cast<std::size_t>(t) + 1];
        next.resize(next_count);
        for (std::size_t j = 0; j < level.size(); ++j)
            for (std::size_t c = 0; c < level[j].n_children; ++c) next[level[j].first_child + c].parent = j;
    }

    // Leaf probabilities: product of transitions along each path.
    const std::size_t n_leaves = tree.levels_.back().size();
    tree.leaf_probs_.assign(n_leaves, 0.0);
    {
        std::vector<double> cur{1.0};
        for (int t = 0; t < depth; ++t) {
            const auto& level = tree.levels_[static_cast<std::size_t>(t)];
            std::vector<double> next(tree.levels_[static_cast<std::size_t>(t) + 1].size());
            for (std::size_t j = 0; j < level.size(); ++j)
                for (std::size_t c = 0; c < level[j].n_children; ++c)
                    next[level[j].first_child + c] = cur[j] * level[j].branch_probs[c];
            cur = std::move(next);
        }
        tree.leaf_probs_ = std::move(cur);
    }

    // Leaf spans per node and ancestor lookup.
    tree.leaf_to_node_.assign(static_cast<std::size_t>(depth) + 1, std::vector<std::size_t>(n_leaves));
    for (std::size_t leaf = 0; leaf < n_leaves; ++leaf) tree.leaf_to_node_[static_cast<std::size_t>(depth)][leaf] = leaf;
    for (int t = depth; t >= 0; --t) {
        auto& level = tree.levels_[static_cast<std::size_t>(t)];
        if (t == depth) {
            for (std::size_t j = 0; j < level.size(); ++j) {
                level[j].leaf_begin = j;
                level[j].leaf_end = j + 1;
                level[j].prob = tree.leaf_probs_[j];
            }
        } else {
            const auto& next = tree.levels_[static_cast<std::size_t>(t) + 1];
            for (std::size_t j = 0; j < level.size(); ++j) {
                level[j].leaf_begin = next[level[j].first_child].leaf_begin;
                level[j].leaf_end = next[level[j].first_child + level[j].n_children - 1].leaf_end;
                double p = 0.0;  // span sum, so indicator ratios of supersets are exactly 1
                for (std::size_t leaf = level[j].leaf_begin; leaf < level[j].leaf_end; ++leaf)
                    p += tree.leaf_probs_[leaf];
                level[j].prob = p;
            }
            for (std::size_t j = 0; j < level.size(); ++j)
                for (std::size_t leaf = level[j].leaf_begin; leaf < level[j].leaf_end; ++leaf)
                    tree.leaf_to_node_[static_cast<std::size_t>(t)][leaf] = j;
        }
    }

    double total = 0.0;
    for (double p : tree.leaf_probs_) total += p;
    if (std::abs(total - 1.0) > 1e-12)
        fail(ErrorKind::ProbabilitySumMismatch, "leaf probabilities sum to " + std::to_string(total));
    return tree;
}

inline TreeModel build_uniform_tree(int depth, const std::vector<double>& probs) {
    if (depth < 1) fail(ErrorKind::DepthZero, "tree depth must be >= 1");
    std::vector<LevelBranching> spec(static_cast<std::size_t>(depth), LevelBranching{probs});
    return build_tree(spec);
}

inline void require_leaf_shape(const TreeModel& tree, std::size_t n, const char* what) {
    if (n != tree.n_leaves()) fail(ErrorKind::ShapeMismatch, std::string(what) + ": leaf-indexed length mismatch");
}

inline double expectation(const TreeModel& tree, const RandomVariable& x) {
    require_leaf_shape(tree, x.values.size(), "expectation");
    double s = 0.0;
    for (std::size_t leaf = 0; leaf < x.values.size(); ++leaf) s += tree.leaf_prob(leaf) * x.values[leaf];
    return s;
}

// E[x | F_t], one value per time-t node.
inline std::vector<double> conditional_expectation(const TreeModel& tree, const RandomVariable& x, int t) {
    require_leaf_shape(tree, x.values.size(), "conditional_expectation");
    if (t < 0 || t > tree.depth()) fail(ErrorKind::TimeOutOfRange, "t = " + std::to_string(t));
    std::vector<double> out(tree.n_nodes(t));
    for (std::size_t j = 0; j < out.size(); ++j) {
        const TreeNode& nd = tree.node(t, j);
        double s = 0.0;
        for (std::size_t leaf = nd.leaf_begin; leaf < nd.leaf_end; ++leaf) s += tree.leaf_prob(leaf) * x.values[leaf];
        out[j] = s / nd.prob;
    }
    return out;
}

// The martingale E[x | F_t] for all t; closed by x at t = depth.
inline AdaptedProcess martingale_closure(const TreeModel& tree, const RandomVariable& x) {
    AdaptedProcess p;
    p.at.resize(static_cast<std::size_t>(tree.depth()) + 1);
    for (int t = 0; t <= tree.depth(); ++t) p.at[static_cast<std::size_t>(t)] = conditional_expectation(tree, x, t);
    p.pre0 = p.at[0][0];
    return p;
}

inline void require_raw_shape(const TreeModel& tree, const RawProcess& raw, const char* what) {
    if (raw.n_leaves != tree.n_leaves() || raw.n_times != tree.depth() + 1 ||
        raw.v.size() != raw.n_leaves * static_cast<std::size_t>(raw.n_times))
        fail(ErrorKind::ShapeMismatch, std::string(what) + ": raw process shape mismatch");
}

// Optional projection: (°X)_t = E[X_t | F_t] node by node.
inline AdaptedProcess optional_projection(const TreeModel& tree, const RawProcess& raw) {
    require_raw_shape(tree, raw, "optional_projection");
    for (double x : raw.v)
        if (!std::isfinite(x)) fail(ErrorKind::ShapeMismatch, "optional_projection: non-finite entry");
    AdaptedProcess p;
    p.at.resize(static_cast<std::size_t>(tree.depth()) + 1);
    for (int t = 0; t <= tree.depth(); ++t) {
        auto& slice = p.at[static_cast<std::size_t>(t)];
        slice.resize(tree.n_nodes(t));
        for (std::size_t j = 0; j < slice.size(); ++j) {
            const TreeNode& nd = tree.node(t, j);
            double s = 0.0;
            for (std::size_t leaf = nd.leaf_begin; leaf < nd.leaf_end; ++leaf) s += tree.leaf_prob(leaf) * raw(leaf, t);
            slice[j] = s / nd.prob;
        }
    }
    p.pre0 = p.at[0][0];
    return p;
}

// Dual optional projection of an increasing raw process (jump at 0 allowed,
// i.e. the pre-0 value is 0). Increment at t is E[dV_t | F_t]; the duality
// E[sum H dV] = E[sum H dV°] then holds for every adapted H by construction.
inline AdaptedProcess dual_optional_projection(const TreeModel& tree, const RawProcess& raw) {
    require_raw_shape(tree, raw, "dual_optional_projection");
    for (std::size_t leaf = 0; leaf < raw.n_leaves; ++leaf) {
        if (raw(leaf, 0) < -1e-12) fail(ErrorKind::NotIncreasing, "negative jump at 0");
        for (int t = 1; t <= tree.depth(); ++t)
            if (raw(leaf, t) < raw(leaf, t - 1) - 1e-12) fail(ErrorKind::NotIncreasing, "decreasing path");
    }
    AdaptedProcess p;
    p.at.resize(static_cast<std::size_t>(tree.depth()) + 1);
    p.pre0 = 0.0;
    std::vector<double> prev;  // cumulative value at parent nodes
    for (int t = 0; t <= tree.depth(); ++t) {
        auto& slice = p.at[static_cast<std::size_t>(t)];
        slice.resize(tree.n_nodes(t));
        for (std::size_t j = 0; j < slice.size(); ++j) {
            const TreeNode& nd = tree.node(t, j);
            double s = 0.0;
            for (std::size_t leaf = nd.leaf_begin; leaf < nd.leaf_end; ++leaf) {
                const double dv = t == 0 ? raw(leaf, 0) : raw(leaf, t) - raw(leaf, t - 1);
                s += tree.leaf_prob(leaf) * dv;
            }
            slice[j] = (t == 0 ? 0.0 : prev[nd.parent]) + s / nd.prob;
        }
        prev = slice;
    }
    return p;
}

struct MartingaleReport {
    double max_residual = 0.0;
    int argmax_time = -1;
    std::size_t argmax_node = 0;
    bool is_martingale(double tol = 1e-10) const { return max_residual <= tol; }
};

// max over nodes of |E[p_{t+1} | F_t] - p_t|.
inline MartingaleReport check_martingale(const TreeModel& tree, const AdaptedProcess& p) {
    MartingaleReport rep;
    for (int t = 0; t < tree.depth(); ++t) {
        const auto& cur = p.at[static_cast<std::size_t>(t)];
        const auto& nxt = p.at[static_cast<std::size_t>(t) + 1];
        for (std::size_t j = 0; j < tree.n_nodes(t); ++j) {
            const TreeNode& nd = tree.node(t, j);
            double e = 0.0;
            for (std::size_t c = 0; c < nd.n_children; ++c) e += nd.branch_probs[c] * nxt[nd.first_child + c];
            const double r = std::abs(e - cur[j]);
            if (r > rep.max_residual) {
                rep.max_residual = r;
                rep.argmax_time = t;
                rep.argmax_node = j;
            }
        }
    }
    return rep;
}

inline void validate_stopping_time(const TreeModel& tree, const StoppingTimeMap& T) {
    require_leaf_shape(tree, T.time.size(), "stopping time");
    for (int v : T.time)
        if (v != kTimeInf && (v < 0 || v > tree.depth()))
            fail(ErrorKind::TimeOutOfRange, "stopping time value " + std::to_string(v));
    // {T = s} must be a union of time-s cylinder sets.
    for (int s = 0; s <= tree.depth(); ++s) {
        for (std::size_t j = 0; j < tree.n_nodes(s); ++j) {
            const TreeNode& nd = tree.node(s, j);
            const bool first = T.time[nd.leaf_begin] == s;
            for (std::size_t leaf = nd.leaf_begin + 1; leaf < nd.leaf_end; ++leaf)
                if ((T.time[leaf] == s) != first)
                    fail(ErrorKind::ShapeMismatch, "{T=" + std::to_string(s) + "} is not a time-" +
                                                       std::to_string(s) + " cylinder union");
        }
    }
}

// Leaf-indexed value of an adapted process sampled at a stopping time
// (0 on {T = inf}).
inline std::vector<double> sample_at(const TreeModel& tree, const AdaptedProcess& p, const StoppingTimeMap& T) {
    std::vector<double> out(tree.n_leaves(), 0.0);
    for (std::size_t leaf = 0; leaf < out.size(); ++leaf) {
        const int t = T.time[leaf];
        if (t == kTimeInf) continue;
        out[leaf] = p.at[static_cast<std::size_t>(t)][tree.node_of(leaf, t)];
    }
    return out;
}

// Predictable covariation: increments <U,V>_s - <U,V>_{s-1} = E[dU_s dV_s | F_{s-1}],
// one value per time-(s-1) node, s = 1..depth. This is the discrete-time
// bracket entering the canonical decomposition.
inline std::vector<std::vector<double>> predictable_cov_increments(const TreeModel& tree, const AdaptedProcess& u,
                                                                   const AdaptedProcess& v) {
    std::vector<std::vector<double>> inc(static_cast<std::size_t>(tree.depth()));
    for (int s = 1; s <= tree.depth(); ++s) {
        auto& slice = inc[static_cast<std::size_t>(s) - 1];
        slice.resize(tree.n_nodes(s - 1));
        const auto& u_prev = u.at[static_cast<std::size_t>(s) - 1];
        const auto& u_cur = u.at[static_cast<std::size_t>(s)];
        const auto& v_prev = v.at[static_cast<std::size_t>(s) - 1];
        const auto& v_cur = v.at[static_cast<std::size_t>(s)];
        for (std::size_t j = 0; j < slice.size(); ++j) {
            const TreeNode& nd = tree.node(s - 1, j);
            double e = 0.0;
            for (std::size_t c = 0; c < nd.n_children; ++c) {
                const std::size_t child = nd.first_child + c;
                e += nd.branch_probs[c] * (u_cur[child] - u_prev[j]) * (v_cur[child] - v_prev[j]);
            }
            slice[j] = e;
        }
    }
    return inc;
}

}  // namespace thintime
